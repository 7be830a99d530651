// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zsq/tensor.hpp"

namespace zsq {

enum class DatasetKind { gaussian_blobs, concentric, grid_patterns };

DatasetKind dataset_kind_from_string(const std::string& s);
std::string dataset_kind_to_string(DatasetKind k);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::gaussian_blobs;
  int classes = 10;
  int dim = 16;
  int train_per_class = 200;
  int val_per_class = 50;
  double sigma = 0.15;
  std::uint64_t seed = 1;
};

struct Dataset {
  Tensor train_x;  // [N, dim]
  std::vector<int> train_y;
  Tensor val_x;
  std::vector<int> val_y;
  Tensor centers;  // [K, dim] class anchors (blobs/grid); radii for concentric
};

/// Deterministic, class-balanced synthetic task with disjoint splits.
/// Blob centers are placed at pairwise distance >= 6 sigma.
Dataset make_dataset(const DatasetSpec& spec);

}  // namespace zsq
