// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/dataset.hpp"

#include <cmath>

#include "zsq/rng.hpp"

namespace zsq {

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "gaussian-blobs") return DatasetKind::gaussian_blobs;
  if (s == "concentric") return DatasetKind::concentric;
  if (s == "grid-patterns") return DatasetKind::grid_patterns;
  fail("unknown dataset kind: " + s);
}

std::string dataset_kind_to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::gaussian_blobs: return "gaussian-blobs";
    case DatasetKind::concentric: return "concentric";
    case DatasetKind::grid_patterns: return "grid-patterns";
  }
  return "?";
}

namespace {

Tensor blob_centers(const DatasetSpec& spec, Rng& rng) {
  const std::size_t K = static_cast<std::size_t>(spec.classes);
  const std::size_t D = static_cast<std::size_t>(spec.dim);
  const double box = 0.75;
  const double min_sep = 6.0 * spec.sigma;
  Tensor centers({K, D});
  for (std::size_t k = 0; k < K; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
      std::vector<double> c(D);
      for (std::size_t d = 0; d < D; ++d) c[d] = rng.uniform(-box, box);
      placed = true;
      for (std::size_t j = 0; j < k && placed; ++j) {
        double dist2 = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
          const double diff = c[d] - centers.at(j, d);
          dist2 += diff * diff;
        }
        if (dist2 < min_sep * min_sep) placed = false;
      }
      if (placed)
        for (std::size_t d = 0; d < D; ++d) centers.at(k, d) = c[d];
    }
    ZSQ_CHECK(placed, "make_dataset: cannot place blob centers; sigma too large for the box");
  }
  return centers;
}

Tensor grid_centers(const DatasetSpec& spec) {
  const std::size_t K = static_cast<std::size_t>(spec.classes);
  const std::size_t D = static_cast<std::size_t>(spec.dim);
  ZSQ_CHECK(D >= 2, "grid-patterns needs dim >= 2");
  const int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(K))));
  const double spacing = 6.0 * spec.sigma;
  const double off = -spacing * static_cast<double>(g - 1) / 2.0;
  Tensor centers({K, D});
  for (std::size_t k = 0; k < K; ++k) {
    centers.at(k, 0) = off + spacing * static_cast<double>(static_cast<int>(k) % g);
    centers.at(k, 1) = off + spacing * static_cast<double>(static_cast<int>(k) / g);
  }
  return centers;
}

void fill_split(const DatasetSpec& spec, const Tensor& centers, int per_class, Rng& rng,
                Tensor& x, std::vector<int>& y) {
  const std::size_t K = static_cast<std::size_t>(spec.classes);
  const std::size_t D = static_cast<std::size_t>(spec.dim);
  const std::size_t N = K * static_cast<std::size_t>(per_class);
  x = Tensor({N, D});
  y.assign(N, 0);
  std::size_t row = 0;
  for (std::size_t k = 0; k < K; ++k) {
    for (int i = 0; i < per_class; ++i, ++row) {
      y[row] = static_cast<int>(k);
      switch (spec.kind) {
        case DatasetKind::gaussian_blobs:
        case DatasetKind::grid_patterns: {
          for (std::size_t d = 0; d < D; ++d)
            x.at(row, d) = centers.at(k, d) + spec.sigma * rng.normal();
          break;
        }
        case DatasetKind::concentric: {
          // Class shells: radius r_k with radial jitter, uniform direction.
          const double r = centers.at(k, 0) + 0.5 * spec.sigma * rng.normal();
          std::vector<double> u(D);
          double norm = 0.0;
          for (std::size_t d = 0; d < D; ++d) {
            u[d] = rng.normal();
            norm += u[d] * u[d];
          }
          norm = std::sqrt(norm);
          for (std::size_t d = 0; d < D; ++d) x.at(row, d) = r * u[d] / norm;
          break;
        }
      }
    }
  }
}

}  // namespace

Dataset make_dataset(const DatasetSpec& spec) {
  ZSQ_CHECK(spec.classes >= 2, "make_dataset: need at least 2 classes");
  ZSQ_CHECK(spec.dim >= 1, "make_dataset: bad dimension");
  ZSQ_CHECK(spec.train_per_class >= 1 && spec.val_per_class >= 1,
            "make_dataset: per-class sample counts must be positive");
  ZSQ_CHECK(spec.sigma > 0.0, "make_dataset: sigma must be positive");

  Rng center_rng = Rng(spec.seed).fork(11);
  Rng train_rng = Rng(spec.seed).fork(22);
  Rng val_rng = Rng(spec.seed).fork(33);

  Dataset ds;
  switch (spec.kind) {
    case DatasetKind::gaussian_blobs:
      ds.centers = blob_centers(spec, center_rng);
      break;
    case DatasetKind::grid_patterns:
      ds.centers = grid_centers(spec);
      break;
    case DatasetKind::concentric: {
      // Shell radii spaced by 4 sigma starting away from the origin.
      Tensor radii({static_cast<std::size_t>(spec.classes), 1});
      for (int k = 0; k < spec.classes; ++k)
        radii.at(static_cast<std::size_t>(k), 0) =
            0.3 + 4.0 * spec.sigma * static_cast<double>(k);
      ds.centers = radii;
      break;
    }
  }
  fill_split(spec, ds.centers, spec.train_per_class, train_rng, ds.train_x, ds.train_y);
  fill_split(spec, ds.centers, spec.val_per_class, val_rng, ds.val_x, ds.val_y);
  return ds;
}

}  // namespace zsq
