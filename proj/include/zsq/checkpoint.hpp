// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "zsq/graph.hpp"

namespace zsq {

/// Flat binary container: magic "ZSQ1", version u32, then per-record
/// (u32 name length, name bytes, u32 rank, u64 dims..., f64 data...),
/// all little-endian. Batch-norm running stats are stored as records named
/// "<bn index>.running_mean" / ".running_var" alongside the parameters.
void save_checkpoint(const std::string& path, const Graph& g);

/// Loads records into a same-architecture graph, matching by name. Missing
/// or shape-mismatched records fail.
void load_checkpoint(const std::string& path, Graph& g);

/// Raw record access (used by tests and tools).
std::vector<std::pair<std::string, Tensor>> read_checkpoint_records(const std::string& path);

}  // namespace zsq
