// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

namespace zsq {

struct SelftestResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Fast oracle checks covering every module: quantizer arithmetic and
/// round-trips, gradient vs finite differences, loss closed forms,
/// kappa-search replay, optimizer single steps, Hessian tooling on known
/// quadratics, dataset determinism, config hashing.
std::vector<SelftestResult> run_selftests();

}  // namespace zsq
