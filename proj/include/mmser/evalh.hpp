// Copyright 2026 The mmser Authors
// Accuracy, percentile-bootstrap confidence intervals, and the
// per-condition comparison report.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmser/common.hpp"

namespace mmser::eval {

// Lowest-index tie-break.
int argmax(const std::vector<double>& values);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Percentile bootstrap over resampled means; deterministic given the seed.
// Resamples are independent streams reduced in fixed order, so the result
// does not depend on how many workers computed them.
std::pair<double, double> bootstrap_ci(const std::vector<double>& correctness,
                                       int n_resamples = 1000, double level = 0.95,
                                       uint64_t seed = 0);

struct EvalResult {
  std::string condition;
  std::string variant;
  int64_t n = 0;
  int64_t correct = 0;
  double accuracy = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// "81.3 (74.6-87.3)" for accuracy 0.813, CI (0.746, 0.873).
std::string format_cell(double accuracy, double ci_low, double ci_high);

// One row per condition, one column group per variant, variant-major in
// the given order. Conditions appear in first-seen order. Variants with no
// result in a condition render "-"; conditions with no results at all are
// omitted with a warning on stderr.
std::string render_table(const std::vector<EvalResult>& results,
                         const std::vector<std::string>& variant_order);
std::string render_csv(const std::vector<EvalResult>& results,
                       const std::vector<std::string>& variant_order);

}  // namespace mmser::eval
