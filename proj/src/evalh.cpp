// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/evalh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

namespace mmser::eval {

int argmax(const std::vector<double>& values) {
  if (values.empty()) raise("format", "argmax of empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[static_cast<size_t>(i)] > values[static_cast<size_t>(best)]) best = i;
  return best;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty() || predictions.size() != labels.size())
    raise("format", "predictions/labels must be nonempty and equal length");
  int64_t correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

namespace {
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}
}  // namespace

std::pair<double, double> bootstrap_ci(const std::vector<double>& correctness,
                                       int n_resamples, double level, uint64_t seed) {
  if (correctness.empty()) raise("format", "empty correctness vector");
  const size_t n = correctness.size();
  std::vector<double> means(static_cast<size_t>(n_resamples));

#pragma omp parallel for schedule(static)
  for (int r = 0; r < n_resamples; ++r) {
    Rng rng = Rng::stream(seed, static_cast<uint64_t>(r));
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) sum += correctness[rng.bounded(n)];
    means[static_cast<size_t>(r)] = sum / static_cast<double>(n);
  }

  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  return {quantile_sorted(means, alpha), quantile_sorted(means, 1.0 - alpha)};
}

std::string format_cell(double acc, double ci_low, double ci_high) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f (%.1f-%.1f)", acc * 100.0, ci_low * 100.0,
                ci_high * 100.0);
  return buf;
}

namespace {
struct Grid {
  std::vector<std::string> conditions;                 // first-seen order
  std::map<std::pair<std::string, std::string>, const EvalResult*> cells;
};

Grid build_grid(const std::vector<EvalResult>& results,
                const std::vector<std::string>& variant_order) {
  Grid grid;
  for (const auto& r : results) {
    if (std::find(grid.conditions.begin(), grid.conditions.end(), r.condition) ==
        grid.conditions.end())
      grid.conditions.push_back(r.condition);
    grid.cells[{r.condition, r.variant}] = &r;
  }
  for (auto it = grid.conditions.begin(); it != grid.conditions.end();) {
    bool any = false;
    for (const auto& v : variant_order)
      if (grid.cells.count({*it, v})) any = true;
    if (!any) {
      std::cerr << "warning: condition '" << *it << "' has no results; omitted\n";
      it = grid.conditions.erase(it);
    } else {
      ++it;
    }
  }
  return grid;
}
}  // namespace

std::string render_table(const std::vector<EvalResult>& results,
                         const std::vector<std::string>& variant_order) {
  Grid grid = build_grid(results, variant_order);

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"Condition"};
  header.insert(header.end(), variant_order.begin(), variant_order.end());
  cells.push_back(header);
  for (const auto& cond : grid.conditions) {
    std::vector<std::string> row = {cond};
    for (const auto& v : variant_order) {
      auto it = grid.cells.find({cond, v});
      row.push_back(it == grid.cells.end()
                        ? "-"
                        : format_cell(it->second->accuracy, it->second->ci_low,
                                      it->second->ci_high));
    }
    cells.push_back(row);
  }

  std::vector<size_t> widths(cells[0].size(), 0);
  for (const auto& row : cells)
    for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());

  std::ostringstream out;
  for (size_t r = 0; r < cells.size(); ++r) {
    for (size_t c = 0; c < cells[r].size(); ++c) {
      out << cells[r][c] << std::string(widths[c] - cells[r][c].size(), ' ');
      if (c + 1 < cells[r].size()) out << "  ";
    }
    out << '\n';
    if (r == 0) {
      size_t total = 0;
      for (size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c + 1 < widths.size() ? 2 : 0);
      out << std::string(total, '-') << '\n';
    }
  }
  return out.str();
}

std::string render_csv(const std::vector<EvalResult>& results,
                       const std::vector<std::string>& variant_order) {
  Grid grid = build_grid(results, variant_order);
  std::ostringstream out;
  out << "condition";
  for (const auto& v : variant_order)
    out << ',' << v << "_acc," << v << "_ci_low," << v << "_ci_high," << v << "_n";
  out << '\n';
  for (const auto& cond : grid.conditions) {
    out << cond;
    for (const auto& v : variant_order) {
      auto it = grid.cells.find({cond, v});
      if (it == grid.cells.end()) {
        out << ",,,,";
      } else {
        const EvalResult& r = *it->second;
        out << ',' << r.accuracy << ',' << r.ci_low << ',' << r.ci_high << ',' << r.n;
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace mmser::eval
