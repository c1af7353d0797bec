// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmos/common.hpp"

namespace dmos {

// Pearson product-moment correlation. Throws DegenerateInput on zero variance.
double lcc(std::span<const double> x, std::span<const double> y);

// Spearman rank correlation: Pearson over fractional (average) ranks.
double srcc(std::span<const double> x, std::span<const double> y);

// Kendall tau-b (tie corrected), O(n log n) via sort + merge counting.
double ktau(std::span<const double> x, std::span<const double> y);

double mse(std::span<const double> x, std::span<const double> y);

// 1-based fractional ranks with ties averaged.
std::vector<double> fractional_ranks(std::span<const double> x);

struct PredictionRow {
  std::string utterance_id;
  std::string system_id;
  double predicted = 0.0;
  double target = 0.0;
};

struct PredictionSet {
  std::vector<PredictionRow> rows;
};

enum class MetricLevel { utterance, system };

struct MetricReport {
  MetricLevel level = MetricLevel::utterance;
  std::optional<double> lcc;   // nullopt marks a degenerate (undefined) value
  std::optional<double> srcc;
  std::optional<double> ktau;
  double mse = 0.0;
};

// Collapse to one row per system: mean predicted vs mean target, rows keyed
// and ordered by system_id.
PredictionSet system_level(const PredictionSet& preds);

// MSE is always reported; degenerate correlations come back as nullopt.
MetricReport compute_report(const PredictionSet& preds, MetricLevel level);

std::string format_report(const MetricReport& report);

}  // namespace dmos
