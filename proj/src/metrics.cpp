// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace dmos {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  DMOS_CHECK(x.size() == y.size(), ErrorKind::ShapeMismatch,
             "correlation: length mismatch");
  DMOS_CHECK(x.size() >= 2, ErrorKind::DegenerateInput,
             "correlation: need at least 2 points");
}

// counts strict inversions in-place; merge sort
std::uint64_t count_inversions(std::vector<double>& a, std::vector<double>& tmp,
                               std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = (lo + hi) / 2;
  std::uint64_t inv = count_inversions(a, tmp, lo, mid) + count_inversions(a, tmp, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (a[j] < a[i]) {
      inv += mid - i;
      tmp[k++] = a[j++];
    } else {
      tmp[k++] = a[i++];
    }
  }
  while (i < mid) tmp[k++] = a[i++];
  while (j < hi) tmp[k++] = a[j++];
  std::copy(tmp.begin() + lo, tmp.begin() + hi, a.begin() + lo);
  return inv;
}

std::uint64_t tie_pairs(std::span<const double> sorted_vals) {
  std::uint64_t pairs = 0;
  std::size_t i = 0;
  while (i < sorted_vals.size()) {
    std::size_t j = i;
    while (j < sorted_vals.size() && sorted_vals[j] == sorted_vals[i]) ++j;
    const std::uint64_t run = j - i;
    pairs += run * (run - 1) / 2;
    i = j;
  }
  return pairs;
}

}  // namespace

double lcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  DMOS_CHECK(sxx > 0.0 && syy > 0.0, ErrorKind::DegenerateInput,
             "lcc: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> fractional_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    const double avg = 0.5 * (double(i + 1) + double(j));  // 1-based average rank
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double srcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return lcc(rx, ry);
}

double ktau(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const std::size_t n = x.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  // tie counts: n1 over x runs, n2 over y runs, n3 over joint (x, y) runs
  std::uint64_t n1 = 0, n3 = 0;
  {
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j < n && x[order[j]] == x[order[i]]) ++j;
      const std::uint64_t run = j - i;
      n1 += run * (run - 1) / 2;
      std::size_t a = i;
      while (a < j) {
        std::size_t b = a;
        while (b < j && y[order[b]] == y[order[a]]) ++b;
        const std::uint64_t jr = b - a;
        n3 += jr * (jr - 1) / 2;
        a = b;
      }
      i = j;
    }
  }
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  std::vector<double> sorted_y = ys;
  std::sort(sorted_y.begin(), sorted_y.end());
  const std::uint64_t n2 = tie_pairs(sorted_y);

  std::vector<double> tmp(n);
  const std::uint64_t discordant = count_inversions(ys, tmp, 0, n);

  const std::uint64_t n0 = std::uint64_t(n) * (n - 1) / 2;
  DMOS_CHECK(n0 > n1 && n0 > n2, ErrorKind::DegenerateInput,
             "ktau: zero variance input");
  const double concordant =
      double(n0) - double(n1) - double(n2) + double(n3) - double(discordant);
  return (concordant - double(discordant)) /
         std::sqrt(double(n0 - n1) * double(n0 - n2));
}

double mse(std::span<const double> x, std::span<const double> y) {
  DMOS_CHECK(x.size() == y.size() && !x.empty(), ErrorKind::ShapeMismatch,
             "mse: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc / double(x.size());
}

PredictionSet system_level(const PredictionSet& preds) {
  std::map<std::string, std::pair<double, std::size_t>> pred_acc;
  std::map<std::string, double> tgt_acc;
  for (const auto& r : preds.rows) {
    auto& p = pred_acc[r.system_id];
    p.first += r.predicted;
    p.second += 1;
    tgt_acc[r.system_id] += r.target;
  }
  PredictionSet out;
  for (const auto& [sys, acc] : pred_acc) {
    PredictionRow row;
    row.utterance_id = sys;
    row.system_id = sys;
    row.predicted = acc.first / double(acc.second);
    row.target = tgt_acc[sys] / double(acc.second);
    out.rows.push_back(std::move(row));
  }
  return out;
}

MetricReport compute_report(const PredictionSet& preds, MetricLevel level) {
  const PredictionSet* src = &preds;
  PredictionSet collapsed;
  if (level == MetricLevel::system) {
    collapsed = system_level(preds);
    src = &collapsed;
  }
  std::vector<double> p, t;
  p.reserve(src->rows.size());
  t.reserve(src->rows.size());
  for (const auto& r : src->rows) {
    p.push_back(r.predicted);
    t.push_back(r.target);
  }
  MetricReport rep;
  rep.level = level;
  rep.mse = mse(p, t);
  auto guard = [&](double (*fn)(std::span<const double>, std::span<const double>))
      -> std::optional<double> {
    try {
      return fn(p, t);
    } catch (const DmosError& e) {
      if (e.kind() == ErrorKind::DegenerateInput) return std::nullopt;
      throw;
    }
  };
  rep.lcc = guard(&lcc);
  rep.srcc = guard(&srcc);
  rep.ktau = guard(&ktau);
  return rep;
}

std::string format_report(const MetricReport& report) {
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("undefined");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return std::string(buf);
  };
  char msebuf[32];
  std::snprintf(msebuf, sizeof(msebuf), "%.6f", report.mse);
  std::string out = "level=";
  out += report.level == MetricLevel::utterance ? "utterance" : "system";
  out += " lcc=" + fmt(report.lcc);
  out += " srcc=" + fmt(report.srcc);
  out += " ktau=" + fmt(report.ktau);
  out += " mse=";
  out += msebuf;
  return out;
}

}  // namespace dmos
