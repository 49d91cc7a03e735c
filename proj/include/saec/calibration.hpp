#pragma once

/// Fitting the routing policy from a held-out split: the complexity cutoff
/// from the budget rho, one temperature per head, and the edge/cloud gate
/// thresholds by exhaustive grid search.

#include <algorithm>
#include <cmath>
#include <span>
#include <tuple>
#include <vector>

#include "saec/error.hpp"
#include "saec/policy.hpp"
#include "saec/quant.hpp"
#include "saec/scheduler.hpp"

namespace saec::calib {

using quant::Label;
using quant::LogitPair;

/// Nearest-rank percentile at level (1 - rho): the element of rank
/// ceil((1 - rho) * N) in ascending order, rank clamped to [1, N].
inline double percentile_threshold(std::span<const double> scores, double rho) {
  if (scores.empty()) throw Error(ErrorCode::EmptySet, "percentile of an empty score set");
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must lie in [0,1]");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // The small slack keeps products such as 0.7 * 10 from rounding up a rank.
  const double raw = std::ceil((1.0 - rho) * n - 1e-9);
  const auto rank = static_cast<std::size_t>(std::clamp(raw, 1.0, n));
  return sorted[rank - 1];
}

struct LabeledLogits {
  LogitPair logits;
  Label label = Label::Good;
};

/// Mean NLL of softmax(logits / T) against the labels.
inline double mean_nll(std::span<const LabeledLogits> samples, double temperature) {
  double total = 0.0;
  for (const auto& s : samples) {
    const double a = s.logits.good / temperature;
    const double b = s.logits.defect / temperature;
    const double m = std::max(a, b);
    const double log_z = m + std::log(std::exp(a - m) + std::exp(b - m));
    total += log_z - (s.label == Label::Defect ? b : a);
  }
  return total / static_cast<double>(samples.size());
}

struct TemperatureSearch {
  double log_lo = std::log(0.05);
  double log_hi = std::log(20.0);
  double tolerance = 1e-4;  // absolute, on ln T
};

/// Temperature minimizing the mean NLL, by golden-section search on ln T.
/// Samples are put in a canonical order first so the result does not depend
/// on input order. Falls back to T = 1 if the search lands somewhere worse.
inline double fit_temperature(std::span<const LabeledLogits> samples, const TemperatureSearch& search = {}) {
  if (samples.size() < 10) throw Error(ErrorCode::InsufficientData, "temperature fitting needs >= 10 samples");
  bool has_good = false;
  bool has_defect = false;
  for (const auto& s : samples) {
    if (!std::isfinite(s.logits.good) || !std::isfinite(s.logits.defect)) {
      throw Error(ErrorCode::NonFiniteLogit, "calibration logits must be finite");
    }
    (s.label == Label::Defect ? has_defect : has_good) = true;
  }
  if (!has_good || !has_defect) throw Error(ErrorCode::DegenerateLabels, "held-out labels contain a single class");

  std::vector<LabeledLogits> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(), [](const LabeledLogits& x, const LabeledLogits& y) {
    return std::tie(x.logits.good, x.logits.defect, x.label) < std::tie(y.logits.good, y.logits.defect, y.label);
  });
  auto f = [&](double log_t) { return mean_nll(sorted, std::exp(log_t)); };

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = search.log_lo;
  double b = search.log_hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > search.tolerance) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double t = std::exp(0.5 * (a + b));
  return mean_nll(sorted, t) <= mean_nll(sorted, 1.0) ? t : 1.0;
}

/// One held-out sample: its complexity score, both heads' raw logits, truth.
struct CalibrationRecord {
  double s_c = 0.0;
  LogitPair edge;
  LogitPair cloud;
  Label truth = Label::Good;
};

/// Operating-point search space and constraint.
struct OperatingTargets {
  /// Cloud fraction may exceed rho by at most this much through edge rejections.
  double max_overflow = 0.1;
  double prob_step = 0.05;
  std::vector<double> entropy_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
};

namespace detail {

inline std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> out;
  const auto n = static_cast<int>(std::llround((hi - lo) / step));
  for (int i = 0; i <= n; ++i) out.push_back(lo + (hi - lo) * i / n);
  return out;
}

}  // namespace detail

/// Composes the percentile cutoff, both temperature fits and a grid search
/// over (tau_s, tau_m, tau_h, tau) maximizing held-out accuracy subject to
/// cloud fraction <= rho + max_overflow. Ties prefer larger tau_s, then
/// larger tau_m, smaller tau_h, and tau nearest 0.5. If no cell satisfies the
/// constraint, the cell with the smallest cloud fraction wins.
inline RoutingPolicy calibrate_policy(std::span<const CalibrationRecord> heldout, double rho,
                                      const OperatingTargets& targets = {}) {
  if (heldout.empty()) throw Error(ErrorCode::EmptySet, "empty held-out set");
  const std::size_t n = heldout.size();

  RoutingPolicy policy;
  policy.rho = rho;
  {
    std::vector<double> scores;
    scores.reserve(n);
    for (const auto& r : heldout) scores.push_back(r.s_c);
    policy.tau_S = percentile_threshold(scores, rho);
  }
  {
    std::vector<LabeledLogits> edge;
    std::vector<LabeledLogits> cloud;
    for (const auto& r : heldout) {
      edge.push_back({r.edge, r.truth});
      cloud.push_back({r.cloud, r.truth});
    }
    policy.T_edge = fit_temperature(edge);
    policy.T_cloud = fit_temperature(cloud);
  }

  struct Prepared {
    bool below_cutoff;
    sched::EdgeConfidence conf;
    bool edge_correct;
    double cloud_p;
    bool defect;
  };
  std::vector<Prepared> prep;
  prep.reserve(n);
  for (const auto& r : heldout) {
    const auto edge_pred = quant::decide(r.edge, {0.5, policy.T_edge});
    prep.push_back({r.s_c < policy.tau_S, sched::edge_confidence(r.edge, policy.T_edge),
                    edge_pred.label == r.truth, quant::defect_probability(r.cloud, policy.T_cloud),
                    r.truth == Label::Defect});
  }

  const auto conf_grid = detail::grid(0.5, 1.0, targets.prob_step);
  const auto margin_grid = detail::grid(0.0, 1.0, targets.prob_step);
  const auto tau_grid = detail::grid(0.0, 1.0, targets.prob_step);
  const double budget = rho + targets.max_overflow;

  // cloud_correct[t][i]: cloud head right on sample i at tau_grid[t].
  std::vector<std::vector<std::uint8_t>> cloud_correct(tau_grid.size(), std::vector<std::uint8_t>(n));
  for (std::size_t t = 0; t < tau_grid.size(); ++t)
    for (std::size_t i = 0; i < n; ++i)
      cloud_correct[t][i] = (prep[i].cloud_p >= tau_grid[t]) == prep[i].defect;

  struct Cell {
    bool feasible = false;
    std::size_t correct = 0;
    std::size_t cloud = 0;
    double tau_s = 0, tau_m = 0, tau_h = 0, tau = 0;
  };
  // True when `a` should replace `b` as the incumbent.
  auto better = [](const Cell& a, const Cell& b) {
    if (a.feasible != b.feasible) return a.feasible;
    if (a.feasible) {
      if (a.correct != b.correct) return a.correct > b.correct;
    } else if (a.cloud != b.cloud) {
      return a.cloud < b.cloud;
    }
    if (a.tau_s != b.tau_s) return a.tau_s > b.tau_s;
    if (a.tau_m != b.tau_m) return a.tau_m > b.tau_m;
    if (a.tau_h != b.tau_h) return a.tau_h < b.tau_h;
    const double da = std::abs(a.tau - 0.5);
    const double db = std::abs(b.tau - 0.5);
    if (da != db) return da < db;
    return a.tau < b.tau;
  };

  Cell best;
  bool have_best = false;
  std::vector<std::uint8_t> accepted(n);
  for (double ts : conf_grid) {
    for (double tm : margin_grid) {
      for (double th : targets.entropy_grid) {
        RoutingPolicy gate = policy;
        gate.tau_s = ts;
        gate.tau_m = tm;
        gate.tau_h = th;
        std::size_t edge_correct = 0;
        std::size_t cloud_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
          accepted[i] = prep[i].below_cutoff && sched::edge_accept(prep[i].conf, gate);
          if (accepted[i]) {
            edge_correct += prep[i].edge_correct;
          } else {
            ++cloud_count;
          }
        }
        const bool feasible = static_cast<double>(cloud_count) <= budget * static_cast<double>(n) + 1e-9;
        for (std::size_t t = 0; t < tau_grid.size(); ++t) {
          std::size_t correct = edge_correct;
          for (std::size_t i = 0; i < n; ++i)
            if (!accepted[i]) correct += cloud_correct[t][i];
          const Cell cell{feasible, correct, cloud_count, ts, tm, th, tau_grid[t]};
          if (!have_best || better(cell, best)) {
            best = cell;
            have_best = true;
          }
        }
      }
    }
  }

  policy.tau_s = best.tau_s;
  policy.tau_m = best.tau_m;
  policy.tau_h = best.tau_h;
  policy.tau = best.tau;
  policy.validate();
  return policy;
}

}  // namespace saec::calib
