#pragma once

/// Per-sample edge/cloud routing and the run-time/energy accounting model.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "saec/error.hpp"
#include "saec/policy.hpp"
#include "saec/quant.hpp"

namespace saec::sched {

using quant::Label;
using quant::LogitPair;

/// Selective-prediction statistics of the (temperature-scaled) edge head.
struct EdgeConfidence {
  double s_max = 0.5;   // top-1 probability
  double margin = 0.0;  // top-1 minus top-2 probability
  double h_p = 0.0;     // predictive entropy, nats
};

inline EdgeConfidence edge_confidence(LogitPair logits, double temperature) {
  const double p1 = quant::defect_probability(logits, temperature);
  const double p0 = 1.0 - p1;
  const double hi = std::max(p0, p1);
  const double lo = std::min(p0, p1);
  auto plogp = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
  return {hi, hi - lo, -(plogp(p0) + plogp(p1))};
}

/// (s_max >= tau_s) && (margin >= tau_m) && (h_p <= tau_h).
inline bool edge_accept(const EdgeConfidence& c, const RoutingPolicy& p) {
  return c.s_max >= p.tau_s && c.margin >= p.tau_m && c.h_p <= p.tau_h;
}

enum class Site { Edge, Cloud };
enum class Reason { ComplexityRoute, EdgeAccept, EdgeReject };

constexpr const char* to_string(Site s) noexcept { return s == Site::Edge ? "edge" : "cloud"; }

constexpr const char* to_string(Reason r) noexcept {
  switch (r) {
    case Reason::ComplexityRoute: return "complexity_route";
    case Reason::EdgeAccept: return "edge_accept";
    case Reason::EdgeReject: return "edge_reject";
  }
  return "unknown";
}

struct Route {
  Site site = Site::Cloud;
  Reason reason = Reason::ComplexityRoute;

  friend bool operator==(const Route&, const Route&) = default;
};

struct Decision {
  Site site = Site::Cloud;
  Reason reason = Reason::ComplexityRoute;
  Label label = Label::Good;
  double p_defect = 0.0;
};

/// Complexity gate first; the edge confidence is consulted only below tau_S.
inline Route route(double s_c, const std::optional<EdgeConfidence>& conf, const RoutingPolicy& policy) {
  if (s_c >= policy.tau_S) return {Site::Cloud, Reason::ComplexityRoute};
  if (!conf) throw Error(ErrorCode::MissingConfidence, "s_c below tau_S requires an edge confidence");
  if (edge_accept(*conf, policy)) return {Site::Edge, Reason::EdgeAccept};
  return {Site::Cloud, Reason::EdgeReject};
}

/// T_total = T_cpx + max(T_edge, T_cloud); the two branches overlap.
inline double latency_total(double t_cpx, double t_edge, double t_cloud) {
  if (!(t_cpx >= 0.0) || !(t_edge >= 0.0) || !(t_cloud >= 0.0)) {
    throw Error(ErrorCode::NegativeTime, "latency terms must be >= 0");
  }
  return t_cpx + std::max(t_edge, t_cloud);
}

inline double energy_per_correct(double total_energy_mwh, std::size_t correct) {
  if (!(total_energy_mwh >= 0.0)) throw Error(ErrorCode::InvalidArgument, "energy must be >= 0");
  if (correct == 0) throw Error(ErrorCode::NoCorrectDecisions, "energy per correct decision is undefined");
  return total_energy_mwh / static_cast<double>(correct);
}

inline constexpr double kJoulesPerMilliwattHour = 3.6;

/// Constant-power cost model. Energy = power * busy time.
struct CostModel {
  double t_cpx_per_image = 0.0;    // s
  double t_edge_per_image = 0.0;   // s
  double t_cloud_per_image = 0.0;  // s
  double p_edge = 0.0;             // W
  double p_cloud = 0.0;            // W

  void validate() const {
    for (double v : {t_cpx_per_image, t_edge_per_image, t_cloud_per_image, p_edge, p_cloud}) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::ConfigError, "cost model fields must be >= 0");
    }
  }

  double edge_energy_mwh(double busy_s) const { return p_edge * busy_s / kJoulesPerMilliwattHour; }
  double cloud_energy_mwh(double busy_s) const { return p_cloud * busy_s / kJoulesPerMilliwattHour; }
};

struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Structured output for defect decisions: normalized boxes plus opaque text.
struct DefectReport {
  std::vector<BoundingBox> bboxes;
  std::string desc;

  void validate() const {
    for (const auto& b : bboxes) {
      const bool ok = b.x >= 0.0 && b.y >= 0.0 && b.w >= 0.0 && b.h >= 0.0 && b.x <= 1.0 &&
                      b.y <= 1.0 && b.w <= 1.0 && b.h <= 1.0 && b.x + b.w <= 1.0 && b.y + b.h <= 1.0;
      if (!ok) throw Error(ErrorCode::InvalidArgument, "bounding box outside the unit square");
    }
  }
};

/// {"bboxes":[[x,y,w,h],...],"desc":"..."} with that key order.
inline nlohmann::ordered_json to_json(const DefectReport& r) {
  nlohmann::ordered_json j;
  j["bboxes"] = nlohmann::ordered_json::array();
  for (const auto& b : r.bboxes) j["bboxes"].push_back({b.x, b.y, b.w, b.h});
  j["desc"] = r.desc;
  return j;
}

inline DefectReport defect_report_from_json(const nlohmann::json& j) {
  DefectReport r;
  try {
    for (const auto& b : j.at("bboxes")) {
      if (!b.is_array() || b.size() != 4) throw Error(ErrorCode::InvalidArgument, "bbox must have 4 entries");
      r.bboxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
    }
    r.desc = j.at("desc").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed defect report: ") + e.what());
  }
  r.validate();
  return r;
}

}  // namespace saec::sched
