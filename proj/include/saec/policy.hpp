#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "saec/error.hpp"

namespace saec {

/// Calibrated routing thresholds.
///
/// Inputs with s_c >= tau_S go straight to the cloud. Below the cutoff the
/// edge prediction is kept only when s_max >= tau_s, margin >= tau_m and
/// entropy <= tau_h; everything else escalates. The cloud head predicts a
/// defect when p1 >= tau.
struct RoutingPolicy {
  double rho = 0.5;
  double tau_S = 0.0;
  double tau_s = 0.5;
  double tau_m = 0.0;
  double tau_h = 0.7;
  double tau = 0.5;
  double T_edge = 1.0;
  double T_cloud = 1.0;

  void validate() const {
    auto unit = [](double v, const char* key) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::ConfigError, std::string(key) + " must lie in [0,1]");
    };
    unit(rho, "rho");
    unit(tau_s, "tau_s");
    unit(tau_m, "tau_m");
    unit(tau, "tau");
    if (!(tau_h >= 0.0)) throw Error(ErrorCode::ConfigError, "tau_h must be >= 0");
    if (!std::isfinite(tau_S)) throw Error(ErrorCode::ConfigError, "tau_S must be finite");
    if (!(T_edge > 0.0) || !std::isfinite(T_edge)) throw Error(ErrorCode::ConfigError, "T_edge must be > 0");
    if (!(T_cloud > 0.0) || !std::isfinite(T_cloud)) throw Error(ErrorCode::ConfigError, "T_cloud must be > 0");
  }

  friend bool operator==(const RoutingPolicy&, const RoutingPolicy&) = default;
};

inline nlohmann::ordered_json to_json(const RoutingPolicy& p) {
  nlohmann::ordered_json j;
  j["rho"] = p.rho;
  j["tau_S"] = p.tau_S;
  j["tau_s"] = p.tau_s;
  j["tau_m"] = p.tau_m;
  j["tau_h"] = p.tau_h;
  j["tau"] = p.tau;
  j["T_edge"] = p.T_edge;
  j["T_cloud"] = p.T_cloud;
  return j;
}

inline RoutingPolicy policy_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "policy must be a JSON object");
  auto num = [&](const char* key) {
    if (!j.contains(key)) throw Error(ErrorCode::ConfigError, std::string("policy is missing key '") + key + "'");
    if (!j.at(key).is_number()) throw Error(ErrorCode::ConfigError, std::string("policy key '") + key + "' must be numeric");
    return j.at(key).get<double>();
  };
  RoutingPolicy p{num("rho"), num("tau_S"), num("tau_s"), num("tau_m"),
                  num("tau_h"), num("tau"),   num("T_edge"), num("T_cloud")};
  p.validate();
  return p;
}

inline void save_policy(const RoutingPolicy& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out << to_json(p).dump(2) << '\n';
}

inline RoutingPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return policy_from_json(j);
}

}  // namespace saec
