#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ottrim/error.hpp"

namespace ottrim {

enum class TransportMode { hard_assignment, balanced_ot, only_birth, birth_death };

enum class SpatialOperator { none, patch_variance, sobel, laplacian };

inline constexpr std::array<std::string_view, 4> kTransportModeNames = {
    "hard_assignment", "balanced_ot", "only_birth", "birth_death"};
inline constexpr std::array<std::string_view, 4> kSpatialOperatorNames = {
    "none", "patch_variance", "sobel", "laplacian"};

inline std::string to_string(TransportMode m) {
  return std::string(kTransportModeNames[static_cast<std::size_t>(m)]);
}

inline std::string to_string(SpatialOperator op) {
  return std::string(kSpatialOperatorNames[static_cast<std::size_t>(op)]);
}

inline TransportMode parse_transport_mode(std::string_view s) {
  for (std::size_t i = 0; i < kTransportModeNames.size(); ++i)
    if (kTransportModeNames[i] == s) return static_cast<TransportMode>(i);
  throw ConfigError("unknown transport mode '" + std::string(s) + "'");
}

inline SpatialOperator parse_spatial_operator(std::string_view s) {
  for (std::size_t i = 0; i < kSpatialOperatorNames.size(); ++i)
    if (kSpatialOperatorNames[i] == s) return static_cast<SpatialOperator>(i);
  throw ConfigError("unknown spatial operator '" + std::string(s) + "'");
}

/// Hyperparameters for one compression run. Defaults are the published
/// operating point (epsilon 0.1, slack penalties 0.35, 20 Sinkhorn sweeps).
struct RunConfig {
  double epsilon_ot = 0.1;
  double c_birth = 0.35;
  double c_death = 0.35;
  int sinkhorn_iters = 20;
  double lambda_birth = 1.0;
  double eta_forensic = 1.0;
  double ratio = 0.1;
  double epsilon_norm = 1e-8;
  TransportMode transport_mode = TransportMode::birth_death;
  SpatialOperator spatial_operator = SpatialOperator::laplacian;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw DomainError("ratio must be in (0,1]");
    if (!(epsilon_ot > 0.0) || !std::isfinite(epsilon_ot))
      throw DomainError("epsilon_ot must be positive");
    if (!(epsilon_norm > 0.0) || !std::isfinite(epsilon_norm))
      throw DomainError("epsilon_norm must be positive");
    if (!(c_birth >= 0.0) || !(c_death >= 0.0) || !std::isfinite(c_birth) ||
        !std::isfinite(c_death))
      throw DomainError("c_birth and c_death must be nonnegative");
    if (!(lambda_birth >= 0.0) || !(eta_forensic >= 0.0))
      throw DomainError("lambda_birth and eta_forensic must be nonnegative");
    if (sinkhorn_iters < 1) throw DomainError("sinkhorn_iters must be at least 1");
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"epsilon_ot", c.epsilon_ot},
                     {"c_birth", c.c_birth},
                     {"c_death", c.c_death},
                     {"sinkhorn_iters", c.sinkhorn_iters},
                     {"lambda_birth", c.lambda_birth},
                     {"eta_forensic", c.eta_forensic},
                     {"ratio", c.ratio},
                     {"epsilon_norm", c.epsilon_norm},
                     {"transport_mode", to_string(c.transport_mode)},
                     {"spatial_operator", to_string(c.spatial_operator)},
                     {"seed", c.seed}};
}

// Missing keys keep their defaults so partial configs are accepted.
inline void from_json(const nlohmann::json& j, RunConfig& c) {
  try {
    if (j.contains("epsilon_ot")) c.epsilon_ot = j.at("epsilon_ot").get<double>();
    if (j.contains("c_birth")) c.c_birth = j.at("c_birth").get<double>();
    if (j.contains("c_death")) c.c_death = j.at("c_death").get<double>();
    if (j.contains("sinkhorn_iters")) c.sinkhorn_iters = j.at("sinkhorn_iters").get<int>();
    if (j.contains("lambda_birth")) c.lambda_birth = j.at("lambda_birth").get<double>();
    if (j.contains("eta_forensic")) c.eta_forensic = j.at("eta_forensic").get<double>();
    if (j.contains("ratio")) c.ratio = j.at("ratio").get<double>();
    if (j.contains("epsilon_norm")) c.epsilon_norm = j.at("epsilon_norm").get<double>();
    if (j.contains("transport_mode"))
      c.transport_mode = parse_transport_mode(j.at("transport_mode").get<std::string>());
    if (j.contains("spatial_operator"))
      c.spatial_operator = parse_spatial_operator(j.at("spatial_operator").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

}  // namespace ottrim
