#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "seqtx/system.hpp"

namespace seqtx {

/// Everything a run needs, read from `key = value` lines.  Unknown keys and
/// malformed values are ConfigErrors; '#' starts a comment.
struct RunConfig {
  // system
  std::string map_family = "linear";  // linear | mp
  int map_m = 2;
  double map_beta = 0.5;
  std::size_t seq_horizon = 1;
  double seq_driving_angle = 0.0;  // 0: homogeneous; otherwise driven MP
  double seq_driving_amplitude = 0.1;
  std::string potential_kind = "zero";  // zero | cos | x
  double potential_t = 0.0;
  std::string observable_kind = "cos";  // cos | sin | x | one | cos-sin
  double alpha = 1.0;

  // discretization
  std::size_t grid = 4096;
  std::size_t depth = 40;
  double radius = 0.25;
  double r0 = 0.2;

  // cones
  double cone_delta = 0.1;
  double cone_kappa = 0.0;  // 0: default rule
  double cone_zeta = 0.0;   // 0: derived ζ = s(1+δ)
  std::size_t cone_samples = 100;
  std::size_t cone_triples = 2000;

  // spectral
  std::size_t spectral_n_max = 200;
  std::vector<double> spectral_t{0.05, 0.1, 0.2};
  std::size_t spectral_norm_n_max = 40;
  std::vector<double> stability_dbeta{0.04, 0.02, 0.01};

  // simulation
  std::uint64_t seed = 1;
  std::size_t sim_replicas = 20000;
  std::vector<std::size_t> sim_rungs{256, 1024, 4096};
  std::string sim_method = "auto";  // auto | forward | reverse
  std::size_t h_k_max = 30;
  double h_t = 0.1;
  std::size_t mdp_replicas = 100000;
  double mdp_gamma = 0.7;
  std::vector<double> mdp_x{1.0};
  std::string coboundary_r = "cos";  // cos | sin | x

  // tolerance overrides
  double tol_residual = 1e-6;
  double tol_conformal = 1e-3;
  double tol_cov_hessian = 0.05;
  double tol_ks_ratio = 3.0;
  double tol_mdp_band = 0.5;

  void validate() const;
  /// Canonical text form; parse(to_text()) reproduces the config exactly.
  std::string to_text() const;
  static RunConfig parse(std::istream& in);
  static RunConfig load(const std::string& path);
  /// Applies one `key=value` assignment.
  void set(const std::string& key, const std::string& value);

  /// Canonical text of the keys that start with one of `prefixes`.
  std::string section(const std::vector<std::string>& prefixes) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

SequentialSystem build_system(const RunConfig& cfg);
ScalarFn named_function(const std::string& kind);

}  // namespace seqtx
