#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "seqtx/stats.hpp"
#include "seqtx/transfer.hpp"

namespace seqtx {

struct RpfConfig {
  std::size_t depth = 40;
  /// Early exit once iterates on the same fiber class differ by less than this.
  double early_exit = 1e-12;
  /// Eigen-residual above which a solve is reported as non-convergent.
  double residual_tolerance = 1e-6;
  /// h values at real z below this are treated as lost positivity.
  double positivity_floor = 1e-12;
};

/// (λ_j(z), h_j, ν_j) with ν_j(1) = ν_j(h_j) = 1.
struct RpfTriplet {
  std::int64_t fiber = 0;
  ZParam z;
  cplx lambda{1.0, 0.0};
  GridFunction h;
  std::vector<cplx> nu;  ///< node weights of ν_j on fiber j
  double eigen_residual = 0.0;    ///< ‖L h_j − λ h_{j+1}‖_∞ / ‖h_{j+1}‖_∞
  double adjoint_residual = 0.0;  ///< ‖L^*ν_{j+1} − λ ν_j‖_1
  double normalization_error = 0.0;
};

/// Sequential RPF solver: h by backward iteration of L_z from fiber j − depth,
/// ν by iterating the discrete adjoint from fiber j + depth.
class RpfSolver {
 public:
  explicit RpfSolver(const TransferContext& ctx, RpfConfig cfg = {});

  const TransferContext& context() const { return ctx_; }
  const RpfConfig& config() const { return cfg_; }

  /// Throws NumericError when the eigen residual exceeds the tolerance or h
  /// loses positivity at real z.
  RpfTriplet solve(std::int64_t j, const ZParam& z) const;

  /// Normalized pieces, cached per (fiber class, z).
  GridFunction h(std::int64_t j, const ZParam& z) const;
  std::vector<cplx> nu(std::int64_t j, const ZParam& z) const;
  cplx lambda(std::int64_t j, const ZParam& z) const;

 private:
  using Key = std::pair<std::int64_t, std::vector<double>>;
  Key key(std::int64_t j, const ZParam& z) const;
  GridFunction raw_h(std::int64_t j, const ZParam& z) const;
  std::vector<cplx> raw_nu(std::int64_t j, const ZParam& z) const;

  const TransferContext& ctx_;
  RpfConfig cfg_;
  mutable std::mutex mutex_;
  mutable std::map<Key, GridFunction> h_cache_;
  mutable std::map<Key, std::vector<cplx>> nu_cache_;
  mutable std::map<Key, cplx> lambda_cache_;
};

/// Equivariant Gibbs measures μ_j = h_j^{(0)} dν_j^{(0)} as node weights.
class GibbsFamily {
 public:
  explicit GibbsFamily(const RpfSolver& solver);

  const RpfSolver& solver() const { return solver_; }
  const TransferContext& context() const { return solver_.context(); }

  const std::vector<double>& mu(std::int64_t j) const;
  GridFunction h(std::int64_t j) const;
  std::vector<double> nu(std::int64_t j) const;
  double lambda(std::int64_t j) const;
  /// Π_j(0) = log λ_j(0).
  double pressure(std::int64_t j) const { return std::log(lambda(j)); }

  double expect(std::int64_t j, const GridFunction& g) const;

  /// Pushforward of μ_j through T_j by cloud-in-cell binning of eight
  /// subcells per node cell.
  std::vector<double> pushforward(std::int64_t j) const;

 private:
  const RpfSolver& solver_;
  ZParam zero_;
  mutable std::mutex mutex_;
  mutable std::map<std::int64_t, std::vector<double>> mu_cache_;
};

// Equivariance (T_j)_*μ_j = μ_{j+1}.  `weak` moves the node masses of μ_j to
// T_j(x_i) and tests against cos(2πkx), k = 1..8; it is second order in the
// grid spacing.  The Kolmogorov and total variation distances use the binned
// pushforward and are first order because μ_j may be singular.
struct EquivarianceReport {
  double weak = 0.0;
  double kolmogorov = 0.0;
  double total_variation = 0.0;
};

EquivarianceReport equivariance_residual(const GibbsFamily& family, std::int64_t j);

/// ν(A) for A = [a, b] from node weights, each node carrying its dual cell.
double interval_measure(const Grid& grid, std::span<const double> weights, double a, double b);

struct Interval {
  double a = 0.0;
  double b = 0.0;
};

struct ConformalReport {
  double max_relative_residual = 0.0;
  std::vector<double> lhs, rhs;
};

/// ν_{j+1}(T_j A) against e^{Π_j(0)} ∫_A e^{−φ_j} dν_j on single-branch intervals.
/// Throws ParameterError for a test set that straddles a branch boundary.
ConformalReport check_conformal(const GibbsFamily& family, std::int64_t j,
                                std::span<const Interval> test_sets);

/// `count` random intervals, each inside one branch of T_j, of length at least
/// `min_fraction` of that branch.
std::vector<Interval> random_branch_intervals(const MapModel& map, std::size_t count,
                                              std::uint64_t seed, double min_fraction = 0.1);

struct DecayFit {
  std::vector<double> sequence;  ///< r_n or gap(n), n = 0..n_max
  ExpFit fit;                    ///< over n ∈ [1, n_max]
};

/// r_n = ‖L_z^{j,n} g / λ_{j,n} − ν_j(g) h_{j+n}‖ with the sup + v norm.
DecayFit check_exp_convergence(const RpfSolver& solver, std::int64_t j, const ZParam& z,
                               const GridFunction& g, std::size_t n_max);

/// gap(n) = |μ_j(g · f∘T_j^n) − μ_j(g) μ_{j+n}(f)|.
DecayFit check_decay_correlations(const GibbsFamily& family, std::int64_t j, const ScalarFn& g,
                                  const ScalarFn& f, std::size_t n_max);

}  // namespace seqtx
