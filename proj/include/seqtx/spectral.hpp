#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqtx/normalized.hpp"
#include "seqtx/rpf.hpp"
#include "seqtx/stats.hpp"

namespace seqtx {

/// Π_j(z) = log(λ_j(z)/λ_j(0)), principal branch.  Throws NumericError when
/// the ratio leaves the right half plane.
cplx fiber_pressure(const RpfSolver& solver, std::int64_t j, const ZParam& z);

/// Π_{j,n}(z) = Σ_{k<n} Π_{j+k}(z).
cplx block_pressure(const RpfSolver& solver, std::int64_t j, std::size_t n, const ZParam& z);

struct PressureBlock {
  std::int64_t j = 0;
  std::size_t n = 0;
  std::vector<ZParam> stencil;
  std::vector<cplx> values;      ///< Π_{j,n} on the stencil
  std::vector<double> gradient;  ///< at z = 0, length d
  std::vector<double> hessian;   ///< at z = 0, d×d row-major, Richardson-extrapolated
  std::vector<double> hessian_5pt;  ///< diagonal only, five-point formula
};

/// Central differences in the real coordinate directions with step `step`
/// and step/2, combined by Richardson extrapolation.
PressureBlock pressure_block(const RpfSolver& solver, std::int64_t j, std::size_t n,
                             std::span<const ZParam> stencil, double step = 1e-3);

/// Hessian(Π_{j,n})|_0 for every n = 0..n_max (cumulative per-fiber Hessians),
/// each d×d row-major.
std::vector<std::vector<double>> hessian_curve(const RpfSolver& solver, std::int64_t j,
                                               std::size_t n_max, double step = 1e-3);

/// n ↦ Cov_{μ_j}(S_{j,n}), n = 0..n_max, by the pullback recursion
/// W_l = L̃(W_{l-1} + u_{j+l-1}) on the grid.  Observables are centered per fiber.
struct CovarianceCurve {
  int d = 0;
  std::string mode = "quadrature";
  std::vector<std::vector<double>> cov;  ///< d×d row-major per n

  double var(std::size_t n, std::span<const double> v) const;
  double var(std::size_t n) const { return cov[n][0]; }
};

CovarianceCurve covariance_curve(const GibbsFamily& family, std::int64_t j, std::size_t n_max);

struct CovHessianReport {
  std::vector<std::size_t> n;
  std::vector<double> variance;  ///< trace of Cov(S_{j,n})
  std::vector<double> hessian;   ///< trace of Hessian(Π_{j,n})(0)
  std::vector<double> difference;  ///< max entrywise |Cov − Hessian|
  double max_difference = 0.0;
};

CovHessianReport check_cov_hessian(const GibbsFamily& family, std::int64_t j,
                                   std::span<const std::size_t> n_list, double step = 1e-3);

struct NormDecayRow {
  double t = 0.0;
  std::vector<std::size_t> n;
  std::vector<double> norm;
  LineFit fit;     ///< log‖L̃_{it}^{j,n}‖ against n
  double c = 0.0;  ///< −slope / t²
  bool bounded = true;
};

struct NormDecayReport {
  std::vector<NormDecayRow> rows;
  double uniform_bound = 0.0;  ///< max norm over the whole scan
};

struct NormDecayOptions {
  std::size_t n_max = 40;
  std::size_t n_stride = 8;
  std::size_t trials = 256;
  std::uint64_t seed = 0x5eed;
  std::vector<double> direction;  ///< unit direction in ℝ^d; defaults to e_1
  double divergence = 1e6;        ///< norms above this flag a failed (U) bound
};

NormDecayReport norm_decay_scan(const NormalizedTransfer& tilde, std::int64_t j,
                                std::span<const double> t_list, const NormDecayOptions& opt);

struct VarianceGrowthReport {
  double min_ratio = 0.0;  ///< min over j, v of Cov v·v / (n|v|²)
  double min_eigen_ratio = 0.0;  ///< min over j of λ_min(Cov)/n
  std::int64_t worst_j = 0;
  std::vector<double> worst_direction;
  bool pass = false;
};

VarianceGrowthReport variance_growth_check(const GibbsFamily& family,
                                           std::span<const std::int64_t> j_list, std::size_t n,
                                           std::span<const std::vector<double>> directions,
                                           double c_min);

struct StabilityReport {
  double eps_hat = 0.0;  ///< max over fibers and stencil of ‖L_z − L_{1,z}‖
  double sup_ratio = 0.0;  ///< sup_n ‖ΔCov(n)‖ / n
  std::vector<double> ratio;  ///< ‖ΔCov(n)‖ / n, n = 1..n_max
  bool within_delta = true;
};

struct StabilityOptions {
  double r0 = 0.2;
  double delta0 = 0.0;  ///< 0 disables the ‖ΔCov‖ ≤ δ₀ n check
  std::size_t n_max = 100;
  std::size_t fibers = 1;  ///< fibers 0..fibers-1 enter ε̂
  std::size_t trials = 32;
  std::uint64_t seed = 0x5eed;
};

StabilityReport stability_scan(const GibbsFamily& base, const GibbsFamily& pert,
                               const StabilityOptions& opt);

/// Largest |eigenvalue| of a symmetric d×d matrix.
double symmetric_norm(std::span<const double> m, int d);
/// Smallest eigenvalue of a symmetric d×d matrix.
double symmetric_min_eigen(std::span<const double> m, int d);

}  // namespace seqtx
