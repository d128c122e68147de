#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqtx/normalized.hpp"
#include "seqtx/rpf.hpp"
#include "seqtx/stats.hpp"

namespace seqtx {

/// How μ_j-distributed orbits are produced.  Forward iteration follows μ_j
/// only when μ_j is absolutely continuous (ν_j Lebesgue); the reversed Gibbs
/// chain is exact for every potential.  Auto picks forward when it is valid.
enum class SimMethod { Auto, Forward, Reverse };

struct SimConfig {
  std::size_t replicas = 20000;
  std::vector<std::size_t> rungs{256, 1024, 4096};
  std::uint64_t seed = 1;
  std::int64_t start = 0;
  /// Width of the uniform noise added after every map step.  Forward orbits of
  /// expanding maps in floating point lose one bit per doubling; the noise
  /// keeps them from collapsing onto a periodic orbit.
  double refresh = 0x1p-44;
  std::vector<double> direction;  ///< projection for scalar tests; defaults to e_1
  SimMethod method = SimMethod::Auto;

  void validate() const;
};

/// ν_j and ν_{j+1} equal the trapezoid (Lebesgue) weights to 1e-6 relative.
bool forward_orbits_valid(const GibbsFamily& family, std::int64_t j);

/// i.i.d. draws from the grid-discretized μ_j: a dual cell by cumulative
/// weight, then uniform inside it.  Draw r uses its own seeded stream.
std::vector<double> sample_initial(const GibbsFamily& family, std::int64_t j, std::size_t n,
                                   std::uint64_t seed);

/// Per-replica S_n ∈ ℝ^d at every rung: sums[r][replica * d + a].
struct BirkhoffSums {
  std::vector<std::size_t> rungs;
  int d = 0;
  std::size_t replicas = 0;
  std::vector<std::vector<double>> sums;

  /// Scalar projection S_n · v at rung r.
  std::vector<double> project(std::size_t r, std::span<const double> v) const;
};

BirkhoffSums birkhoff_sums(const SequentialSystem& sys, std::span<const double> points,
                           const SimConfig& cfg);

/// Birkhoff sums of the observables of `obs` (same maps and potentials as the
/// family's system) along reversed-chain orbits started from μ_{cfg.start}.
/// Replica i uses the stream derive_seed(cfg.seed, i).
BirkhoffSums reverse_chain_sums(const GibbsFamily& family, const SequentialSystem& obs,
                                const SimConfig& cfg);

/// μ_j(S_{j,n}) by quadrature, per component.
std::vector<double> quadrature_mean(const GibbsFamily& family, std::int64_t j, std::size_t n);

/// Sums of i.i.d. N(0,1) increments at the rungs: harness self-test input.
BirkhoffSums gaussian_control_sums(const SimConfig& cfg);

struct RungStat {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  ///< empirical Var(S_n)
  double ks = 0.0;
  double ks_sqrt_n = 0.0;
  double exceed_02 = 0.0;  ///< LIL envelope exceedance at η = 0.2
  double exceed_05 = 0.0;  ///< and at η = 0.5
  bool degenerate = false;
};

struct StatReport {
  std::vector<RungStat> rungs;
  double ks_ratio = 0.0;  ///< max/min of KS·√n over the rungs
  bool improving = false;  ///< KS at the largest rung below KS at the smallest
  bool degenerate = false;
  bool pass = false;
  /// 95% KS band 1.36/√N; every rung inside it means the law is normal up to
  /// sampling noise, the sanity verdict for the Gaussian control.
  double noise_band = 0.0;
  bool within_noise = false;
  std::string verdict;
};

/// KS distance of (S_n − centre_n)/σ̂_n to Φ per rung, σ̂_n the empirical
/// standard deviation.  Rungs with σ̂_n²/n below `variance_floor` are
/// degenerate.
StatReport clt_berry_esseen(const BirkhoffSums& sums, std::span<const double> direction,
                            std::span<const std::vector<double>> centre,
                            double variance_floor = 1e-3, double ratio_bound = 3.0);

struct LilRow {
  double eta = 0.0;
  double fraction = 0.0;
};

struct LilReport {
  std::size_t n = 0;
  std::vector<LilRow> rows;
  bool degenerate = false;
  bool pass = false;
};

/// Fraction of |S_n − centre| > (1+η)√(2σ²n log log n) at one rung.
/// Non-asymptotic proxy; pass when the η = 0.5 fraction is below `limit`.
LilReport lil_envelope(std::span<const double> sums, double centre, std::size_t n, double sigma2,
                       std::span<const double> etas = std::vector<double>{0.2, 0.5},
                       double limit = 0.05);

/// Block pattern for condition (H): lengths of the n leading and m trailing
/// blocks, separated by a gap k, starting at fiber `start`.
struct HBlocks {
  std::int64_t start = 0;
  std::vector<std::size_t> first{4};
  std::vector<std::size_t> second{4};
};

struct HReport {
  std::vector<std::size_t> k;
  std::vector<double> gap;
  std::vector<cplx> joint, product;
  /// gap(k) ≈ A δ^k fitted on k up to the first entry below `floor`, that
  /// entry taken at the floor value, so δ is an upper bound when the gap
  /// falls to roundoff.
  ExpFit fit;
  double floor = 0.0;
  std::size_t below_floor_at = 0;  ///< 0 when every gap stays above the floor
};

/// gap(k) = |μ(e^{i(X₁+X₂(k))}) − μ(e^{iX₁}) μ(e^{iX₂(k)})| with X the t-weighted
/// block sums, all by transfer-operator quadrature.  t has n + m entries.
HReport condition_H_gap(const NormalizedTransfer& tilde, const HBlocks& blocks,
                        std::span<const std::vector<double>> t, std::size_t k_max, double eps0,
                        double floor = 1e-10);

struct HMonteCarlo {
  cplx joint_mc, first_mc, second_mc;
  cplx joint_q, first_q, second_q;
  double z_joint = 0.0, z_first = 0.0, z_second = 0.0;  ///< |MC − quadrature| / SE
  bool pass = false;
};

/// Direct simulation of the three characteristic functions at one gap k.
HMonteCarlo condition_H_monte_carlo(const NormalizedTransfer& tilde, const HBlocks& blocks,
                                    std::span<const std::vector<double>> t, std::size_t k,
                                    const SimConfig& cfg);

struct MdpOptions {
  double gamma = 0.7;
  std::vector<double> x{1.0};
  std::size_t n = 4096;
  std::size_t replicas = 100000;
  std::uint64_t seed = 1;
  double band = 0.5;  ///< relative tolerance around −x²/2
};

struct MdpRow {
  double x = 0.0;
  double probability = 0.0;
  double std_error = 0.0;
  double rate = 0.0;  ///< (n / b_n²) log P(W_n > xσ̂)
  double target = 0.0;
  double relative_error = 0.0;
  std::size_t hits = 0;
  bool insufficient = false;
  bool within = false;
};

struct MdpReport {
  double b_n = 0.0;
  double sigma = 0.0;
  std::vector<MdpRow> rows;
  bool pass = false;
};

/// Importance-sampled tail probabilities along the time-reversed Gibbs chain
/// with exponentially tilted branch choices.  `sigma2` is Var(S_n)/n in the
/// projection direction.
MdpReport mdp_check(const GibbsFamily& family, std::int64_t j, const MdpOptions& opt,
                    double sigma2, std::span<const double> direction = {});

/// Same statistic for sums of i.i.d. N(0,1), with a mean-shift proposal.
MdpReport mdp_gaussian_control(const MdpOptions& opt);

struct CoboundaryReport {
  std::vector<std::size_t> rungs;
  std::vector<double> var_coboundary, var_generic;
  double var_r = 0.0;
  double slope_coboundary = 0.0, slope_generic = 0.0;
  bool bounded = false;  ///< Var ≤ 4 Var(r) + 0.01 at every rung
  bool pass = false;
};

/// Simulates u = r∘T_j − r next to the system's own observable.
CoboundaryReport coboundary_control(const GibbsFamily& family, const ScalarFn& r,
                                    const SimConfig& cfg);

}  // namespace seqtx
