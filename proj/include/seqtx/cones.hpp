#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "seqtx/transfer.hpp"

namespace seqtx {

/// Real cones C_κ = {g > 0, v(g) ≤ κ inf g} with contraction target ζ = s(1+δ).
struct ConeParams {
  double kappa = 1.0;
  double alpha = 1.0;
  double zeta = 0.75;
  double delta_slack = 0.1;
};

/// Derive ζ = s(1+δ) from the system, and κ from the default rule
/// κ = max(1, 10·sup_j v(φ_j)/ln(1+δ)) unless `kappa` > 0 is given.
/// Throws ParameterError when ζ ≥ 1 or sup_j v(φ_j) ≥ κδ.
ConeParams make_cone_params(const SequentialSystem& sys, double delta_slack, double kappa = 0.0);

struct Membership {
  bool member = false;
  double margin = 0.0;  ///< κ inf g − v(g)
};

Membership cone_member(const GridFunction& g, const ConeParams& p);

/// c(1 + s Σ a_k b_k) with Gaussian bumps and ramps, s drawn so that
/// v(g) ≤ 0.9κ inf g.  amplitude = 0 gives constants.
std::vector<GridFunction> sample_cone(const ConeParams& p, const Grid& grid, std::int64_t fiber,
                                      std::size_t count, std::uint64_t seed,
                                      double amplitude = 1.0);

/// s_{x,y,t,κ}(g) = κ g(t) − (g(x) − g(y))/ρ^α(x, y) at grid nodes.
struct GeneratingFunctional {
  std::uint32_t x = 0, y = 1, t = 0;
  double inv_rho = 1.0;  ///< 1/ρ^α(x, y)

  cplx operator()(const GridFunction& g, const ConeParams& p) const;
};

/// Every ordered adjacent node pair against `t_levels` equispaced t nodes,
/// plus `random_triples` seeded triples.
std::vector<GeneratingFunctional> generating_set(const Grid& grid, const ConeParams& p,
                                                 std::size_t random_triples, std::uint64_t seed,
                                                 std::size_t t_levels = 32);

inline constexpr double kBoundary = std::numeric_limits<double>::infinity();

/// log(max ratio / min ratio) of s(f)/s(g) over the set; kBoundary when some
/// functional vanishes on f or g.
double hilbert_distance(const GridFunction& f, const GridFunction& g, const ConeParams& p,
                        std::span<const GeneratingFunctional> set);
double hilbert_distance(const GridFunction& f, const GridFunction& g, const ConeParams& p,
                        std::size_t triple_samples, std::uint64_t seed);

/// Max pairwise Hilbert distance.
double sampled_diameter(std::span<const GridFunction> fs, const ConeParams& p,
                        std::span<const GeneratingFunctional> set);

struct InvarianceReport {
  std::size_t samples = 0;
  std::size_t passed = 0;
  double worst_ratio = 0.0;  ///< max v(Lg) / (κ inf Lg)
  double bound = 0.0;        ///< ζ
  std::size_t witness = 0;   ///< index of the worst sample
  bool pass = false;
};

/// v(L_0^{(j)} g) ≤ ζκ inf L_0^{(j)} g on sampled members of C_κ.
InvarianceReport check_invariance(const TransferContext& ctx, std::int64_t j,
                                  const ConeParams& p, std::size_t samples, std::uint64_t seed);

struct DiameterReport {
  double diameter = 0.0;
  bool finite = false;
};

/// Max Hilbert distance between images L_0^{(j)} g of sampled members.
DiameterReport estimate_diameter(const TransferContext& ctx, std::int64_t j, const ConeParams& p,
                                 std::size_t samples, std::uint64_t seed,
                                 std::size_t triple_samples = 2000);

struct ApertureReport {
  std::size_t samples = 0;
  std::size_t passed = 0;
  double worst_ratio = 0.0;  ///< max ‖g‖ / ((1+2κ) g(a))
};

ApertureReport check_aperture(const ConeParams& p, std::span<const GridFunction> samples,
                              std::size_t anchor);

/// g = Σ coeff_k · part_k with each part_k in the closed cone and
/// coeff_k ∈ {±1, ±i}.
struct Decomposition {
  std::vector<GridFunction> parts;  ///< coeff_k · part_k, summing to g
  std::vector<cplx> coeff;
  double norm_sum = 0.0;
  double bound = 0.0;  ///< 3(1+1/κ)‖g‖, doubled for non-real g
  bool members = true;
};

Decomposition cone_decompose(const GridFunction& g, const ConeParams& p);

struct PerturbationRow {
  ZParam z;
  double c_hat = 0.0;  ///< max |s(L_z g − L_0 g)| / (|z| s(L_0 g))
  std::size_t discarded = 0;
};

struct PerturbationReport {
  std::vector<PerturbationRow> rows;
  double spread = 0.0;  ///< max/min c_hat over the nonzero z
};

PerturbationReport check_perturbation(const TransferContext& ctx, std::int64_t j,
                                      const ConeParams& p, std::span<const ZParam> z_list,
                                      std::span<const GeneratingFunctional> set,
                                      std::size_t samples, std::uint64_t seed);

/// Sampled necessary condition for the complex cone: Re(conj(s₁(g)) s₂(g)) ≥ 0
/// over `pairs` seeded pairs of functionals; returns the smallest value.
double complex_cone_check(const GridFunction& g, const ConeParams& p,
                          std::span<const GeneratingFunctional> set, std::size_t pairs,
                          std::uint64_t seed);

/// |(A−A')/(B−B') − 1| against 2ε₁/(1−ζ) under B > B', |A−B| ≤ ε₁B,
/// |A'−B'| ≤ ε₁B, |B'/B| ≤ ζ.
struct FourNumber {
  bool hypotheses = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

FourNumber four_number_bound(cplx A, cplx A1, double B, double B1, double eps1, double zeta);

}  // namespace seqtx
