#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace seqtx {

enum class SpaceKind { Interval, Circle };

/// One full branch: a monotone bijection from [lo, hi] onto [0,1].
struct Branch {
  double lo = 0.0;
  double hi = 1.0;
  std::function<double(double)> forward;
  std::function<double(double)> inverse;
  /// Declared Lipschitz bound of `inverse`.
  double inverse_lipschitz = 1.0;
  /// True for the q branches that may fail to expand.
  bool contracting = false;
};

/// Full-branch piecewise map of [0,1] with declared pairing data (d, q, L, σ).
struct MapModel {
  std::string name;
  SpaceKind space = SpaceKind::Interval;
  std::vector<Branch> branches;
  int contracting_count = 0;
  double L = 1.0;
  double sigma = 2.0;

  int branch_count() const { return static_cast<int>(branches.size()); }
  double operator()(double x) const;
  /// Index of the branch whose domain contains x (right-closed except the first).
  int branch_of(double x) const;
  std::vector<double> preimages(double x) const;
};

MapModel make_mp_map(double beta);
MapModel make_linear_expanding(int m);

/// Localized slope perturbation s ↦ s − A·w/(2π)·sin(2π(s−c)/w) on [c, c+w],
/// in the local coordinate s ∈ [0,1] of one branch.
struct BumpSpec {
  int branch = 0;
  double start = 0.0;
  double width = 1.0;
  double amplitude = 0.0;
};

MapModel make_perturbed_expanding(int m, const BumpSpec& bump);

/// Solve F(y) = x for y ∈ [lo, hi] with F increasing: safeguarded Newton with
/// bisection fallback.  Throws NumericError carrying x on failure.
double invert_monotone(const std::function<double(double)>& f,
                       const std::function<double(double)>& df, double x, double lo,
                       double hi, double tol = 1e-13);

struct PairingReport {
  int d = 0;
  int q = 0;
  double L_hat = 0.0;      ///< max ratio over contracting branches (0 when q = 0)
  double sigma_hat = 0.0;  ///< 1 / max ratio over expanding branches
  std::vector<double> branch_max_ratio;
  bool consistent = true;  ///< no ratio exceeds the declared bound by more than 1e-8
};

PairingReport verify_pairing(const MapModel& map, std::size_t samples, std::uint64_t seed);

}  // namespace seqtx
