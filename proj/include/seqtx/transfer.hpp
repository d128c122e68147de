#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "seqtx/grid.hpp"
#include "seqtx/system.hpp"

namespace seqtx {

/// Spectral parameter z ∈ ℂ^d, paired with u_j as z·u_j.
using ZParam = std::vector<cplx>;

ZParam zero_param(int d);
ZParam scalar_param(cplx z);
double param_norm(const ZParam& z);

/// Preimage data of T_j sampled at the nodes of fiber j+1.  Entry (i, k) is the
/// k-th preimage of node x_i, stored with its interpolation cell on fiber j and
/// the potential and observable values there.
struct FiberStencil {
  std::size_t nodes = 0;
  std::size_t branches = 0;
  int dim = 0;
  std::vector<double> preimage;
  std::vector<std::uint32_t> left;
  std::vector<double> frac;
  std::vector<double> potential;
  std::vector<double> observable;  // (i*branches + k)*dim + c
};

/// Collocation discretization of L_z^{(j)}: grid functions on fiber j to fiber j+1.
class TransferOperator {
 public:
  TransferOperator(std::shared_ptr<const FiberStencil> stencil, Grid grid, std::int64_t fiber,
                   const ZParam& z);

  std::int64_t fiber() const { return fiber_; }
  const Grid& grid() const { return grid_; }

  GridFunction apply(const GridFunction& g) const;
  /// Transpose action on node weights: functional on fiber j+1 to fiber j.
  std::vector<cplx> apply_adjoint(std::span<const cplx> weights) const;

 private:
  std::shared_ptr<const FiberStencil> stencil_;
  Grid grid_;
  std::int64_t fiber_;
  std::vector<cplx> weight_;  // e^{φ(y)+z·u(y)} per (node, branch)
};

/// Log-normalized result of a long composition: value · e^{log_scale}.
struct Scaled {
  GridFunction value;
  double log_scale = 0.0;
};

/// Discretized transfer operators of one sequential system on a fixed grid.
class TransferContext {
 public:
  TransferContext(SequentialSystem system, std::size_t cells, double radius = 0.25);

  const SequentialSystem& system() const { return system_; }
  const Grid& grid() const { return grid_; }
  double radius() const { return radius_; }
  int dim() const { return dim_; }

  std::shared_ptr<const FiberStencil> stencil(std::int64_t j) const;
  TransferOperator op(std::int64_t j, const ZParam& z) const;

  GridFunction apply(std::int64_t j, const ZParam& z, const GridFunction& g) const;
  /// L_z^{j,n} g; n = 0 returns g.  Rescales by the running maximum.
  Scaled compose(std::int64_t j, std::size_t n, const ZParam& z, const GridFunction& g) const;

  template <class F>
  GridFunction sample(std::int64_t j, F&& f) const {
    return GridFunction::sample(grid_, j, std::forward<F>(f));
  }
  /// k-th observable component on fiber j sampled at the nodes.
  GridFunction observable(std::int64_t j, int k) const;

 private:
  void check_radius(const ZParam& z) const;

  SequentialSystem system_;
  Grid grid_;
  double radius_;
  int dim_;
  mutable std::mutex mutex_;
  mutable std::map<std::int64_t, std::shared_ptr<const FiberStencil>> stencils_;
  // Weighted operators by (fiber class, z); cleared when it grows past the cap.
  mutable std::map<std::pair<std::int64_t, std::vector<double>>,
                   std::shared_ptr<const TransferOperator>>
      ops_;
};

using LinearMap = std::function<GridFunction(const GridFunction&)>;

/// Randomized lower-bound estimate of ‖A‖ on (grid functions, sup + v):
/// constants, smoothed spikes and `trials` seeded random trigonometric sums.
double op_norm_estimate(const LinearMap& A, const Grid& grid, std::int64_t fiber, double alpha,
                        std::size_t trials, std::uint64_t seed);

/// Trial functions used by op_norm_estimate, exposed for reuse and tests.
std::vector<GridFunction> norm_trial_functions(const Grid& grid, std::int64_t fiber,
                                               std::size_t trials, std::uint64_t seed);

}  // namespace seqtx
