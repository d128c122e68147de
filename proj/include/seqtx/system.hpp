#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "seqtx/maps.hpp"

namespace seqtx {

using ScalarFn = std::function<double(double)>;

/// ℝ^d-valued observable given componentwise.
struct Observable {
  std::vector<ScalarFn> components;

  int dim() const { return static_cast<int>(components.size()); }
  double operator()(int k, double x) const { return components[static_cast<std::size_t>(k)](x); }

  static Observable zero(int d = 1);
  static Observable scalar(ScalarFn f);
};

/// Data attached to one index j of the sequence.
struct Fiber {
  std::shared_ptr<const MapModel> map;
  ScalarFn potential;
  Observable observable;
  /// Declared oscillation bound ε_j; when unset the measured oscillation is used.
  std::optional<double> epsilon;
};

/// Indexed family j ↦ (T_j, φ_j, u_j) over j ∈ ℤ.  Finite descriptions extend
/// periodically; driven systems evaluate every index directly.
class SequentialSystem {
 public:
  using Generator = std::function<Fiber(std::int64_t)>;

  static SequentialSystem periodic(std::vector<Fiber> fibers, double alpha);
  static SequentialSystem driven(Generator gen, std::size_t horizon, double alpha);

  SequentialSystem(const SequentialSystem& other);
  SequentialSystem& operator=(const SequentialSystem& other);

  const Fiber& fiber(std::int64_t j) const;
  const MapModel& map(std::int64_t j) const { return *fiber(j).map; }

  /// Identifies fibers that carry identical data (j mod period, or j itself).
  std::int64_t fiber_key(std::int64_t j) const;
  std::size_t period() const { return period_; }
  std::size_t horizon() const { return horizon_; }
  double alpha() const { return alpha_; }
  int observable_dim() const;

  /// Same maps and potentials, observables replaced by `f(j, old)`.
  SequentialSystem with_observable(
      std::function<Observable(std::int64_t, const Fiber&)> f) const;
  SequentialSystem with_potential(std::function<ScalarFn(std::int64_t, const Fiber&)> f) const;
  SequentialSystem with_alpha(double alpha) const;

 private:
  SequentialSystem(Generator gen, std::size_t period, std::size_t horizon, double alpha);

  Generator gen_;
  std::size_t period_ = 0;  // 0: aperiodic
  std::size_t horizon_ = 1;
  double alpha_ = 1.0;
  mutable std::mutex mutex_;
  mutable std::map<std::int64_t, Fiber> cache_;
};

SequentialSystem make_homogeneous(const MapModel& map, ScalarFn potential, Observable u,
                                  double alpha = 1.0);

/// T_j = f_{β(θ^j ω₀)} with θ the circle rotation by `theta_angle`.
SequentialSystem make_driven_mp_system(double theta_angle, std::function<double(double)> beta_map,
                                       std::size_t horizon, ScalarFn potential = nullptr,
                                       Observable u = {}, double omega0 = 0.0);

/// β value used at index j by make_driven_mp_system.
double driven_beta(double theta_angle, const std::function<double(double)>& beta_map,
                   std::int64_t j, double omega0 = 0.0);

struct FiberBounds {
  double oscillation = 0.0;      ///< sup φ − inf φ on the sample grid
  double epsilon = 0.0;          ///< declared ε_j or the measured oscillation
  double potential_sup = 0.0;    ///< ‖φ_j‖_∞
  double potential_seminorm = 0.0;
  double preimage_mass_sup = 0.0;  ///< sup_x Σ_{Ty=x} e^{φ(y)}
  double observable_sup = 0.0;
};

FiberBounds fiber_bounds(const SequentialSystem& sys, std::int64_t j, std::size_t cells = 4096);

struct SReport {
  double s = 0.0;
  bool below_one = false;
  std::vector<double> per_fiber;
};

/// s = sup_j e^{ε_j}(q_j L_j^α + (d_j − q_j)σ_j^{−α})/d_j over the materialized horizon.
SReport compute_s(const SequentialSystem& sys);

/// The per-fiber term of compute_s for explicit inputs.
double contraction_factor(double epsilon, int d, int q, double L, double sigma, double alpha);

}  // namespace seqtx
