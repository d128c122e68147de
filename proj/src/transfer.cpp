#include "seqtx/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "seqtx/errors.hpp"

namespace seqtx {

ZParam zero_param(int d) { return ZParam(static_cast<std::size_t>(d), cplx{0.0, 0.0}); }
ZParam scalar_param(cplx z) { return ZParam{z}; }

double param_norm(const ZParam& z) {
  double s = 0.0;
  for (const auto& c : z) s += std::norm(c);
  return std::sqrt(s);
}

TransferOperator::TransferOperator(std::shared_ptr<const FiberStencil> stencil, Grid grid,
                                   std::int64_t fiber, const ZParam& z)
    : stencil_(std::move(stencil)), grid_(grid), fiber_(fiber) {
  const FiberStencil& st = *stencil_;
  if (static_cast<int>(z.size()) != st.dim)
    throw ParameterError("spectral parameter dimension does not match the observable");
  const std::size_t entries = st.nodes * st.branches;
  weight_.resize(entries);
  for (std::size_t e = 0; e < entries; ++e) {
    cplx expo{st.potential[e], 0.0};
    for (int c = 0; c < st.dim; ++c)
      expo += z[static_cast<std::size_t>(c)] * st.observable[e * static_cast<std::size_t>(st.dim) +
                                                             static_cast<std::size_t>(c)];
    weight_[e] = std::exp(expo);
  }
}

GridFunction TransferOperator::apply(const GridFunction& g) const {
  const FiberStencil& st = *stencil_;
  if (g.size() != st.nodes) throw ParameterError("transfer: grid size mismatch");
  GridFunction out(grid_, fiber_ + 1);
  const auto* in = reinterpret_cast<const double*>(g.values().data());
  auto* o = reinterpret_cast<double*>(out.values().data());
  const auto* w = reinterpret_cast<const double*>(weight_.data());
  for (std::size_t i = 0; i < st.nodes; ++i) {
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < st.branches; ++k) {
      const std::size_t e = i * st.branches + k;
      const std::size_t c = st.left[e];
      const double f = st.frac[e];
      const double gr = (1.0 - f) * in[2 * c] + f * in[2 * c + 2];
      const double gi = (1.0 - f) * in[2 * c + 1] + f * in[2 * c + 3];
      re += w[2 * e] * gr - w[2 * e + 1] * gi;
      im += w[2 * e] * gi + w[2 * e + 1] * gr;
    }
    o[2 * i] = re;
    o[2 * i + 1] = im;
  }
  return out;
}

std::vector<cplx> TransferOperator::apply_adjoint(std::span<const cplx> weights) const {
  const FiberStencil& st = *stencil_;
  if (weights.size() != st.nodes) throw ParameterError("transfer adjoint: size mismatch");
  std::vector<cplx> out(st.nodes, cplx{0.0, 0.0});
  for (std::size_t i = 0; i < st.nodes; ++i) {
    const cplx wi = weights[i];
    for (std::size_t k = 0; k < st.branches; ++k) {
      const std::size_t e = i * st.branches + k;
      const std::size_t c = st.left[e];
      const double f = st.frac[e];
      const cplx a = wi * weight_[e];
      out[c] += (1.0 - f) * a;
      out[c + 1] += f * a;
    }
  }
  return out;
}

TransferContext::TransferContext(SequentialSystem system, std::size_t cells, double radius)
    : system_(std::move(system)), grid_(cells), radius_(radius) {
  if (!is_power_of_two(cells)) throw ParameterError("grid resolution must be a power of two");
  if (!(radius > 0.0)) throw ParameterError("admissible radius must be positive");
  dim_ = system_.observable_dim();
}

std::shared_ptr<const FiberStencil> TransferContext::stencil(std::int64_t j) const {
  const std::int64_t key = system_.fiber_key(j);
  {
    std::scoped_lock lock(mutex_);
    if (auto it = stencils_.find(key); it != stencils_.end()) return it->second;
  }
  const Fiber& fb = system_.fiber(j);
  auto st = std::make_shared<FiberStencil>();
  st->nodes = grid_.nodes();
  st->branches = static_cast<std::size_t>(fb.map->branch_count());
  st->dim = fb.observable.dim();
  const std::size_t entries = st->nodes * st->branches;
  st->preimage.resize(entries);
  st->left.resize(entries);
  st->frac.resize(entries);
  st->potential.resize(entries);
  st->observable.resize(entries * static_cast<std::size_t>(st->dim));
  for (std::size_t i = 0; i < st->nodes; ++i) {
    const double x = grid_.node(i);
    for (std::size_t k = 0; k < st->branches; ++k) {
      const std::size_t e = i * st->branches + k;
      const double y = fb.map->branches[k].inverse(x);
      if (!(y >= 0.0 && y <= 1.0)) throw NumericError("preimage left the space");
      std::size_t c;
      double f;
      grid_.locate(y, c, f);
      st->preimage[e] = y;
      st->left[e] = static_cast<std::uint32_t>(c);
      st->frac[e] = f;
      st->potential[e] = fb.potential(y);
      for (int d = 0; d < st->dim; ++d)
        st->observable[e * static_cast<std::size_t>(st->dim) + static_cast<std::size_t>(d)] =
            fb.observable(d, y);
    }
  }
  std::scoped_lock lock(mutex_);
  return stencils_.emplace(key, std::move(st)).first->second;
}

void TransferContext::check_radius(const ZParam& z) const {
  if (param_norm(z) > radius_ * (1.0 + 1e-12))
    throw ParameterError("spectral parameter outside the admissible radius");
}

TransferOperator TransferContext::op(std::int64_t j, const ZParam& z) const {
  check_radius(z);
  return TransferOperator(stencil(j), grid_, j, z);
}

GridFunction TransferContext::apply(std::int64_t j, const ZParam& z, const GridFunction& g) const {
  check_radius(z);
  std::pair<std::int64_t, std::vector<double>> key{system_.fiber_key(j), {}};
  for (const auto& c : z) {
    key.second.push_back(c.real());
    key.second.push_back(c.imag());
  }
  std::shared_ptr<const TransferOperator> A;
  {
    std::scoped_lock lock(mutex_);
    if (auto it = ops_.find(key); it != ops_.end()) A = it->second;
  }
  if (!A) {
    A = std::make_shared<const TransferOperator>(stencil(j), grid_, key.first, z);
    std::scoped_lock lock(mutex_);
    if (ops_.size() >= 64) ops_.clear();
    ops_.emplace(std::move(key), A);
  }
  GridFunction out = A->apply(g);
  out.set_fiber(j + 1);
  return out;
}

Scaled TransferContext::compose(std::int64_t j, std::size_t n, const ZParam& z,
                                const GridFunction& g) const {
  Scaled r{g, 0.0};
  r.value.set_fiber(j);
  for (std::size_t k = 0; k < n; ++k) {
    r.value = apply(j + static_cast<std::int64_t>(k), z, r.value);
    const double m = r.value.sup_norm();
    if (m > 0.0 && std::isfinite(m)) {
      r.value /= m;
      r.log_scale += std::log(m);
    } else if (!std::isfinite(m)) {
      throw NumericError("transfer composition overflowed");
    }
  }
  return r;
}

GridFunction TransferContext::observable(std::int64_t j, int k) const {
  const Fiber& fb = system_.fiber(j);
  return sample(j, [&](double x) { return cplx(fb.observable(k, x), 0.0); });
}

std::vector<GridFunction> norm_trial_functions(const Grid& grid, std::int64_t fiber,
                                               std::size_t trials, std::uint64_t seed) {
  std::vector<GridFunction> out;
  out.push_back(GridFunction::constant(grid, fiber, 1.0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  // Smoothed spikes of a few widths, Hölder with moderate seminorm.
  for (double width : {0.02, 0.05, 0.1}) {
    const double c = unif(rng);
    out.push_back(GridFunction::sample(grid, fiber, [=](double x) {
      const double s = (x - c) / width;
      return cplx(std::exp(-s * s), 0.0);
    }));
  }
  for (std::size_t t = 0; t < trials; ++t) {
    const int modes = 1 + static_cast<int>(t % 6);
    std::vector<cplx> amp(static_cast<std::size_t>(modes));
    std::vector<double> phase(static_cast<std::size_t>(modes));
    for (int k = 0; k < modes; ++k) {
      amp[static_cast<std::size_t>(k)] = cplx(gauss(rng), gauss(rng)) / static_cast<double>(k + 1);
      phase[static_cast<std::size_t>(k)] = unif(rng);
    }
    const cplx offset(gauss(rng), gauss(rng));
    out.push_back(GridFunction::sample(grid, fiber, [&](double x) {
      cplx v = offset;
      for (int k = 0; k < modes; ++k)
        v += amp[static_cast<std::size_t>(k)] *
             std::cos(two_pi * (k + 1) * (x + phase[static_cast<std::size_t>(k)]));
      return v;
    }));
  }
  return out;
}

double op_norm_estimate(const LinearMap& A, const Grid& grid, std::int64_t fiber, double alpha,
                        std::size_t trials, std::uint64_t seed) {
  double best = 0.0;
  for (const auto& g : norm_trial_functions(grid, fiber, trials, seed)) {
    const double ng = holder_norm(g, alpha);
    if (ng <= 0.0) continue;
    best = std::max(best, holder_norm(A(g), alpha) / ng);
  }
  return best;
}

}  // namespace seqtx
