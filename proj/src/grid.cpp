#include "seqtx/grid.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "seqtx/errors.hpp"

namespace seqtx {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

Grid::Grid(std::size_t cells) : cells_(cells) {
  if (cells < 2) throw ParameterError("grid needs at least two cells");
}

void Grid::locate(double y, std::size_t& left, double& frac) const {
  const double s = std::clamp(y, 0.0, 1.0) * static_cast<double>(cells_);
  auto k = static_cast<std::size_t>(s);
  if (k >= cells_) k = cells_ - 1;
  left = k;
  frac = s - static_cast<double>(k);
}

double Grid::trapezoid_weight(std::size_t i) const {
  const double w = spacing();
  return (i == 0 || i == cells_) ? 0.5 * w : w;
}

GridFunction::GridFunction(Grid grid, std::int64_t fiber)
    : grid_(grid), fiber_(fiber), values_(grid.nodes(), cplx{0.0, 0.0}) {}

GridFunction::GridFunction(Grid grid, std::int64_t fiber, std::vector<cplx> values)
    : grid_(grid), fiber_(fiber), values_(std::move(values)) {
  if (values_.size() != grid_.nodes())
    throw ParameterError("grid function length does not match grid");
}

GridFunction GridFunction::constant(Grid grid, std::int64_t fiber, cplx c) {
  GridFunction g(grid, fiber);
  std::fill(g.values_.begin(), g.values_.end(), c);
  return g;
}

cplx GridFunction::operator()(double x) const {
  std::size_t k;
  double f;
  grid_.locate(x, k, f);
  return (1.0 - f) * values_[k] + f * values_[k + 1];
}

double GridFunction::sup_norm() const {
  double m = 0.0;
  for (const auto& v : values_) m = std::max(m, std::abs(v));
  return m;
}

double GridFunction::inf_real() const {
  double m = values_.front().real();
  for (const auto& v : values_) m = std::min(m, v.real());
  return m;
}

double GridFunction::sup_real() const {
  double m = values_.front().real();
  for (const auto& v : values_) m = std::max(m, v.real());
  return m;
}

bool GridFunction::is_real(double tol) const {
  return std::all_of(values_.begin(), values_.end(),
                     [tol](const cplx& v) { return std::abs(v.imag()) <= tol; });
}

std::vector<double> GridFunction::real_part() const {
  std::vector<double> r(values_.size());
  std::transform(values_.begin(), values_.end(), r.begin(),
                 [](const cplx& v) { return v.real(); });
  return r;
}

GridFunction& GridFunction::operator+=(const GridFunction& o) {
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
  return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& o) {
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
  return *this;
}

GridFunction& GridFunction::operator*=(cplx a) {
  for (auto& v : values_) v *= a;
  return *this;
}

GridFunction& GridFunction::operator/=(cplx a) {
  for (auto& v : values_) v /= a;
  return *this;
}

GridFunction GridFunction::pointwise(const GridFunction& o) const {
  GridFunction r(*this);
  for (std::size_t i = 0; i < values_.size(); ++i) r.values_[i] *= o.values_[i];
  return r;
}

double SeminormEstimator::operator()(const GridFunction& g, double alpha) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in (0,1]");
  const Grid& grid = g.grid();
  const std::size_t n = grid.nodes();
  const auto vals = g.values();
  double best = 0.0;
  // Distances are powers of k·h; precompute the denominators per offset.
  const std::size_t w = std::min(window, n - 1);
  std::vector<double> denom(w + 1);
  for (std::size_t k = 1; k <= w; ++k)
    denom[k] = std::pow(static_cast<double>(k) * grid.spacing(), alpha);
  // std::complex is layout-compatible with double[2].
  const double* v = reinterpret_cast<const double*>(vals.data());
  for (std::size_t k = 1; k <= w; ++k) {
    // Four independent running maxima keep the loop free of a serial dependency.
    double m[4] = {0.0, 0.0, 0.0, 0.0};
    const std::size_t count = n - k;
    std::size_t i = 0;
    for (; i + 4 <= count; i += 4) {
      for (std::size_t l = 0; l < 4; ++l) {
        const double dr = v[2 * (i + l + k)] - v[2 * (i + l)];
        const double di = v[2 * (i + l + k) + 1] - v[2 * (i + l) + 1];
        const double q = dr * dr + di * di;
        m[l] = q > m[l] ? q : m[l];
      }
    }
    for (; i < count; ++i) {
      const double dr = v[2 * (i + k)] - v[2 * i], di = v[2 * (i + k) + 1] - v[2 * i + 1];
      const double q = dr * dr + di * di;
      m[0] = q > m[0] ? q : m[0];
    }
    const double mk = std::max(std::max(m[0], m[1]), std::max(m[2], m[3]));
    best = std::max(best, std::sqrt(mk) / denom[k]);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t p = 0; p < random_pairs; ++p) {
    const std::size_t a = pick(rng), b = pick(rng);
    if (a == b) continue;
    const double d = std::abs(grid.node(a) - grid.node(b));
    best = std::max(best, std::abs(vals[a] - vals[b]) / std::pow(d, alpha));
  }
  return best;
}

double holder_seminorm(const GridFunction& g, double alpha) {
  return SeminormEstimator{}(g, alpha);
}

double holder_norm(const GridFunction& g, double alpha) {
  return g.sup_norm() + holder_seminorm(g, alpha);
}

cplx integrate(std::span<const double> weights, const GridFunction& g) {
  if (weights.size() != g.size()) throw ParameterError("weight vector length mismatch");
  cplx s{0.0, 0.0};
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * g[i];
  return s;
}

cplx integrate(std::span<const cplx> weights, const GridFunction& g) {
  if (weights.size() != g.size()) throw ParameterError("weight vector length mismatch");
  cplx s{0.0, 0.0};
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * g[i];
  return s;
}

GridFunction project_mean(const GridFunction& g, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("mean weights are not normalized");
  return GridFunction::constant(g.grid(), g.fiber(), integrate(weights, g));
}

void write_grid_csv(std::ostream& out, const GridFunction& g, double alpha) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "# fiber=%lld N=%zu alpha=%.17g schema_version=%d\n",
                static_cast<long long>(g.fiber()), g.grid().cells(), alpha, kSchemaVersion);
  out << buf << "x,re,im\n";
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", g.grid().node(i), g[i].real(),
                  g[i].imag());
    out << buf;
  }
}

GridFunction read_grid_csv(std::istream& in, double* alpha) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
    throw ParameterError("grid file: missing header line");
  long long fiber = 0;
  std::size_t cells = 0;
  double a = 1.0;
  if (std::sscanf(line.c_str(), "# fiber=%lld N=%zu alpha=%lf", &fiber, &cells, &a) != 3)
    throw ParameterError("grid file: malformed header '" + line + "'");
  std::getline(in, line);  // column names
  Grid grid(cells);
  std::vector<cplx> vals;
  vals.reserve(grid.nodes());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double x, re, im;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &x, &re, &im) != 3)
      throw ParameterError("grid file: malformed row '" + line + "'");
    vals.emplace_back(re, im);
  }
  if (alpha) *alpha = a;
  return GridFunction(grid, fiber, std::move(vals));
}

}  // namespace seqtx
