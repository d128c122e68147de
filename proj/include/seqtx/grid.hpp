#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace seqtx {

using cplx = std::complex<double>;

/// Uniform grid on [0,1] with N cells and N+1 nodes x_i = i/N.
class Grid {
 public:
  explicit Grid(std::size_t cells);

  std::size_t cells() const { return cells_; }
  std::size_t nodes() const { return cells_ + 1; }
  double spacing() const { return 1.0 / static_cast<double>(cells_); }
  double node(std::size_t i) const {
    return static_cast<double>(i) / static_cast<double>(cells_);
  }

  /// Left node index and fractional offset for linear interpolation at y.
  void locate(double y, std::size_t& left, double& frac) const;

  /// Weight of node i under the trapezoid rule (sums to one).
  double trapezoid_weight(std::size_t i) const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t cells_;
};

bool is_power_of_two(std::size_t n);

/// Complex-valued function sampled at the nodes of a grid on fiber j.
class GridFunction {
 public:
  GridFunction() : GridFunction(Grid(2), 0) {}
  GridFunction(Grid grid, std::int64_t fiber);
  GridFunction(Grid grid, std::int64_t fiber, std::vector<cplx> values);

  template <class F>
  static GridFunction sample(Grid grid, std::int64_t fiber, F&& f) {
    GridFunction g(grid, fiber);
    for (std::size_t i = 0; i < grid.nodes(); ++i) g.values_[i] = f(grid.node(i));
    return g;
  }
  static GridFunction constant(Grid grid, std::int64_t fiber, cplx c);

  const Grid& grid() const { return grid_; }
  std::int64_t fiber() const { return fiber_; }
  void set_fiber(std::int64_t j) { fiber_ = j; }
  std::size_t size() const { return values_.size(); }

  cplx operator[](std::size_t i) const { return values_[i]; }
  cplx& operator[](std::size_t i) { return values_[i]; }
  std::span<const cplx> values() const { return values_; }
  std::span<cplx> values() { return values_; }

  /// Linear interpolation; exact at nodes.
  cplx operator()(double x) const;

  double sup_norm() const;
  double inf_real() const;
  double sup_real() const;
  bool is_real(double tol = 0.0) const;
  std::vector<double> real_part() const;

  GridFunction& operator+=(const GridFunction& o);
  GridFunction& operator-=(const GridFunction& o);
  GridFunction& operator*=(cplx a);
  GridFunction& operator/=(cplx a);
  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(GridFunction a, cplx c) { return a *= c; }
  friend GridFunction operator*(cplx c, GridFunction a) { return a *= c; }
  GridFunction pointwise(const GridFunction& o) const;

 private:
  Grid grid_;
  std::int64_t fiber_;
  std::vector<cplx> values_;
};

/// Pair-sampling estimator of the Hölder seminorm v(g): all pairs within
/// `window` nodes of each other plus `random_pairs` seeded long-range pairs.
/// A lower bound of the continuum seminorm; always the same estimator.
struct SeminormEstimator {
  std::size_t window = 64;
  std::size_t random_pairs = 512;
  std::uint64_t seed = 0x5eed;

  double operator()(const GridFunction& g, double alpha) const;
};

double holder_seminorm(const GridFunction& g, double alpha);

/// ‖g‖ = ‖g‖_∞ + v(g).
double holder_norm(const GridFunction& g, double alpha);

/// Quadrature of a function against node weights, Σ w_i g(x_i).
cplx integrate(std::span<const double> weights, const GridFunction& g);
cplx integrate(std::span<const cplx> weights, const GridFunction& g);

/// Constant function with value μ(g); weights must sum to one.
GridFunction project_mean(const GridFunction& g, std::span<const double> weights);

// CSV file with a one-line header "# fiber=<j> N=<cells> alpha=<a>" followed
// by "x,re,im" rows.
/// Version of every file format written by the toolkit.
inline constexpr int kSchemaVersion = 1;

void write_grid_csv(std::ostream& out, const GridFunction& g, double alpha);
GridFunction read_grid_csv(std::istream& in, double* alpha = nullptr);

}  // namespace seqtx
