#include "seqtx/ulam.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "seqtx/errors.hpp"

namespace seqtx {

std::vector<double> UlamMatrix::apply(const std::vector<double>& v) const {
  std::vector<double> out(cells, 0.0);
  for (const auto& e : entries) out[e.row] += e.value * v[e.col];
  return out;
}

UlamMatrix build_ulam(const SequentialSystem& sys, std::int64_t j, std::size_t cells,
                      std::size_t samples_per_cell) {
  const Fiber& fb = sys.fiber(j);
  UlamMatrix m;
  m.cells = cells;
  const double w = 1.0 / static_cast<double>(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    std::map<std::uint32_t, double> row;
    for (std::size_t s = 0; s < samples_per_cell; ++s) {
      const double x = (static_cast<double>(i) + (s + 0.5) / samples_per_cell) * w;
      for (const auto& b : fb.map->branches) {
        const double y = b.inverse(x);
        auto c = static_cast<std::uint32_t>(std::min(cells - 1, static_cast<std::size_t>(y * cells)));
        row[c] += std::exp(fb.potential(y)) / static_cast<double>(samples_per_cell);
      }
    }
    for (const auto& [c, v] : row) m.entries.push_back({static_cast<std::uint32_t>(i), c, v});
  }
  return m;
}

UlamEigen ulam_dominant(const UlamMatrix& m, std::size_t max_iter, double tol) {
  std::vector<double> v(m.cells, 1.0);
  UlamEigen r;
  for (std::size_t it = 0; it < max_iter; ++it) {
    auto next = m.apply(v);
    double s = 0.0;
    for (double x : next) s += x;
    const double lam = s / static_cast<double>(m.cells);  // v has mean one
    if (!(lam > 0.0)) throw NumericError("ulam: power iteration collapsed");
    double diff = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] /= lam;
      diff = std::max(diff, std::abs(next[i] - v[i]));
    }
    v.swap(next);
    r.lambda = lam;
    r.iterations = it + 1;
    if (diff < tol) break;
  }
  r.density = std::move(v);
  return r;
}

}  // namespace seqtx
