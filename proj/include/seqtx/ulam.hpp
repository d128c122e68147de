#pragma once

#include <cstdint>
#include <vector>

#include "seqtx/system.hpp"

namespace seqtx {

/// Cell-averaged (Ulam-type) discretization of the z = 0 transfer operator of
/// T_j: entry (i, c) is the fraction of target cell i whose branch-k preimage
/// lies in cell c, weighted by e^{φ}.  Independent of the collocation path.
struct UlamMatrix {
  std::size_t cells = 0;
  struct Entry {
    std::uint32_t row, col;
    double value;
  };
  std::vector<Entry> entries;

  std::vector<double> apply(const std::vector<double>& v) const;
};

UlamMatrix build_ulam(const SequentialSystem& sys, std::int64_t j, std::size_t cells,
                      std::size_t samples_per_cell = 64);

struct UlamEigen {
  double lambda = 0.0;
  std::vector<double> density;  ///< cell values of h, normalized to mean one
  std::size_t iterations = 0;
};

/// Dominant eigenpair by power iteration.
UlamEigen ulam_dominant(const UlamMatrix& m, std::size_t max_iter = 2000, double tol = 1e-13);

}  // namespace seqtx
