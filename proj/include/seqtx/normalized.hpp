#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "seqtx/rpf.hpp"

namespace seqtx {

/// z = i t for a real direction vector t.
ZParam imaginary_param(std::span<const double> t);

/// Normalized operators L̃_z^{(j)} g = L_z^{(j)}(g h_j) / (λ_j h_{j+1}) built
/// from the z = 0 triplets; L̃_0 fixes the constant function.
class NormalizedTransfer {
 public:
  explicit NormalizedTransfer(const GibbsFamily& family);

  const GibbsFamily& family() const { return family_; }

  GridFunction apply(std::int64_t j, const ZParam& z, const GridFunction& g) const;
  GridFunction compose(std::int64_t j, std::size_t n, const ZParam& z, GridFunction g) const;

  /// L̃_z^{j,n} as a callable, for norm estimation.
  LinearMap as_map(std::int64_t j, std::size_t n, const ZParam& z) const;

 private:
  struct Prepared {
    GridFunction h;                // h_j
    std::vector<double> inv_next;  // 1 / (λ_j h_{j+1})
  };
  std::shared_ptr<const Prepared> prepared(std::int64_t j) const;

  const GibbsFamily& family_;
  mutable std::mutex mutex_;
  mutable std::map<std::int64_t, std::shared_ptr<const Prepared>> prepared_;
};

}  // namespace seqtx
