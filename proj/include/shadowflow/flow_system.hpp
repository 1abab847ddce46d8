#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "shadowflow/layer.hpp"

namespace shadowflow {

/// A finite sequence of layers F_1, ..., F_N on R^d.  The backward dynamics
/// are B_n = F_{N-n+1}^{-1}.
class FlowSystem {
 public:
  FlowSystem(std::size_t dimension, std::vector<std::shared_ptr<const Layer>> layers);

  /// N copies of the same map, as in a MixFlow.
  static FlowSystem repeated(std::shared_ptr<const Layer> layer, std::size_t length);

  std::size_t dimension() const { return dimension_; }
  std::size_t length() const { return layers_.size(); }

  /// F_n for n in 1..N.
  const Layer& forward_layer(std::size_t n) const;
  /// The layer whose inverse is B_n, i.e. F_{N-n+1}.
  const Layer& backward_layer(std::size_t n) const;

  std::shared_ptr<const Layer> layer_ptr(std::size_t n) const { return layers_.at(n - 1); }

 private:
  std::size_t dimension_;
  std::vector<std::shared_ptr<const Layer>> layers_;
};

}  // namespace shadowflow
