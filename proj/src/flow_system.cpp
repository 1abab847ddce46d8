#include "shadowflow/flow_system.hpp"

#include <stdexcept>
#include <string>

namespace shadowflow {

FlowSystem::FlowSystem(std::size_t dimension, std::vector<std::shared_ptr<const Layer>> layers)
    : dimension_(dimension), layers_(std::move(layers)) {
  if (dimension_ == 0) throw std::invalid_argument("flow system: dimension must be positive");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!layers_[i]) throw std::invalid_argument("flow system: null layer");
    if (layers_[i]->dimension() != dimension_)
      throw std::invalid_argument("flow system: layer " + std::to_string(i + 1) + " has dimension " +
                                  std::to_string(layers_[i]->dimension()) + ", expected " +
                                  std::to_string(dimension_));
  }
}

FlowSystem FlowSystem::repeated(std::shared_ptr<const Layer> layer, std::size_t length) {
  if (!layer) throw std::invalid_argument("flow system: null layer");
  const std::size_t d = layer->dimension();
  return FlowSystem(d, std::vector<std::shared_ptr<const Layer>>(length, std::move(layer)));
}

const Layer& FlowSystem::forward_layer(std::size_t n) const {
  if (n == 0 || n > layers_.size()) throw std::out_of_range("flow system: layer index out of range");
  return *layers_[n - 1];
}

const Layer& FlowSystem::backward_layer(std::size_t n) const {
  if (n == 0 || n > layers_.size()) throw std::out_of_range("flow system: layer index out of range");
  return *layers_[layers_.size() - n];
}

}  // namespace shadowflow
