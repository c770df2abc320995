#ifndef MRSEG_OPTIMIZER_HPP
#define MRSEG_OPTIMIZER_HPP

#include <span>
#include <string>

#include "mrseg/encoder.hpp"
#include "mrseg/errors.hpp"

namespace mrseg {

struct SgdHyper {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// v <- mu*v + (g + wd*theta);  theta <- theta - lr*v
inline void sgd_momentum_update(std::span<double> theta, std::span<const double> grad,
                                std::span<double> velocity, const SgdHyper& h) {
  if (theta.size() != grad.size() || theta.size() != velocity.size())
    throw DimensionError("sgd update: parameter/gradient/velocity sizes differ (" +
                         std::to_string(theta.size()) + "/" + std::to_string(grad.size()) + "/" +
                         std::to_string(velocity.size()) + ")");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    velocity[i] = h.momentum * velocity[i] + (grad[i] + h.weight_decay * theta[i]);
    theta[i] -= h.learning_rate * velocity[i];
  }
}

struct OptimizerState {
  EncoderParams velocity;
  SgdHyper hyper;

  static OptimizerState for_params(const EncoderParams& p, const SgdHyper& h) {
    return {p.zeros_like(), h};
  }
};

inline void sgd_momentum_step(EncoderParams& params, const EncoderParams& grads,
                              OptimizerState& state) {
  if (params.layers.size() != grads.layers.size() ||
      params.layers.size() != state.velocity.layers.size())
    throw DimensionError("sgd step: layer counts differ");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& p = params.layers[i];
    const auto& g = grads.layers[i];
    auto& v = state.velocity.layers[i];
    sgd_momentum_update(p.kernels, g.kernels, v.kernels, state.hyper);
    sgd_momentum_update(p.bias, g.bias, v.bias, state.hyper);
  }
}

}  // namespace mrseg

#endif  // MRSEG_OPTIMIZER_HPP
