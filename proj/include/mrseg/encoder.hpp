#ifndef MRSEG_ENCODER_HPP
#define MRSEG_ENCODER_HPP

/// \file encoder.hpp
/// \brief Small strided convolutional feature extractor with a hand-written
/// backward pass.
///
/// Every layer is a 3x3 convolution with padding 1 and stride 1 or 2. ReLU
/// follows every layer except the last, so the final features are linear in
/// the last layer's parameters. The default stack is 3 -> 16 -> 32 -> C with
/// stride 2 everywhere, giving C feature channels at 1/8 input resolution.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mrseg/errors.hpp"
#include "mrseg/rng.hpp"
#include "mrseg/tensor.hpp"

namespace mrseg {

inline constexpr std::size_t kKernel = 3;

struct ConvLayer {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t stride = 1;
  std::vector<double> kernels;  ///< out_ch x in_ch x 3 x 3, row-major
  std::vector<double> bias;     ///< out_ch

  ConvLayer() = default;
  ConvLayer(std::size_t in, std::size_t out, std::size_t s)
      : in_ch(in), out_ch(out), stride(s), kernels(out * in * kKernel * kKernel, 0.0),
        bias(out, 0.0) {
    if (s != 1 && s != 2) throw ConfigError("conv stride must be 1 or 2");
  }

  double& k(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return kernels[((o * in_ch + i) * kKernel + ky) * kKernel + kx];
  }
  double k(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return kernels[((o * in_ch + i) * kKernel + ky) * kKernel + kx];
  }

  static std::size_t out_size(std::size_t n, std::size_t stride) {
    return (n + stride - 1) / stride;
  }

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct EncoderParams {
  std::vector<ConvLayer> layers;

  std::size_t in_channels() const { return layers.empty() ? 0 : layers.front().in_ch; }
  std::size_t c_out() const { return layers.empty() ? 0 : layers.back().out_ch; }
  std::size_t total_stride() const {
    std::size_t s = 1;
    for (const auto& l : layers) s *= l.stride;
    return s;
  }
  /// Zero-valued bundle with the same shapes.
  EncoderParams zeros_like() const {
    EncoderParams z;
    for (const auto& l : layers) z.layers.emplace_back(l.in_ch, l.out_ch, l.stride);
    return z;
  }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Visits every parameter tensor as (name, values).
template <typename Params, typename Fn>
void for_each_param(Params& p, Fn&& fn) {
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    fn("layer" + std::to_string(i) + ".weight", std::span(l.kernels));
    fn("layer" + std::to_string(i) + ".bias", std::span(l.bias));
  }
}

struct EncoderArch {
  std::vector<std::size_t> widths{3, 16, 32, 64};
  std::vector<std::size_t> strides{2, 2, 2};
};

/// He-style uniform initialization, U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero
/// biases. Fully determined by `seed`.
inline EncoderParams init_encoder(const EncoderArch& arch, std::uint64_t seed) {
  if (arch.widths.size() != arch.strides.size() + 1 || arch.strides.empty())
    throw ConfigError("encoder arch needs widths.size() == strides.size() + 1 >= 2");
  Rng rng(seed);
  EncoderParams p;
  for (std::size_t i = 0; i < arch.strides.size(); ++i) {
    ConvLayer l(arch.widths[i], arch.widths[i + 1], arch.strides[i]);
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in_ch * kKernel * kKernel));
    for (double& w : l.kernels) w = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(l));
  }
  return p;
}

inline EncoderArch default_arch(std::size_t c_out) {
  EncoderArch a;
  a.widths.back() = c_out;
  return a;
}

namespace detail {

inline Tensor3 conv_forward(const ConvLayer& l, const Tensor3& in) {
  const std::size_t h = in.height(), w = in.width(), s = l.stride;
  const std::size_t oh = ConvLayer::out_size(h, s), ow = ConvLayer::out_size(w, s);
  Tensor3 out(l.out_ch, oh, ow);
  for (std::size_t o = 0; o < l.out_ch; ++o) {
    auto op = out.plane(o);
    std::fill(op.begin(), op.end(), l.bias[o]);
    for (std::size_t i = 0; i < l.in_ch; ++i) {
      auto ip = in.plane(i);
      for (std::size_t ky = 0; ky < kKernel; ++ky) {
        for (std::size_t kx = 0; kx < kKernel; ++kx) {
          const double kv = l.k(o, i, ky, kx);
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - 1;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            const double* irow = ip.data() + iy * w;
            double* orow = op.data() + oy * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - 1;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              orow[ox] += kv * irow[ix];
            }
          }
        }
      }
    }
  }
  return out;
}

/// Accumulates kernel/bias gradients into `grad` and returns dL/d(input).
inline Tensor3 conv_backward(const ConvLayer& l, const Tensor3& in, const Tensor3& g_out,
                             ConvLayer& grad) {
  const std::size_t h = in.height(), w = in.width(), s = l.stride;
  const std::size_t oh = g_out.height(), ow = g_out.width();
  Tensor3 g_in(l.in_ch, h, w);
  for (std::size_t o = 0; o < l.out_ch; ++o) {
    auto gp = g_out.plane(o);
    double bsum = 0.0;
    for (double v : gp) bsum += v;
    grad.bias[o] += bsum;
    for (std::size_t i = 0; i < l.in_ch; ++i) {
      auto ip = in.plane(i);
      auto gip = g_in.plane(i);
      for (std::size_t ky = 0; ky < kKernel; ++ky) {
        for (std::size_t kx = 0; kx < kKernel; ++kx) {
          const double kv = l.k(o, i, ky, kx);
          double dk = 0.0;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - 1;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            const double* irow = ip.data() + iy * w;
            double* girow = gip.data() + iy * w;
            const double* grow = gp.data() + oy * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - 1;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              dk += grow[ox] * irow[ix];
              girow[ix] += grow[ox] * kv;
            }
          }
          grad.k(o, i, ky, kx) += dk;
        }
      }
    }
  }
  return g_in;
}

inline void check_input(const EncoderParams& p, const Tensor3& image) {
  if (p.layers.empty()) throw ConfigError("encoder has no layers");
  if (image.channels() != p.in_channels())
    throw DimensionError("encoder expects " + std::to_string(p.in_channels()) +
                         " input channels, got image " + image.shape());
  const std::size_t s = p.total_stride();
  if (image.height() % s != 0 || image.width() % s != 0 || image.height() == 0 ||
      image.width() == 0)
    throw DimensionError("image " + image.shape() + " spatial size not divisible by encoder stride " +
                         std::to_string(s));
}

}  // namespace detail

/// Forward activations kept for the backward pass.
struct EncodeTrace {
  std::vector<Tensor3> inputs;  ///< input to each layer (post-ReLU of previous)
  std::vector<Tensor3> pre;     ///< pre-activation output of each layer
  const Tensor3& output() const { return pre.back(); }
};

inline EncodeTrace encode_traced(const EncoderParams& p, const Tensor3& image) {
  detail::check_input(p, image);
  EncodeTrace t;
  Tensor3 x = image;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    Tensor3 z = detail::conv_forward(p.layers[i], x);
    t.inputs.push_back(std::move(x));
    if (i + 1 < p.layers.size()) {
      x = z;
      for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
    }
    t.pre.push_back(std::move(z));
  }
  return t;
}

/// C x H/s x W/s features, s = total stride (8 for the default stack).
inline Tensor3 encode(const EncoderParams& p, const Tensor3& image) {
  return std::move(encode_traced(p, image).pre.back());
}

struct EncoderGrads {
  EncoderParams params;  ///< congruent with the encoder parameters
  Tensor3 image;
};

/// Gradient accumulation entry point: adds parameter gradients into
/// `param_grads` and returns the image gradient.
inline Tensor3 encode_backward_accumulate(const EncoderParams& p, const EncodeTrace& trace,
                                          const Tensor3& upstream, EncoderParams& param_grads) {
  if (!upstream.same_shape(trace.output()))
    throw DimensionError("encode_backward: upstream " + upstream.shape() +
                         " does not match encoder output " + trace.output().shape());
  Tensor3 g = upstream;
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    if (li + 1 < p.layers.size()) {
      const auto& z = trace.pre[li].data();
      auto& gd = g.data();
      for (std::size_t k = 0; k < gd.size(); ++k)
        if (!(z[k] > 0.0)) gd[k] = 0.0;
    }
    g = detail::conv_backward(p.layers[li], trace.inputs[li], g, param_grads.layers[li]);
  }
  return g;
}

inline EncoderGrads encode_backward(const EncoderParams& p, const Tensor3& image,
                                    const Tensor3& upstream) {
  const EncodeTrace trace = encode_traced(p, image);
  EncoderGrads out{p.zeros_like(), Tensor3()};
  out.image = encode_backward_accumulate(p, trace, upstream, out.params);
  return out;
}

}  // namespace mrseg

#endif  // MRSEG_ENCODER_HPP
