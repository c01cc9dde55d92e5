#pragma once

// Self-supervised objective: robust photometric difference against the
// inverse-warped second image, an L1 neighbor-smoothness regularizer, and
// their weighted multi-scale sum.

#include <cmath>
#include <string>
#include <vector>

#include "spikeflow/events.hpp"
#include "spikeflow/ops.hpp"
#include "spikeflow/tensor.hpp"

namespace spikeflow {

struct LossConfig {
  double r = 0.45;       // Charbonnier exponent
  double eta = 1e-3;     // Charbonnier epsilon
  double lambda = 10.0;  // smoothness weight

  void validate() const {
    if (!(r > 0.0 && r <= 1.0)) throw ContractError("LossConfig: r must be in (0, 1]");
    if (!(eta > 0.0)) throw ContractError("LossConfig: eta must be > 0");
    if (lambda < 0.0) throw ContractError("LossConfig: lambda must be >= 0");
  }
};

// Elementwise robust penalty (x^2 + eta^2)^r.
inline Tensor charbonnier(const Tensor& x, double r, double eta) {
  const double e2 = eta * eta;
  return detail::unary_op(
      "charbonnier", x, [r, e2](double v) { return std::pow(v * v + e2, r); },
      [r, e2](double v) { return r * std::pow(v * v + e2, r - 1.0) * 2.0 * v; });
}

namespace detail {

// Constant sampling grids: grid_x[b,y,x] = x, grid_y[b,y,x] = y.
inline std::pair<Tensor, Tensor> base_grid(std::size_t B, std::size_t H, std::size_t W) {
  Tensor gx(Shape{B, H, W});
  Tensor gy(Shape{B, H, W});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        gx.at(b, y, x) = static_cast<double>(x);
        gy.at(b, y, x) = static_cast<double>(y);
      }
    }
  }
  return {gx, gy};
}

}  // namespace detail

// Warps `second` by the flow and sums the Charbonnier penalty of the
// residual against `first` over all pixels. Flow units are pixels at this
// resolution. Differentiable in the flow (and the images).
inline Tensor photometric_loss(const Tensor& flow, const Tensor& first, const Tensor& second,
                               const LossConfig& cfg) {
  detail::check_rank("photometric_loss", "flow", flow, 4);
  detail::check_rank("photometric_loss", "first", first, 4);
  detail::check_same_shape("photometric_loss", first, second);
  const std::size_t B = flow.dim(0), H = flow.dim(2), W = flow.dim(3);
  if (flow.dim(1) != 2) {
    throw DimensionError("photometric_loss: flow must have 2 channels, got " +
                         shape_str(flow.shape()));
  }
  if (first.dim(0) != B || first.dim(1) != 1 || first.dim(2) != H || first.dim(3) != W) {
    throw DimensionError("photometric_loss: images " + shape_str(first.shape()) +
                         " do not match flow " + shape_str(flow.shape()));
  }
  auto [gx, gy] = detail::base_grid(B, H, W);
  Tensor u = reshape(slice(flow, {0, 0, 0, 0}, Shape{B, 1, H, W}), Shape{B, H, W});
  Tensor v = reshape(slice(flow, {0, 1, 0, 0}, Shape{B, 1, H, W}), Shape{B, H, W});
  Tensor warped = bilinear_sample(second, add(gx, u), add(gy, v));
  return sum(charbonnier(sub(first, warped), cfg.r, cfg.eta));
}

inline Tensor photometric_loss(const Tensor& flow, const GrayImagePair& images,
                               const LossConfig& cfg) {
  return photometric_loss(flow, images.first, images.second, cfg);
}

// L1 penalty on 4-neighbor flow differences, normalized by the full pixel
// count H*W (out-of-range neighbor terms at the last row/column are
// dropped). Batches sum.
inline Tensor smoothness_loss(const Tensor& flow) {
  detail::check_rank("smoothness_loss", "flow", flow, 4);
  const std::size_t B = flow.dim(0), C = flow.dim(1), H = flow.dim(2), W = flow.dim(3);
  if (C != 2) {
    throw DimensionError("smoothness_loss: flow must have 2 channels, got " +
                         shape_str(flow.shape()));
  }
  if (H < 2 || W < 2) {
    throw ContractError("smoothness_loss: field must be at least 2x2, got " +
                        shape_str(flow.shape()));
  }
  Tensor right = sub(slice(flow, {0, 0, 0, 0}, Shape{B, C, H, W - 1}),
                     slice(flow, {0, 0, 0, 1}, Shape{B, C, H, W - 1}));
  Tensor down = sub(slice(flow, {0, 0, 0, 0}, Shape{B, C, H - 1, W}),
                    slice(flow, {0, 0, 1, 0}, Shape{B, C, H - 1, W}));
  Tensor total = add(sum(abs(right)), sum(abs(down)));
  return scale(total, 1.0 / static_cast<double>(H * W));
}

struct LossBreakdown {
  Tensor total;        // scalar, on the tape
  Tensor photometric;  // scalar, on the tape
  Tensor smoothness;   // scalar; a plain zero when lambda == 0 (not evaluated)
};

// Multi-scale objective: for each predicted flow (coarsest first), the
// images are average-pooled down to that scale and the photometric and
// weighted smoothness terms are summed. Flow values at a coarse scale are in
// that scale's own pixel units.
inline LossBreakdown total_loss_detailed(const std::vector<Tensor>& flows,
                                         const GrayImagePair& images, const LossConfig& cfg) {
  cfg.validate();
  if (flows.empty()) throw ContractError("total_loss: no flow scales given");

  LossBreakdown out;
  for (const Tensor& flow : flows) {
    Tensor first = images.first;
    Tensor second = images.second;
    while (first.dim(2) > flow.dim(2) && first.dim(2) % 2 == 0) {
      first = avg_pool2x2(first);
      second = avg_pool2x2(second);
    }
    if (first.dim(2) != flow.dim(2) || first.dim(3) != flow.dim(3)) {
      throw DimensionError("total_loss: no 2x2-pooled image scale matches flow " +
                           shape_str(flow.shape()) + " (images " +
                           shape_str(images.first.shape()) + ")");
    }
    Tensor photo = photometric_loss(flow, first, second, cfg);
    out.photometric = out.photometric.defined() ? add(out.photometric, photo) : photo;
    if (cfg.lambda > 0.0) {
      Tensor smooth = smoothness_loss(flow);
      out.smoothness = out.smoothness.defined() ? add(out.smoothness, smooth) : smooth;
    }
  }
  if (cfg.lambda > 0.0) {
    out.total = add(out.photometric, scale(out.smoothness, cfg.lambda));
  } else {
    out.total = out.photometric;
    out.smoothness = Tensor::scalar(0.0);
  }
  return out;
}

inline Tensor total_loss(const std::vector<Tensor>& flows, const GrayImagePair& images,
                         const LossConfig& cfg) {
  return total_loss_detailed(flows, images, cfg).total;
}

}  // namespace spikeflow
