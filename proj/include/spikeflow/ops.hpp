#pragma once

// Differentiable ops over Tensor. Forward computes eagerly; when a GradTape
// is active and an input requires gradients, a backward closure is recorded.
// All backward closures accumulate (+=) into input gradient buffers.
//
// Layout conventions: images and feature maps are [batch, channel, height,
// width]; conv weights are [out_ch, in_ch, kh, kw]; transposed-conv weights
// are [in_ch, out_ch, kh, kw].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "spikeflow/tensor.hpp"

namespace spikeflow {

namespace detail {

template <class F, class DF>
Tensor unary_op(const char* name, const Tensor& a, F f, DF df) {
  Tensor out(a.shape());
  auto av = a.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = f(av[i]);
  record_op(name, {a}, out, [a, out, df]() {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    auto av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g[i] * df(av[i]);
  });
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
  detail::record_op("add", {a, b}, out, [a, b, out]() {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    auto gb = b.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] - bv[i];
  detail::record_op("sub", {a, b}, out, [a, b, out]() {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    auto gb = b.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
  detail::record_op("mul", {a, b}, out, [a, b, out]() {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    auto gb = b.grad_buffer();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv[i];
      gb[i] += g[i] * av[i];
    }
  });
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary_op(
      "scale", a, [s](double x) { return x * s; }, [s](double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  return detail::unary_op(
      "add_scalar", a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

// Absolute value with subgradient 0 at the kink.
inline Tensor abs(const Tensor& a) {
  return detail::unary_op(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Tensor leaky_relu(const Tensor& a, double negative_slope) {
  return detail::unary_op(
      "leaky_relu", a,
      [negative_slope](double x) { return x >= 0.0 ? x : negative_slope * x; },
      [negative_slope](double x) { return x >= 0.0 ? 1.0 : negative_slope; });
}

inline Tensor sum(const Tensor& a) {
  Tensor out = Tensor::scalar(0.0);
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  out.mutable_values()[0] = acc;
  detail::record_op("sum", {a}, out, [a, out]() {
    double g = out.grad()[0];
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
  return out;
}

inline Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " has " +
                         std::to_string(a.numel()) + " elements, target " +
                         shape_str(new_shape) + " needs " +
                         std::to_string(shape_numel(new_shape)));
  }
  Tensor out(std::move(new_shape));
  auto av = a.values();
  std::copy(av.begin(), av.end(), out.mutable_values().begin());
  detail::record_op("reshape", {a}, out, [a, out]() {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return out;
}

// Rectangular sub-block copy: out[i...] = a[begin + i...], extent gives the
// output shape.
inline Tensor slice(const Tensor& a, const std::vector<std::size_t>& begin,
                    const Shape& extent) {
  const Shape& s = a.shape();
  if (begin.size() != s.size() || extent.size() != s.size()) {
    throw DimensionError("slice: begin/extent rank does not match tensor shape " +
                         shape_str(s));
  }
  for (std::size_t axis = 0; axis < s.size(); ++axis) {
    if (extent[axis] == 0 || begin[axis] + extent[axis] > s[axis]) {
      throw DimensionError("slice: axis " + std::to_string(axis) + " range [" +
                           std::to_string(begin[axis]) + ", " +
                           std::to_string(begin[axis] + extent[axis]) +
                           ") out of bounds for shape " + shape_str(s));
    }
  }
  Tensor out(extent);
  auto av = a.values();
  auto ov = out.mutable_values();
  const std::size_t rank = s.size();
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < out.numel(); ++o) {
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < rank; ++axis) flat = flat * s[axis] + begin[axis] + idx[axis];
    ov[o] = av[flat];
    for (std::size_t axis = rank; axis-- > 0;) {
      if (++idx[axis] < extent[axis]) break;
      idx[axis] = 0;
    }
  }
  detail::record_op("slice", {a}, out, [a, out, begin, extent]() {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    const Shape& s = a.shape();
    const std::size_t rank = s.size();
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t o = 0; o < g.size(); ++o) {
      std::size_t flat = 0;
      for (std::size_t axis = 0; axis < rank; ++axis) flat = flat * s[axis] + begin[axis] + idx[axis];
      ga[flat] += g[o];
      for (std::size_t axis = rank; axis-- > 0;) {
        if (++idx[axis] < extent[axis]) break;
        idx[axis] = 0;
      }
    }
  });
  return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no tensors given");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(first));
  }
  Shape out_shape = first;
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    if (s.size() != first.size()) {
      throw DimensionError("concat: rank mismatch between " + shape_str(first) +
                           " and " + shape_str(s));
    }
    for (std::size_t ax = 0; ax < s.size(); ++ax) {
      if (ax != axis && s[ax] != first[ax]) {
        throw DimensionError("concat: axis " + std::to_string(ax) +
                             " differs between " + shape_str(first) + " and " +
                             shape_str(s));
      }
    }
    out_shape[axis] += s[axis];
  }

  // Flatten to [outer, axis, inner] per part for contiguous copies.
  std::size_t outer = 1, inner = 1;
  for (std::size_t ax = 0; ax < axis; ++ax) outer *= first[ax];
  for (std::size_t ax = axis + 1; ax < first.size(); ++ax) inner *= first[ax];

  Tensor out(out_shape);
  auto ov = out.mutable_values();
  const std::size_t out_row = out_shape[axis] * inner;
  std::size_t axis_off = 0;
  for (const Tensor& part : parts) {
    auto pv = part.values();
    const std::size_t part_row = part.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(pv.begin() + o * part_row, pv.begin() + (o + 1) * part_row,
                ov.begin() + o * out_row + axis_off * inner);
    }
    axis_off += part.dim(axis);
  }

  detail::check_finite("concat", out);
  Tensor out_copy = out;
  if (GradTape* tape = GradTape::active()) {
    bool needs_grad = false;
    for (const Tensor& t : parts) needs_grad = needs_grad || t.requires_grad();
    if (needs_grad) {
      out.set_requires_grad(true);
      tape->record("concat", parts, out, [parts, out_copy, axis, outer, inner, out_row]() {
        auto g = out_copy.grad();
        std::size_t axis_off = 0;
        for (const Tensor& part : parts) {
          auto gp = part.grad_buffer();
          const std::size_t part_row = part.dim(axis) * inner;
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = g.data() + o * out_row + axis_off * inner;
            double* dst = gp.data() + o * part_row;
            for (std::size_t i = 0; i < part_row; ++i) dst[i] += src[i];
          }
          axis_off += part.dim(axis);
        }
      });
    }
  }
  return out;
}

// 2x2 average pooling with stride 2; height and width must be even.
inline Tensor avg_pool2x2(const Tensor& a) {
  detail::check_rank("avg_pool2x2", "input", a, 4);
  const std::size_t B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ContractError("avg_pool2x2: height and width must be even, got " +
                        shape_str(a.shape()));
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor out(Shape{B, C, Ho, Wo});
  auto av = a.values();
  auto ov = out.mutable_values();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* in = av.data() + bc * H * W;
    double* o = ov.data() + bc * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y) {
      for (std::size_t x = 0; x < Wo; ++x) {
        const double* r0 = in + (2 * y) * W + 2 * x;
        const double* r1 = r0 + W;
        o[y * Wo + x] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
    }
  }
  detail::record_op("avg_pool2x2", {a}, out, [a, out, B, C, H, W, Ho, Wo]() {
    auto g = out.grad();
    auto ga = a.grad_buffer();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const double* go = g.data() + bc * Ho * Wo;
      double* gi = ga.data() + bc * H * W;
      for (std::size_t y = 0; y < Ho; ++y) {
        for (std::size_t x = 0; x < Wo; ++x) {
          const double gv = 0.25 * go[y * Wo + x];
          double* r0 = gi + (2 * y) * W + 2 * x;
          double* r1 = r0 + W;
          r0[0] += gv;
          r0[1] += gv;
          r1[0] += gv;
          r1[1] += gv;
        }
      }
    }
  });
  return out;
}

// Strided cross-correlation with zero padding. input [B,Cin,H,W], weight
// [Cout,Cin,kh,kw] with kh,kw odd. Output [B,Cout,H',W'] where
// H' = (H + 2*padding - kh)/stride + 1 (floor).
inline Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride,
                     std::size_t padding) {
  detail::check_rank("conv2d", "input", input, 4);
  detail::check_rank("conv2d", "weight", weight, 4);
  if (stride == 0) throw ContractError("conv2d: stride must be >= 1");
  const std::size_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != Cin) {
    throw DimensionError("conv2d: input has " + std::to_string(Cin) +
                         " channels on axis 1 but weight expects " +
                         std::to_string(weight.dim(1)));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ContractError("conv2d: kernel must be odd, got " + std::to_string(kh) +
                        "x" + std::to_string(kw));
  }
  if (H + 2 * padding < kh || W + 2 * padding < kw) {
    throw ContractError("conv2d: kernel " + std::to_string(kh) + "x" +
                        std::to_string(kw) + " does not fit padded input " +
                        shape_str(input.shape()));
  }
  const std::size_t Ho = (H + 2 * padding - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - kw) / stride + 1;

  Tensor out(Shape{B, Cout, Ho, Wo});
  auto in = input.values();
  auto wv = weight.values();
  auto ov = out.mutable_values();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Cout; ++co) {
      for (std::size_t oh = 0; oh < Ho; ++oh) {
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const double* inp = in.data() + ((b * Cin + ci) * H) * W;
            const double* wp = wv.data() + ((co * Cin + ci) * kh) * kw;
            for (std::size_t i = 0; i < kh; ++i) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - pad;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t j = 0; j < kw; ++j) {
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) - pad;
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += inp[ih * static_cast<std::ptrdiff_t>(W) + iw] * wp[i * kw + j];
              }
            }
          }
          ov[((b * Cout + co) * Ho + oh) * Wo + ow] = acc;
        }
      }
    }
  }

  detail::record_op("conv2d", {input, weight}, out,
                    [input, weight, out, stride, padding, B, Cin, H, W, Cout, kh, kw, Ho, Wo]() {
    auto g = out.grad();
    auto in = input.values();
    auto wv = weight.values();
    auto gi = input.grad_buffer();
    auto gw = weight.grad_buffer();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t co = 0; co < Cout; ++co) {
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const double gv = g[((b * Cout + co) * Ho + oh) * Wo + ow];
            if (gv == 0.0) continue;
            for (std::size_t ci = 0; ci < Cin; ++ci) {
              const double* inp = in.data() + ((b * Cin + ci) * H) * W;
              double* gip = gi.data() + ((b * Cin + ci) * H) * W;
              const double* wp = wv.data() + ((co * Cin + ci) * kh) * kw;
              double* gwp = gw.data() + ((co * Cin + ci) * kh) * kw;
              for (std::size_t i = 0; i < kh; ++i) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - pad;
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t j = 0; j < kw; ++j) {
                  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) - pad;
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                  const std::ptrdiff_t off = ih * static_cast<std::ptrdiff_t>(W) + iw;
                  gip[off] += gv * wp[i * kw + j];
                  gwp[i * kw + j] += gv * inp[off];
                }
              }
            }
          }
        }
      }
    }
  });
  return out;
}

// Transposed convolution (the adjoint of conv2d in its input). input
// [B,Cin,H,W], weight [Cin,Cout,kh,kw]. Output [B,Cout,H'',W''] where
// H'' = (H-1)*stride - 2*padding + kh. For any x, y and conv weight w:
//   <conv2d(x, w, s, p), y> == <x, conv_transpose2d(y, w, s, p)>.
inline Tensor conv_transpose2d(const Tensor& input, const Tensor& weight,
                               std::size_t stride, std::size_t padding) {
  detail::check_rank("conv_transpose2d", "input", input, 4);
  detail::check_rank("conv_transpose2d", "weight", weight, 4);
  if (stride == 0) throw ContractError("conv_transpose2d: stride must be >= 1");
  const std::size_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Cout = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(0) != Cin) {
    throw DimensionError("conv_transpose2d: input has " + std::to_string(Cin) +
                         " channels on axis 1 but weight expects " +
                         std::to_string(weight.dim(0)));
  }
  const std::ptrdiff_t Ho_s = static_cast<std::ptrdiff_t>((H - 1) * stride + kh) -
                              2 * static_cast<std::ptrdiff_t>(padding);
  const std::ptrdiff_t Wo_s = static_cast<std::ptrdiff_t>((W - 1) * stride + kw) -
                              2 * static_cast<std::ptrdiff_t>(padding);
  if (Ho_s < 1 || Wo_s < 1) {
    throw ContractError("conv_transpose2d: output would be empty for input " +
                        shape_str(input.shape()));
  }
  const std::size_t Ho = static_cast<std::size_t>(Ho_s);
  const std::size_t Wo = static_cast<std::size_t>(Wo_s);

  Tensor out(Shape{B, Cout, Ho, Wo});
  auto in = input.values();
  auto wv = weight.values();
  auto ov = out.mutable_values();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t ci = 0; ci < Cin; ++ci) {
      const double* inp = in.data() + ((b * Cin + ci) * H) * W;
      for (std::size_t co = 0; co < Cout; ++co) {
        const double* wp = wv.data() + ((ci * Cout + co) * kh) * kw;
        double* op = ov.data() + ((b * Cout + co) * Ho) * Wo;
        for (std::size_t ih = 0; ih < H; ++ih) {
          for (std::size_t iw = 0; iw < W; ++iw) {
            const double v = inp[ih * W + iw];
            if (v == 0.0) continue;
            for (std::size_t i = 0; i < kh; ++i) {
              const std::ptrdiff_t oh = static_cast<std::ptrdiff_t>(ih * stride + i) - pad;
              if (oh < 0 || oh >= static_cast<std::ptrdiff_t>(Ho)) continue;
              for (std::size_t j = 0; j < kw; ++j) {
                const std::ptrdiff_t ow = static_cast<std::ptrdiff_t>(iw * stride + j) - pad;
                if (ow < 0 || ow >= static_cast<std::ptrdiff_t>(Wo)) continue;
                op[oh * static_cast<std::ptrdiff_t>(Wo) + ow] += v * wp[i * kw + j];
              }
            }
          }
        }
      }
    }
  }

  detail::record_op("conv_transpose2d", {input, weight}, out,
                    [input, weight, out, stride, padding, B, Cin, H, W, Cout, kh, kw, Ho, Wo]() {
    auto g = out.grad();
    auto in = input.values();
    auto wv = weight.values();
    auto gi = input.grad_buffer();
    auto gw = weight.grad_buffer();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const double* inp = in.data() + ((b * Cin + ci) * H) * W;
        double* gip = gi.data() + ((b * Cin + ci) * H) * W;
        for (std::size_t co = 0; co < Cout; ++co) {
          const double* wp = wv.data() + ((ci * Cout + co) * kh) * kw;
          double* gwp = gw.data() + ((ci * Cout + co) * kh) * kw;
          const double* gp = g.data() + ((b * Cout + co) * Ho) * Wo;
          for (std::size_t ih = 0; ih < H; ++ih) {
            for (std::size_t iw = 0; iw < W; ++iw) {
              const double v = inp[ih * W + iw];
              double acc = 0.0;
              for (std::size_t i = 0; i < kh; ++i) {
                const std::ptrdiff_t oh = static_cast<std::ptrdiff_t>(ih * stride + i) - pad;
                if (oh < 0 || oh >= static_cast<std::ptrdiff_t>(Ho)) continue;
                for (std::size_t j = 0; j < kw; ++j) {
                  const std::ptrdiff_t ow = static_cast<std::ptrdiff_t>(iw * stride + j) - pad;
                  if (ow < 0 || ow >= static_cast<std::ptrdiff_t>(Wo)) continue;
                  const double go = gp[oh * static_cast<std::ptrdiff_t>(Wo) + ow];
                  acc += go * wp[i * kw + j];
                  gwp[i * kw + j] += go * v;
                }
              }
              gip[ih * W + iw] += acc;
            }
          }
        }
      }
    }
  });
  return out;
}

// Bilinear interpolation of image [B,C,H,W] at absolute pixel coordinates
// coords_x/coords_y [B,Ho,Wo]. Coordinates are clamped to the image border;
// clamped coordinates receive zero gradient. Output [B,C,Ho,Wo].
inline Tensor bilinear_sample(const Tensor& image, const Tensor& coords_x,
                              const Tensor& coords_y) {
  detail::check_rank("bilinear_sample", "image", image, 4);
  detail::check_rank("bilinear_sample", "coords_x", coords_x, 3);
  detail::check_rank("bilinear_sample", "coords_y", coords_y, 3);
  detail::check_same_shape("bilinear_sample", coords_x, coords_y);
  const std::size_t B = image.dim(0), C = image.dim(1), H = image.dim(2), W = image.dim(3);
  if (coords_x.dim(0) != B) {
    throw DimensionError("bilinear_sample: image batch " + std::to_string(B) +
                         " does not match coords batch " +
                         std::to_string(coords_x.dim(0)));
  }
  const std::size_t Ho = coords_x.dim(1), Wo = coords_x.dim(2);

  Tensor out(Shape{B, C, Ho, Wo});
  auto img = image.values();
  auto cx = coords_x.values();
  auto cy = coords_y.values();
  auto ov = out.mutable_values();
  const double xmax = static_cast<double>(W - 1);
  const double ymax = static_cast<double>(H - 1);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t p = 0; p < Ho * Wo; ++p) {
      const double x = std::clamp(cx[b * Ho * Wo + p], 0.0, xmax);
      const double y = std::clamp(cy[b * Ho * Wo + p], 0.0, ymax);
      const std::size_t x0 = static_cast<std::size_t>(x);
      const std::size_t y0 = static_cast<std::size_t>(y);
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const std::size_t y1 = std::min(y0 + 1, H - 1);
      const double fx = x - static_cast<double>(x0);
      const double fy = y - static_cast<double>(y0);
      for (std::size_t c = 0; c < C; ++c) {
        const double* ip = img.data() + ((b * C + c) * H) * W;
        const double v00 = ip[y0 * W + x0];
        const double v01 = ip[y0 * W + x1];
        const double v10 = ip[y1 * W + x0];
        const double v11 = ip[y1 * W + x1];
        ov[((b * C + c) * Ho) * Wo + p] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                                          fy * ((1.0 - fx) * v10 + fx * v11);
      }
    }
  }

  detail::record_op("bilinear_sample", {image, coords_x, coords_y}, out,
                    [image, coords_x, coords_y, out, B, C, H, W, Ho, Wo]() {
    auto g = out.grad();
    auto img = image.values();
    auto cx = coords_x.values();
    auto cy = coords_y.values();
    auto gimg = image.grad_buffer();
    auto gcx = coords_x.grad_buffer();
    auto gcy = coords_y.grad_buffer();
    const double xmax = static_cast<double>(W - 1);
    const double ymax = static_cast<double>(H - 1);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t p = 0; p < Ho * Wo; ++p) {
        const double rx = cx[b * Ho * Wo + p];
        const double ry = cy[b * Ho * Wo + p];
        const bool x_clamped = rx < 0.0 || rx > xmax;
        const bool y_clamped = ry < 0.0 || ry > ymax;
        const double x = std::clamp(rx, 0.0, xmax);
        const double y = std::clamp(ry, 0.0, ymax);
        const std::size_t x0 = static_cast<std::size_t>(x);
        const std::size_t y0 = static_cast<std::size_t>(y);
        const std::size_t x1 = std::min(x0 + 1, W - 1);
        const std::size_t y1 = std::min(y0 + 1, H - 1);
        const double fx = x - static_cast<double>(x0);
        const double fy = y - static_cast<double>(y0);
        double dx_acc = 0.0, dy_acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          const double gv = g[((b * C + c) * Ho) * Wo + p];
          if (gv == 0.0) continue;
          const double* ip = img.data() + ((b * C + c) * H) * W;
          double* gp = gimg.data() + ((b * C + c) * H) * W;
          const double v00 = ip[y0 * W + x0];
          const double v01 = ip[y0 * W + x1];
          const double v10 = ip[y1 * W + x0];
          const double v11 = ip[y1 * W + x1];
          gp[y0 * W + x0] += gv * (1.0 - fy) * (1.0 - fx);
          gp[y0 * W + x1] += gv * (1.0 - fy) * fx;
          gp[y1 * W + x0] += gv * fy * (1.0 - fx);
          gp[y1 * W + x1] += gv * fy * fx;
          dx_acc += gv * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10));
          dy_acc += gv * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01));
        }
        if (!x_clamped) gcx[b * Ho * Wo + p] += dx_acc;
        if (!y_clamped) gcy[b * Ho * Wo + p] += dy_acc;
      }
    }
  });
  return out;
}

}  // namespace spikeflow
