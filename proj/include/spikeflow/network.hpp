#pragma once

// The hybrid optical-flow network: spiking encoder accumulators feeding an
// analog residual + decoder stack (U-Net style), with per-scale flow heads.
// Also the named parameter store, seeded initialization, the checkpoint
// container, and the ablation variants that convert residual blocks to
// spiking form.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "spikeflow/io.hpp"
#include "spikeflow/ops.hpp"
#include "spikeflow/sha256.hpp"
#include "spikeflow/snn.hpp"
#include "spikeflow/tensor.hpp"

namespace spikeflow {

enum class HybridVariant { standard, one_residual_snn, two_residual_snn };

inline std::string to_string(HybridVariant v) {
  switch (v) {
    case HybridVariant::standard: return "standard";
    case HybridVariant::one_residual_snn: return "one_residual_snn";
    case HybridVariant::two_residual_snn: return "two_residual_snn";
  }
  throw ContractError("to_string: bad HybridVariant value");
}

inline HybridVariant parse_variant(const std::string& s) {
  if (s == "standard") return HybridVariant::standard;
  if (s == "one_residual_snn") return HybridVariant::one_residual_snn;
  if (s == "two_residual_snn") return HybridVariant::two_residual_snn;
  throw ContractError("unknown hybrid variant '" + s +
                      "' (want standard | one_residual_snn | two_residual_snn)");
}

struct NetworkConfig {
  EncoderConfig encoder;
  std::size_t flow_head_kernel = 1;
  HybridVariant variant = HybridVariant::standard;
  double negative_slope = 0.1;

  static NetworkConfig with_base(std::size_t base, double threshold) {
    NetworkConfig cfg;
    cfg.encoder = EncoderConfig::with_base(base, threshold);
    return cfg;
  }

  // Decoder output widths shrink from 2.5x the encoder base: 160, 80, 40, 20
  // at base 64. The halving sequence keeps every upsampling stage cheaper
  // than the one before while the spatial area quadruples.
  std::size_t decoder_width(std::size_t stage) const {
    const std::size_t top = encoder.widths.front() * 5 / 2;
    const std::size_t w = top >> (stage - 1);
    return w == 0 ? 1 : w;
  }

  std::size_t depth() const { return encoder.n_layers(); }

  // Channel count entering decoder stage `stage` (1-based).
  std::size_t stage_input_channels(std::size_t stage) const {
    if (stage == 1) return encoder.widths.back();
    return concat_channels(stage - 1);
  }

  // Channel count of the concatenation produced by stage `stage`:
  // [upsampled activations, encoder skip (absent at the last stage),
  //  upsampled previous flow (absent at the first stage)].
  std::size_t concat_channels(std::size_t stage) const {
    const std::size_t L = depth();
    std::size_t ch = decoder_width(stage);
    if (stage < L) ch += encoder.widths[L - 1 - stage];
    if (stage > 1) ch += 2;
    return ch;
  }

  std::string digest_string() const {
    std::string s = "spikeflow-config-v1|in=" + std::to_string(encoder.in_channels) + "|widths=";
    for (std::size_t i = 0; i < encoder.widths.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(encoder.widths[i]);
    }
    s += "|kernel=" + std::to_string(encoder.kernel);
    s += "|stride=" + std::to_string(encoder.stride);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", encoder.threshold);
    s += "|vth=" + std::string(buf);
    s += "|head=" + std::to_string(flow_head_kernel);
    s += "|variant=" + to_string(variant);
    std::snprintf(buf, sizeof(buf), "%.17g", negative_slope);
    s += "|slope=" + std::string(buf);
    return s;
  }

  std::array<std::uint8_t, 32> digest() const { return sha256(digest_string()); }
};

// Named parameter tensors with stable insertion order (initialization and
// serialization iterate in this order).
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ContractError("ParamStore: duplicate parameter " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(t));
    return entries_.back().second;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("ParamStore: no parameter named " + name);
    return entries_[it->second].second;
  }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("ParamStore: no parameter named " + name);
    return entries_[it->second].second;
  }

  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace detail {

inline Tensor init_uniform(std::mt19937_64& rng, Shape shape, double fan_in) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape), 0.0, true);
  for (double& v : t.mutable_values()) v = dist(rng);
  return t;
}

}  // namespace detail

// Creates every trainable parameter with fan-in-scaled uniform values, in a
// fixed order so a seed fully determines the initialization.
inline ParamStore init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore params;
  const std::size_t k = cfg.encoder.kernel;
  const auto enc_shapes = cfg.encoder.weight_shapes();
  for (std::size_t l = 0; l < enc_shapes.size(); ++l) {
    const double fan_in = static_cast<double>(enc_shapes[l][1] * k * k);
    params.add("encoder" + std::to_string(l + 1) + ".weight",
               detail::init_uniform(rng, enc_shapes[l], fan_in));
  }
  const std::size_t deep = cfg.encoder.widths.back();
  for (int block = 1; block <= 2; ++block) {
    for (int conv = 1; conv <= 2; ++conv) {
      params.add("residual" + std::to_string(block) + ".conv" + std::to_string(conv) + ".weight",
                 detail::init_uniform(rng, Shape{deep, deep, 3, 3},
                                      static_cast<double>(deep) * 9.0));
    }
  }
  for (std::size_t stage = 1; stage <= cfg.depth(); ++stage) {
    const std::size_t cin = cfg.stage_input_channels(stage);
    const std::size_t cout = cfg.decoder_width(stage);
    // Transposed conv: each output position receives k^2/stride^2 taps per
    // input channel on average.
    params.add("decoder" + std::to_string(stage) + ".up.weight",
               detail::init_uniform(rng, Shape{cin, cout, 4, 4},
                                    static_cast<double>(cin) * 16.0 / 4.0));
    const std::size_t hk = cfg.flow_head_kernel;
    params.add("decoder" + std::to_string(stage) + ".flow.weight",
               detail::init_uniform(rng, Shape{2, cfg.concat_channels(stage), hk, hk},
                                    static_cast<double>(cfg.concat_channels(stage) * hk * hk)));
  }
  return params;
}

// Analog residual block: x + conv2(act(conv1(x))). With zero weights the
// output equals the input exactly.
inline Tensor residual_block(const Tensor& x, const Tensor& w1, const Tensor& w2,
                             double negative_slope) {
  if (w1.dim(1) != x.dim(1) || w1.dim(0) != x.dim(1) || w2.dim(1) != x.dim(1) ||
      w2.dim(0) != x.dim(1)) {
    throw DimensionError("residual_block: weights must preserve " +
                         std::to_string(x.dim(1)) + " channels");
  }
  Tensor h = leaky_relu(conv2d(x, w1, 1, w1.dim(2) / 2), negative_slope);
  return add(conv2d(h, w2, 1, w2.dim(2) / 2), x);
}

// Spiking residual block, one time-step: the first conv's current drives an
// IF layer; the second conv integrates the spikes and the identity shortcut
// carries the input current through. Like the deepest encoder layer, the
// block's output stays an analog current (no trailing spike/reset), so with
// zero conv weights every time-step reduces to the identity.
inline Tensor spiking_residual_step(IFLayerState& state, const Tensor& x_current,
                                    const Tensor& w1, const Tensor& w2) {
  Tensor spikes = if_step(state, conv2d(x_current, w1, 1, w1.dim(2) / 2));
  return add(conv2d(spikes, w2, 1, w2.dim(2) / 2), x_current);
}

// Bilinear-interpolation weights for a fixed (untrained) stride-2 transposed
// conv that upsamples a 2-channel flow field.
inline Tensor bilinear_upsample_weights() {
  static const double taps[4] = {0.25, 0.75, 0.75, 0.25};
  Tensor w(Shape{2, 2, 4, 4});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) w.at(c, c, i, j) = taps[i] * taps[j];
  return w;
}

inline Tensor upsample_flow(const Tensor& flow) {
  return conv_transpose2d(flow, bilinear_upsample_weights(), 2, 1);
}

// Decoder over the accumulated encoder outputs. `deepest` is the residual
// stack's output at the coarsest resolution; `skips` are the encoder
// accumulators ordered as consumed by the stages (deepest-but-one first).
// Each stage upsamples with a stride-2 transposed conv, concatenates the
// skip and the upsampled previous flow, and predicts this scale's flow with
// a linear head. Returns the per-scale flows, coarsest first.
inline std::vector<Tensor> decoder_forward(const Tensor& deepest,
                                           const std::vector<Tensor>& skips,
                                           const ParamStore& params,
                                           const NetworkConfig& cfg) {
  const std::size_t L = cfg.depth();
  if (skips.size() != L - 1) {
    throw DimensionError("decoder_forward: expected " + std::to_string(L - 1) +
                         " skip tensors, got " + std::to_string(skips.size()));
  }
  std::vector<Tensor> flows;
  Tensor x = deepest;
  Tensor prev_flow;
  for (std::size_t stage = 1; stage <= L; ++stage) {
    const std::string base = "decoder" + std::to_string(stage);
    Tensor up = leaky_relu(conv_transpose2d(x, params.get(base + ".up.weight"), 2, 1),
                           cfg.negative_slope);
    std::vector<Tensor> parts{up};
    if (stage < L) {
      const Tensor& skip = skips[stage - 1];
      if (skip.dim(2) != up.dim(2) || skip.dim(3) != up.dim(3)) {
        throw DimensionError("decoder_forward: stage " + std::to_string(stage) +
                             " skip is " + shape_str(skip.shape()) +
                             " but upsampled activations are " + shape_str(up.shape()));
      }
      parts.push_back(skip);
    }
    if (prev_flow.defined()) parts.push_back(upsample_flow(prev_flow));
    Tensor cat = parts.size() == 1 ? parts[0] : concat(parts, 1);
    Tensor flow = conv2d(cat, params.get(base + ".flow.weight"), 1, cfg.flow_head_kernel / 2);
    flows.push_back(flow);
    prev_flow = flow;
    x = cat;
  }
  return flows;
}

struct HybridResult {
  std::vector<Tensor> flows;  // coarsest -> finest
  EncoderRun encoder;
  std::vector<IFLayerState> residual_states;  // IF states of converted blocks
};

// Full forward pass: N time-steps through the spiking encoder, residual
// blocks (spiking per the variant, analog otherwise), then the decoder. The
// converted residual prefix runs per time-step on the deepest encoder
// current; the first analog block consumes the accumulated output.
inline HybridResult hybrid_forward(const std::vector<Tensor>& step_frames,
                                   const ParamStore& params, const NetworkConfig& cfg,
                                   SynapticOpCounter* counter = nullptr) {
  if (step_frames.empty()) throw ContractError("hybrid_forward: no input frames");
  std::vector<Tensor> enc_weights;
  for (std::size_t l = 1; l <= cfg.depth(); ++l) {
    enc_weights.push_back(params.get("encoder" + std::to_string(l) + ".weight"));
  }
  const Tensor& r1c1 = params.get("residual1.conv1.weight");
  const Tensor& r1c2 = params.get("residual1.conv2.weight");
  const Tensor& r2c1 = params.get("residual2.conv1.weight");
  const Tensor& r2c2 = params.get("residual2.conv2.weight");

  HybridResult result;
  const std::size_t n_spiking_blocks =
      cfg.variant == HybridVariant::standard ? 0 : (cfg.variant == HybridVariant::one_residual_snn ? 1 : 2);
  for (std::size_t b = 0; b < n_spiking_blocks; ++b) {
    IFLayerState state;
    state.name = "residual" + std::to_string(b + 1);
    state.threshold = cfg.encoder.threshold;
    result.residual_states.push_back(state);
  }

  EncoderRun run = encoder_begin(cfg.encoder);
  Tensor spiking_acc;
  for (const Tensor& frame : step_frames) {
    Tensor current = encoder_step(run, frame, enc_weights, cfg.encoder, counter);
    if (n_spiking_blocks >= 1) {
      current = spiking_residual_step(result.residual_states[0], current, r1c1, r1c2);
    }
    if (n_spiking_blocks >= 2) {
      current = spiking_residual_step(result.residual_states[1], current, r2c1, r2c2);
    }
    if (n_spiking_blocks > 0) {
      spiking_acc = spiking_acc.defined() ? add(spiking_acc, current) : current;
    }
  }

  Tensor x;
  switch (cfg.variant) {
    case HybridVariant::standard:
      x = residual_block(run.accumulators.back(), r1c1, r1c2, cfg.negative_slope);
      x = residual_block(x, r2c1, r2c2, cfg.negative_slope);
      break;
    case HybridVariant::one_residual_snn:
      x = residual_block(spiking_acc, r2c1, r2c2, cfg.negative_slope);
      break;
    case HybridVariant::two_residual_snn:
      x = spiking_acc;
      break;
  }

  std::vector<Tensor> skips;
  for (std::size_t l = cfg.depth() - 1; l-- > 0;) skips.push_back(run.accumulators[l]);
  result.flows = decoder_forward(x, skips, params, cfg);
  result.encoder = std::move(run);
  return result;
}

// ------------------------------------------------------------------
// Checkpoints: magic "SFN1", version u32, 32-byte config digest, record
// count u64, then per record: name length u16, name bytes, rank u8, extents
// u32 each, values f64 each. All little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  std::uint32_t version = kCheckpointVersion;
  std::array<std::uint8_t, 32> digest{};
  std::vector<std::pair<std::string, Tensor>> records;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : records) {
      if (n == name) return &t;
    }
    return nullptr;
  }
};

inline void save_checkpoint(const std::string& path, const std::array<std::uint8_t, 32>& digest,
                            const std::vector<std::pair<std::string, Tensor>>& records) {
  std::string out = "SFN1";
  detail::put_u32(out, kCheckpointVersion);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  detail::put_u64(out, records.size());
  for (const auto& [name, tensor] : records) {
    if (name.size() > 0xffff) throw ContractError("save_checkpoint: name too long: " + name);
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    const Shape& shape = tensor.shape();
    if (shape.size() > 0xff) throw ContractError("save_checkpoint: rank too large for " + name);
    out.push_back(static_cast<char>(shape.size()));
    for (std::size_t d : shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : tensor.values()) detail::put_f64(out, v);
  }
  detail::write_file(path, out);
}

inline CheckpointData load_checkpoint(const std::string& path) {
  const std::string data = detail::read_file(path);
  detail::ByteReader r{data, 0, path};
  if (r.bytes(4) != "SFN1") throw FormatError(path + ": bad checkpoint magic (want SFN1)");
  CheckpointData ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError(path + ": unsupported checkpoint version " +
                          std::to_string(ckpt.version));
  }
  const std::string digest_bytes = r.bytes(32);
  std::copy(digest_bytes.begin(), digest_bytes.end(),
            reinterpret_cast<char*>(ckpt.digest.data()));
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.bytes(name_len);
    const std::uint8_t rank = r.u8();
    Shape shape;
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t extent = r.u32();
      if (extent == 0) throw FormatError(path + ": zero extent in record " + name);
      shape.push_back(extent);
      numel *= extent;
    }
    std::vector<double> values(numel);
    for (std::size_t v = 0; v < numel; ++v) values[v] = r.f64();
    ckpt.records.emplace_back(name, Tensor(std::move(shape), std::move(values)));
  }
  if (r.pos != data.size()) {
    throw FormatError(path + ": trailing bytes after " + std::to_string(count) +
                      " records");
  }
  return ckpt;
}

// Copies checkpoint parameter records into an initialized store, verifying
// the config digest and that every parameter is present with its shape.
inline void load_params(const CheckpointData& ckpt, const NetworkConfig& cfg,
                        ParamStore& params) {
  if (ckpt.digest != cfg.digest()) {
    throw CheckpointError("checkpoint config digest mismatch (checkpoint " +
                          hex_digest(ckpt.digest) + ", expected " +
                          hex_digest(cfg.digest()) + ")");
  }
  for (auto& [name, tensor] : params.entries()) {
    const Tensor* rec = ckpt.find(name);
    if (!rec) throw CheckpointError("checkpoint is missing parameter " + name);
    if (rec->shape() != tensor.shape()) {
      throw CheckpointError("checkpoint parameter " + name + " has shape " +
                            shape_str(rec->shape()) + ", expected " +
                            shape_str(tensor.shape()));
    }
    std::copy(rec->values().begin(), rec->values().end(), tensor.mutable_values().begin());
  }
}

}  // namespace spikeflow
