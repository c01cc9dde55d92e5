#pragma once

// Integrate-and-fire dynamics and the spiking encoder block.
//
// An IF neuron integrates input current into a membrane potential, emits a
// binary spike when the potential strictly exceeds its threshold, and resets
// the potential to zero exactly where it spiked. The spike function is not
// differentiable; training uses a surrogate: d(spike)/d(potential) =
// (1/threshold) at coordinates that spiked, 0 elsewhere. No gradient flows
// through the reset path (the post-reset membrane's derivative w.r.t. the
// pre-reset membrane is 0 at spiking coordinates), and none through the
// spike input of the reset.
//
// The encoder runs one strided spiking conv stack per time-step. Hidden
// layers fire; the deepest layer only integrates its conv current into an
// accumulator (it never spikes), and every layer sums its per-step outputs
// into an accumulator used by the analog half of the network.

#include <cstdint>
#include <string>
#include <vector>

#include "spikeflow/ops.hpp"
#include "spikeflow/tensor.hpp"

namespace spikeflow {

// Binary spike map: 1 where v strictly exceeds v_th. Surrogate gradient
// (1/v_th) gated by the spike.
inline Tensor threshold_spike(const Tensor& v, double v_th) {
  if (v_th <= 0.0) throw ContractError("threshold_spike: threshold must be > 0");
  Tensor out(v.shape());
  auto vv = v.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < vv.size(); ++i) ov[i] = vv[i] > v_th ? 1.0 : 0.0;
  detail::record_op("threshold_spike", {v}, out, [v, out, v_th]() {
    auto g = out.grad();
    auto gv = v.grad_buffer();
    auto spikes = out.values();
    const double surrogate = 1.0 / v_th;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (spikes[i] > 0.0) gv[i] += g[i] * surrogate;
    }
  });
  return out;
}

// Membrane after the spike reset: v where no spike, 0 where spiked. Gradient
// passes only through the non-spiking coordinates; the reset path and the
// spike input carry no gradient.
inline Tensor reset_after_spike(const Tensor& v, const Tensor& spikes) {
  detail::check_same_shape("reset_after_spike", v, spikes);
  Tensor out(v.shape());
  auto vv = v.values();
  auto sv = spikes.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < vv.size(); ++i) ov[i] = sv[i] > 0.0 ? 0.0 : vv[i];
  detail::record_op("reset_after_spike", {v}, out, [v, out, spikes]() {
    auto g = out.grad();
    auto gv = v.grad_buffer();
    auto sv = spikes.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (sv[i] == 0.0) gv[i] += g[i];
    }
  });
  return out;
}

// Per-layer IF state across the time-steps of one window.
struct IFLayerState {
  std::string name;
  double threshold = 0.75;
  Tensor membrane;                   // undefined until the first step
  std::vector<Tensor> spikes_per_step;
};

// Advances one IF layer by one time-step and returns its spike map.
inline Tensor if_step(IFLayerState& state, const Tensor& input_current) {
  if (!state.membrane.defined()) {
    state.membrane = Tensor(input_current.shape());
  } else {
    detail::check_same_shape("if_step", state.membrane, input_current);
  }
  Tensor v = add(state.membrane, input_current);
  Tensor spikes = threshold_spike(v, state.threshold);
  state.membrane = reset_after_spike(v, spikes);
  state.spikes_per_step.push_back(spikes);
  return spikes;
}

struct EncoderConfig {
  std::vector<std::size_t> widths = {64, 128, 256, 512};
  std::size_t in_channels = 4;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  double threshold = 0.75;

  static EncoderConfig with_base(std::size_t base, double threshold) {
    EncoderConfig cfg;
    cfg.widths = {base, 2 * base, 4 * base, 8 * base};
    cfg.threshold = threshold;
    return cfg;
  }

  std::size_t padding() const { return kernel / 2; }
  std::size_t n_layers() const { return widths.size(); }

  // [out_ch, in_ch, k, k] per layer.
  std::vector<Shape> weight_shapes() const {
    std::vector<Shape> shapes;
    std::size_t prev = in_channels;
    for (std::size_t w : widths) {
      shapes.push_back(Shape{w, prev, kernel, kernel});
      prev = w;
    }
    return shapes;
  }
};

inline std::uint64_t count_nonzero(const Tensor& t) {
  std::uint64_t n = 0;
  for (double v : t.values()) n += v != 0.0;
  return n;
}

// Tallies event-driven synaptic work per encoder conv layer: each spike (or
// active input pixel) arriving at a layer triggers on average
// kernel^2 * C_out / stride^2 accumulates across the output positions whose
// receptive fields contain it.
struct SynapticOpCounter {
  std::vector<double> per_layer;

  void record(std::size_t layer, std::uint64_t input_spikes, std::size_t kernel,
              std::size_t c_out, std::size_t stride) {
    if (per_layer.size() <= layer) per_layer.resize(layer + 1, 0.0);
    per_layer[layer] += static_cast<double>(input_spikes) *
                        static_cast<double>(kernel * kernel * c_out) /
                        static_cast<double>(stride * stride);
  }

  double total() const {
    double t = 0.0;
    for (double v : per_layer) t += v;
    return t;
  }
};

// Running state of the encoder over one window's time-steps.
struct EncoderRun {
  std::vector<IFLayerState> layers;   // spiking layers: all but the deepest
  std::vector<Tensor> accumulators;   // per layer: summed spikes; deepest: summed currents
  std::vector<Tensor> step_currents;  // deepest layer's conv current per step
  std::size_t steps = 0;
};

inline EncoderRun encoder_begin(const EncoderConfig& cfg) {
  EncoderRun run;
  for (std::size_t l = 0; l + 1 < cfg.n_layers(); ++l) {
    IFLayerState state;
    state.name = "encoder" + std::to_string(l + 1);
    state.threshold = cfg.threshold;
    run.layers.push_back(state);
  }
  run.accumulators.resize(cfg.n_layers());
  return run;
}

// Feeds one binary input frame [B,C_in,H,W] through the encoder stack,
// updating membranes and accumulators. Returns the deepest layer's conv
// current for this step (the integrator input), which spiking residual
// variants consume step by step.
inline Tensor encoder_step(EncoderRun& run, const Tensor& frame,
                           const std::vector<Tensor>& weights, const EncoderConfig& cfg,
                           SynapticOpCounter* counter = nullptr) {
  const std::size_t L = cfg.n_layers();
  if (weights.size() != L) {
    throw ContractError("encoder_step: " + std::to_string(weights.size()) +
                        " weight tensors for " + std::to_string(L) + " layers");
  }
  Tensor x = frame;
  Tensor deepest_current;
  for (std::size_t l = 0; l < L; ++l) {
    if (counter) {
      counter->record(l, count_nonzero(x), cfg.kernel, cfg.widths[l], cfg.stride);
    }
    Tensor current = conv2d(x, weights[l], cfg.stride, cfg.padding());
    if (l + 1 == L) {
      deepest_current = current;
      run.step_currents.push_back(current);
      run.accumulators[l] = run.accumulators[l].defined()
                                ? add(run.accumulators[l], current)
                                : current;
    } else {
      Tensor spikes = if_step(run.layers[l], current);
      run.accumulators[l] = run.accumulators[l].defined()
                                ? add(run.accumulators[l], spikes)
                                : spikes;
      x = spikes;
    }
  }
  ++run.steps;
  return deepest_current;
}

// Runs all time-steps of a window through the encoder.
inline EncoderRun encoder_forward(const std::vector<Tensor>& step_frames,
                                  const std::vector<Tensor>& weights,
                                  const EncoderConfig& cfg,
                                  SynapticOpCounter* counter = nullptr) {
  if (step_frames.empty()) throw ContractError("encoder_forward: no input frames");
  EncoderRun run = encoder_begin(cfg);
  for (const Tensor& frame : step_frames) encoder_step(run, frame, weights, cfg, counter);
  return run;
}

}  // namespace spikeflow
