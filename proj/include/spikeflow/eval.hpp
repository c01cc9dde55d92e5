#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spikeflow/errors.hpp"
#include "spikeflow/events.hpp"
#include "spikeflow/io.hpp"
#include "spikeflow/loss.hpp"
#include "spikeflow/network.hpp"
#include "spikeflow/snn.hpp"
#include "spikeflow/tensor.hpp"
#include "spikeflow/trainer.hpp"

namespace spikeflow {

// ---------------------------------------------------------------------------
// Endpoint error

struct AEEResult {
    double aee = 0.0;
    std::uint64_t masked_pixels = 0;
    bool empty_mask = false;  // flagged when no pixel passed both masks
};

// Mean Euclidean distance between predicted and ground-truth flow over the
// pixels where both masks are nonzero. Flows are [1,2,H,W]; masks [1,1,H,W].
inline AEEResult aee(const Tensor& pred, const Tensor& gt, const Tensor& event_mask,
                     const Tensor& gt_mask) {
    detail::check_rank("aee", "pred", pred, 4);
    detail::check_rank("aee", "gt", gt, 4);
    detail::check_rank("aee", "event_mask", event_mask, 4);
    detail::check_rank("aee", "gt_mask", gt_mask, 4);
    if (pred.shape() != gt.shape())
        throw DimensionError("aee: pred " + shape_str(pred.shape()) + " vs gt " +
                             shape_str(gt.shape()));
    if (pred.dim(1) != 2) throw DimensionError("aee: flow needs 2 channels");
    const std::size_t H = pred.dim(2), W = pred.dim(3);
    if (event_mask.dim(2) != H || event_mask.dim(3) != W || gt_mask.dim(2) != H ||
        gt_mask.dim(3) != W)
        throw DimensionError("aee: mask resolution mismatch");
    auto pv = pred.values();
    auto gv = gt.values();
    auto em = event_mask.values();
    auto gm = gt_mask.values();
    const std::size_t plane = H * W;
    double sum = 0.0;
    std::uint64_t count = 0;
    for (std::size_t i = 0; i < plane; ++i) {
        if (em[i] == 0.0 || gm[i] == 0.0) continue;
        const double du = pv[i] - gv[i];
        const double dv = pv[plane + i] - gv[plane + i];
        sum += std::sqrt(du * du + dv * dv);
        ++count;
    }
    AEEResult result;
    result.masked_pixels = count;
    result.empty_mask = count == 0;
    result.aee = count ? sum / static_cast<double>(count) : 0.0;
    return result;
}

// 1 where any channel of any frame carries a spike, per pixel. [N,4,H,W] in,
// [1,1,H,W] out.
inline Tensor event_presence_mask(const Tensor& frames) {
    detail::check_rank("event_presence_mask", "frames", frames, 4);
    const std::size_t H = frames.dim(2), W = frames.dim(3);
    Tensor mask({1, 1, H, W});
    auto fv = frames.values();
    auto mv = mask.mutable_values();
    const std::size_t plane = H * W;
    const std::size_t planes = frames.dim(0) * frames.dim(1);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < plane; ++i)
            if (fv[p * plane + i] != 0.0) mv[i] = 1.0;
    return mask;
}

// 1 where both ground-truth flow components are finite.
inline Tensor finite_mask(const Tensor& flow) {
    detail::check_rank("finite_mask", "flow", flow, 4);
    if (flow.dim(1) != 2) throw DimensionError("finite_mask: flow needs 2 channels");
    const std::size_t H = flow.dim(2), W = flow.dim(3);
    Tensor mask({1, 1, H, W});
    auto fv = flow.values();
    auto mv = mask.mutable_values();
    const std::size_t plane = H * W;
    for (std::size_t i = 0; i < plane; ++i)
        mv[i] = std::isfinite(fv[i]) && std::isfinite(fv[plane + i]) ? 1.0 : 0.0;
    return mask;
}

// ---------------------------------------------------------------------------
// Spike activity

// Spike tally for one population. `unit_steps` is the number of neuron-step
// observations (neurons x time-steps x batch, summed over samples), so
// rate() is the mean firing probability per neuron per step.
struct LayerActivity {
    std::string name;
    std::uint64_t spikes = 0;
    std::uint64_t unit_steps = 0;

    double rate() const {
        return unit_steps ? static_cast<double>(spikes) / static_cast<double>(unit_steps) : 0.0;
    }
};

struct ActivityProfile {
    LayerActivity input;                // event frames feeding the first conv
    std::vector<LayerActivity> layers;  // spiking populations in depth order

    const LayerActivity* find(const std::string& name) const {
        for (const LayerActivity& l : layers)
            if (l.name == name) return &l;
        return nullptr;
    }

    void merge(const ActivityProfile& other) {
        input.spikes += other.input.spikes;
        input.unit_steps += other.input.unit_steps;
        for (const LayerActivity& l : other.layers) {
            bool found = false;
            for (LayerActivity& mine : layers) {
                if (mine.name == l.name) {
                    mine.spikes += l.spikes;
                    mine.unit_steps += l.unit_steps;
                    found = true;
                    break;
                }
            }
            if (!found) layers.push_back(l);
        }
    }
};

// Firing statistics of one recorded IF layer: spikes counted across every
// step and batch element, normalized by neuron-step count.
inline LayerActivity measure_layer_activity(const IFLayerState& state) {
    if (state.spikes_per_step.empty())
        throw ContractError("measure_layer_activity: layer '" + state.name +
                            "' has no recorded spikes; run a forward pass first");
    LayerActivity activity;
    activity.name = state.name;
    for (const Tensor& spikes : state.spikes_per_step) {
        activity.spikes += count_nonzero(spikes);
        activity.unit_steps += spikes.numel();
    }
    return activity;
}

// Activity of every spiking population in one forward run, plus the input
// event-frame activity that drives the first conv layer.
inline ActivityProfile measure_spike_activity(const std::vector<Tensor>& step_frames,
                                              const HybridResult& run) {
    if (step_frames.empty())
        throw ContractError("measure_spike_activity: no input frames recorded");
    if (run.encoder.steps == 0)
        throw ContractError("measure_spike_activity: encoder recorded no steps");
    ActivityProfile profile;
    profile.input.name = "input";
    for (const Tensor& frame : step_frames) {
        profile.input.spikes += count_nonzero(frame);
        profile.input.unit_steps += frame.numel();
    }
    for (const IFLayerState& state : run.encoder.layers)
        profile.layers.push_back(measure_layer_activity(state));
    for (const IFLayerState& state : run.residual_states)
        profile.layers.push_back(measure_layer_activity(state));
    return profile;
}

// ---------------------------------------------------------------------------
// Synaptic operation counting

// Dense multiply-accumulate counts per layer for one forward pass of the
// analog equivalent. Transposed convolutions are charged one MAC per actual
// kernel tap (input positions x kernel area x output channels).
struct AnnOpCounts {
    std::vector<std::pair<std::string, std::uint64_t>> layers;
    std::uint64_t encoder_total = 0;
    std::uint64_t network_total = 0;
};

inline AnnOpCounts ann_op_counts(const NetworkConfig& cfg, std::size_t height,
                                 std::size_t width) {
    const EncoderConfig& enc = cfg.encoder;
    const std::size_t L = enc.n_layers();
    AnnOpCounts counts;
    auto add_layer = [&counts](const std::string& name, std::uint64_t macs, bool encoder) {
        counts.layers.emplace_back(name, macs);
        counts.network_total += macs;
        if (encoder) counts.encoder_total += macs;
    };

    std::size_t h = height, w = width;
    std::size_t c_in = enc.in_channels;
    std::vector<std::pair<std::size_t, std::size_t>> dims;  // post-layer dims
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t ho = (h + 2 * enc.padding() - enc.kernel) / enc.stride + 1;
        const std::size_t wo = (w + 2 * enc.padding() - enc.kernel) / enc.stride + 1;
        const std::uint64_t macs = static_cast<std::uint64_t>(ho) * wo * enc.widths[l] *
                                   enc.kernel * enc.kernel * c_in;
        add_layer("encoder" + std::to_string(l + 1), macs, true);
        c_in = enc.widths[l];
        h = ho;
        w = wo;
        dims.emplace_back(h, w);
    }

    const std::size_t deep = enc.widths.back();
    for (std::size_t b = 1; b <= 2; ++b)
        for (std::size_t c = 1; c <= 2; ++c)
            add_layer("residual" + std::to_string(b) + ".conv" + std::to_string(c),
                      static_cast<std::uint64_t>(h) * w * deep * 9 * deep, false);

    // Decoder: transposed conv up-path, then a flow head on each concat.
    std::size_t cur_c = deep;
    std::size_t cur_h = h, cur_w = w;
    for (std::size_t stage = 1; stage <= L; ++stage) {
        const std::size_t up_c = cfg.decoder_width(stage);
        const std::uint64_t up_macs =
            static_cast<std::uint64_t>(cur_h) * cur_w * cur_c * 16 * up_c;
        add_layer("decoder" + std::to_string(stage) + ".up", up_macs, false);
        cur_h *= 2;
        cur_w *= 2;
        std::size_t cat_c = up_c;
        if (stage < L) cat_c += enc.widths[L - 1 - stage];
        if (stage > 1) {
            cat_c += 2;
            // Fixed bilinear upsampler on the previous flow field.
            add_layer("decoder" + std::to_string(stage) + ".flow_up",
                      static_cast<std::uint64_t>(cur_h / 2) * (cur_w / 2) * 2 * 16 * 2, false);
        }
        const std::size_t hk = cfg.flow_head_kernel;
        add_layer("decoder" + std::to_string(stage) + ".flow",
                  static_cast<std::uint64_t>(cur_h) * cur_w * 2 * hk * hk * cat_c, false);
        cur_c = cat_c;
    }
    return counts;
}

struct LayerOpCount {
    std::string name;           // encoder conv layer
    std::uint64_t neurons = 0;  // input population size per sample (M)
    double fan_out = 0.0;       // accumulates triggered per input spike (C)
    double f_input = 0.0;       // firing rate of that population (F)
    double snn_ops = 0.0;       // event-driven accumulates over all steps/passes
    std::uint64_t ann_ops = 0;  // dense MACs for one analog pass per sample
};

struct OpCountReport {
    std::vector<LayerOpCount> layers;
    std::size_t n_steps = 0;
    std::uint64_t passes = 0;  // sample presentations folded into the profile
    double snn_total_ops = 0.0;
    double ann_encoder_ops = 0.0;  // dense encoder MACs for the same workload
    double ann_network_ops = 0.0;  // dense full-network MACs for the same workload
    double normalized_percent = 0.0;
    double energy_ratio = 5.1;
    double encoder_energy_benefit = 0.0;
    bool infinite_benefit = false;
    double overall_reduction_percent = 0.0;
};

// Event-driven operation count for the spiking encoder against its dense
// analog equivalent. Per layer the spiking cost is
//   M (input neurons) x C (k^2 * C_out / stride^2 accumulates per spike)
//   x F (input firing rate) x N time-steps,
// evaluated exactly from the recorded integer spike totals, so it equals an
// instrumented per-spike counter bit for bit. The energy figures weight dense
// MACs against spike-driven ACs by `energy_ratio`.
inline OpCountReport count_ops(const NetworkConfig& cfg, std::size_t height, std::size_t width,
                               const ActivityProfile& profile, std::size_t n_steps,
                               double energy_ratio = 5.1) {
    if (n_steps == 0) throw ContractError("count_ops: n_steps must be positive");
    if (energy_ratio <= 0.0) throw ContractError("count_ops: energy ratio must be positive");
    const EncoderConfig& enc = cfg.encoder;
    const std::size_t L = enc.n_layers();

    OpCountReport report;
    report.n_steps = n_steps;
    report.energy_ratio = energy_ratio;

    const std::uint64_t input_units =
        static_cast<std::uint64_t>(enc.in_channels) * height * width;
    if (profile.input.unit_steps == 0 ||
        profile.input.unit_steps % (input_units * n_steps) != 0)
        throw ContractError("count_ops: activity profile does not match geometry " +
                            std::to_string(height) + "x" + std::to_string(width) + " over " +
                            std::to_string(n_steps) + " steps");
    report.passes = profile.input.unit_steps / (input_units * n_steps);

    std::size_t h = height, w = width;
    std::size_t c_in = enc.in_channels;
    for (std::size_t l = 0; l < L; ++l) {
        const LayerActivity* source;
        if (l == 0) {
            source = &profile.input;
        } else {
            source = profile.find("encoder" + std::to_string(l));
            if (!source)
                throw ContractError("count_ops: profile is missing layer encoder" +
                                    std::to_string(l));
        }
        const std::uint64_t neurons = static_cast<std::uint64_t>(c_in) * h * w;
        if (source->unit_steps != neurons * n_steps * report.passes)
            throw ContractError("count_ops: activity for '" + source->name +
                                "' does not match its population size");
        const double f = source->rate();
        if (f < 0.0 || f > 1.0)
            throw ContractError("count_ops: firing rate out of [0,1] for '" + source->name +
                                "'");
        const std::size_t ho = (h + 2 * enc.padding() - enc.kernel) / enc.stride + 1;
        const std::size_t wo = (w + 2 * enc.padding() - enc.kernel) / enc.stride + 1;

        LayerOpCount layer;
        layer.name = "encoder" + std::to_string(l + 1);
        layer.neurons = neurons;
        layer.fan_out = static_cast<double>(enc.kernel * enc.kernel * enc.widths[l]) /
                        static_cast<double>(enc.stride * enc.stride);
        layer.f_input = f;
        layer.snn_ops = static_cast<double>(source->spikes * enc.kernel * enc.kernel *
                                            enc.widths[l]) /
                        static_cast<double>(enc.stride * enc.stride);
        layer.ann_ops = static_cast<std::uint64_t>(ho) * wo * enc.widths[l] * enc.kernel *
                        enc.kernel * c_in;
        report.layers.push_back(layer);
        report.snn_total_ops += layer.snn_ops;

        c_in = enc.widths[l];
        h = ho;
        w = wo;
    }

    const AnnOpCounts dense = ann_op_counts(cfg, height, width);
    const double passes = static_cast<double>(report.passes);
    report.ann_encoder_ops = static_cast<double>(dense.encoder_total) * passes;
    report.ann_network_ops = static_cast<double>(dense.network_total) * passes;
    report.normalized_percent = 100.0 * report.snn_total_ops / report.ann_encoder_ops;
    if (report.snn_total_ops == 0.0) {
        report.infinite_benefit = true;
        report.encoder_energy_benefit = std::numeric_limits<double>::infinity();
    } else {
        report.encoder_energy_benefit =
            report.ann_encoder_ops * energy_ratio / report.snn_total_ops;
    }
    report.overall_reduction_percent = 100.0 *
                                       (report.ann_encoder_ops * energy_ratio -
                                        report.snn_total_ops) /
                                       (report.ann_network_ops * energy_ratio);
    return report;
}

// JSON object for an operation-count report; infinities are spelled out
// since JSON has no literal for them.
inline nlohmann::ordered_json op_report_json(const OpCountReport& report) {
    nlohmann::ordered_json j;
    j["n_steps"] = report.n_steps;
    j["passes"] = report.passes;
    j["snn_total_ops"] = report.snn_total_ops;
    j["ann_encoder_ops"] = report.ann_encoder_ops;
    j["ann_network_ops"] = report.ann_network_ops;
    j["normalized_percent"] = report.normalized_percent;
    j["energy_ratio"] = report.energy_ratio;
    if (report.infinite_benefit)
        j["encoder_energy_benefit"] = "infinity";
    else
        j["encoder_energy_benefit"] = report.encoder_energy_benefit;
    j["infinite_benefit"] = report.infinite_benefit;
    j["overall_reduction_percent"] = report.overall_reduction_percent;
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const LayerOpCount& l : report.layers) {
        nlohmann::ordered_json lj;
        lj["name"] = l.name;
        lj["neurons"] = l.neurons;
        lj["fan_out"] = l.fan_out;
        lj["f_input"] = l.f_input;
        lj["snn_ops"] = l.snn_ops;
        lj["ann_ops"] = l.ann_ops;
        layers.push_back(lj);
    }
    j["layers"] = layers;
    return j;
}

inline nlohmann::ordered_json activity_json(const ActivityProfile& profile) {
    nlohmann::ordered_json j;
    j["input_rate"] = profile.input.rate();
    j["input_spikes"] = profile.input.spikes;
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const LayerActivity& l : profile.layers) {
        nlohmann::ordered_json lj;
        lj["name"] = l.name;
        lj["spikes"] = l.spikes;
        lj["rate"] = l.rate();
        layers.push_back(lj);
    }
    j["layers"] = layers;
    return j;
}

// ---------------------------------------------------------------------------
// Flow rendering

// Magnitude image: |flow| scaled by the maximum magnitude in the field.
inline Tensor flow_magnitude_image(const Tensor& flow) {
    detail::check_rank("flow_magnitude_image", "flow", flow, 4);
    const std::size_t H = flow.dim(2), W = flow.dim(3);
    const std::size_t plane = H * W;
    auto fv = flow.values();
    Tensor image({1, 1, H, W});
    auto iv = image.mutable_values();
    double max_mag = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
        const double m = std::sqrt(fv[i] * fv[i] + fv[plane + i] * fv[plane + i]);
        iv[i] = m;
        max_mag = std::max(max_mag, m);
    }
    if (max_mag > 0.0)
        for (std::size_t i = 0; i < plane; ++i) iv[i] /= max_mag;
    return image;
}

// Direction-coded image: hue from the flow angle, saturation from relative
// magnitude, full value. Stationary pixels render white.
inline Tensor flow_direction_image(const Tensor& flow) {
    detail::check_rank("flow_direction_image", "flow", flow, 4);
    const std::size_t H = flow.dim(2), W = flow.dim(3);
    const std::size_t plane = H * W;
    auto fv = flow.values();
    Tensor image({1, 3, H, W});
    auto iv = image.mutable_values();
    double max_mag = 0.0;
    for (std::size_t i = 0; i < plane; ++i)
        max_mag = std::max(max_mag,
                           std::sqrt(fv[i] * fv[i] + fv[plane + i] * fv[plane + i]));
    for (std::size_t i = 0; i < plane; ++i) {
        const double u = fv[i], v = fv[plane + i];
        const double mag = std::sqrt(u * u + v * v);
        const double sat = max_mag > 0.0 ? mag / max_mag : 0.0;
        double hue = std::atan2(v, u) / (2.0 * 3.14159265358979323846);  // [-0.5, 0.5]
        if (hue < 0.0) hue += 1.0;
        const double hh = hue * 6.0;
        const int sector = static_cast<int>(hh) % 6;
        const double frac = hh - std::floor(hh);
        const double p = 1.0 - sat;
        const double q = 1.0 - sat * frac;
        const double t = 1.0 - sat * (1.0 - frac);
        double r = 1.0, g = 1.0, b = 1.0;
        switch (sector) {
            case 0: r = 1.0; g = t; b = p; break;
            case 1: r = q; g = 1.0; b = p; break;
            case 2: r = p; g = 1.0; b = t; break;
            case 3: r = p; g = q; b = 1.0; break;
            case 4: r = t; g = p; b = 1.0; break;
            default: r = 1.0; g = p; b = q; break;
        }
        iv[i] = r;
        iv[plane + i] = g;
        iv[2 * plane + i] = b;
    }
    return image;
}

// ---------------------------------------------------------------------------
// Full evaluation pass

struct SampleEval {
    std::string stem;
    double aee = 0.0;
    double zero_flow_aee = 0.0;
    std::uint64_t masked_pixels = 0;
    double loss = 0.0;
};

struct EvalReport {
    std::vector<SampleEval> samples;
    double mean_aee = 0.0;
    double mean_zero_flow_aee = 0.0;
    double mean_loss = 0.0;
    ActivityProfile activity;
    OpCountReport ops;
    std::string csv_path;
    std::string summary_path;
};

struct EvalOptions {
    double energy_ratio = 5.1;
    bool write_visualizations = true;
    bool use_gt_flow = false;  // score ground truth against itself (plumbing check)
};

namespace detail {

// Center-crops [*,*,H,W] down to the largest multiple of `factor`.
inline Tensor center_crop_to_multiple(const Tensor& t, std::size_t factor) {
    const std::size_t H = t.dim(2), W = t.dim(3);
    const std::size_t h = H - H % factor, w = W - W % factor;
    if (h == 0 || w == 0)
        throw ContractError("evaluation resolution " + std::to_string(H) + "x" +
                            std::to_string(W) + " is smaller than the network factor " +
                            std::to_string(factor));
    if (h == H && w == W) return t;
    return crop(t, (H - h) / 2, (W - w) / 2, h, w);
}

}  // namespace detail

// Runs the network over every sample at center-cropped resolution, scoring
// endpoint error over pixels that carry events and valid ground truth, and
// tallying spiking activity into an energy report sized to the evaluated
// geometry.
inline EvalReport evaluate(const std::vector<DataSample>& dataset, const TrainConfig& cfg,
                           const std::string& checkpoint_path, const std::string& out_dir,
                           const EvalOptions& options = {}) {
    namespace fs = std::filesystem;
    cfg.validate();
    if (dataset.empty()) throw ContractError("evaluation dataset is empty");
    fs::create_directories(out_dir);

    const NetworkConfig net_cfg = cfg.network();
    const std::size_t factor = std::size_t(1) << net_cfg.depth();
    ParamStore params = init_params(net_cfg, cfg.seed);
    const CheckpointData ckpt = load_checkpoint(checkpoint_path);
    load_params(ckpt, net_cfg, params);

    EvalReport report;
    std::string csv = "sample,aee,zero_flow_aee,masked_pixels,loss\n";

    std::size_t eval_h = 0, eval_w = 0;
    double aee_sum = 0.0, zero_sum = 0.0, loss_sum = 0.0;

    for (const DataSample& sample : dataset) {
        EncodedSample enc = encode_sample(sample, cfg.n_frames);
        enc.frames = detail::center_crop_to_multiple(enc.frames, factor);
        enc.first = detail::center_crop_to_multiple(enc.first, factor);
        enc.second = detail::center_crop_to_multiple(enc.second, factor);
        enc.flow = detail::center_crop_to_multiple(enc.flow, factor);
        const std::size_t H = enc.first.dim(2), W = enc.first.dim(3);
        if (eval_h == 0) {
            eval_h = H;
            eval_w = W;
        } else if (eval_h != H || eval_w != W) {
            throw ContractError("evaluation requires a uniform dataset resolution, got " +
                                std::to_string(H) + "x" + std::to_string(W) + " after " +
                                std::to_string(eval_h) + "x" + std::to_string(eval_w));
        }

        std::vector<Tensor> step_frames;
        step_frames.reserve(cfg.n_frames);
        const Shape& fshape = enc.frames.shape();
        for (std::size_t s = 0; s < cfg.n_frames; ++s)
            step_frames.push_back(slice(enc.frames, {s, 0, 0, 0}, {1, fshape[1], fshape[2], fshape[3]}));

        HybridResult fwd = hybrid_forward(step_frames, params, net_cfg);
        const Tensor pred = options.use_gt_flow ? enc.flow : fwd.flows.back();

        GrayImagePair images;
        images.first = enc.first;
        images.second = enc.second;
        LossBreakdown breakdown = total_loss_detailed(fwd.flows, images, cfg.loss());

        const Tensor event_mask = event_presence_mask(enc.frames);
        const Tensor valid_mask = finite_mask(enc.flow);
        const AEEResult scored = aee(pred, enc.flow, event_mask, valid_mask);
        const AEEResult zero = aee(Tensor(enc.flow.shape()), enc.flow, event_mask, valid_mask);

        report.activity.merge(measure_spike_activity(step_frames, fwd));

        SampleEval row;
        row.stem = sample.stem;
        row.aee = scored.aee;
        row.zero_flow_aee = zero.aee;
        row.masked_pixels = scored.masked_pixels;
        row.loss = breakdown.total.values()[0];
        report.samples.push_back(row);
        aee_sum += row.aee;
        zero_sum += row.zero_flow_aee;
        loss_sum += row.loss;
        csv += row.stem + "," + detail::format_double(row.aee) + "," +
               detail::format_double(row.zero_flow_aee) + "," +
               std::to_string(row.masked_pixels) + "," + detail::format_double(row.loss) + "\n";

        if (options.write_visualizations) {
            write_pgm((fs::path(out_dir) / (sample.stem + ".flow-mag.pgm")).string(),
                      flow_magnitude_image(pred));
            write_ppm((fs::path(out_dir) / (sample.stem + ".flow-dir.ppm")).string(),
                      flow_direction_image(pred));
        }
    }

    const double n = static_cast<double>(report.samples.size());
    report.mean_aee = aee_sum / n;
    report.mean_zero_flow_aee = zero_sum / n;
    report.mean_loss = loss_sum / n;
    report.ops = count_ops(net_cfg, eval_h, eval_w, report.activity, cfg.n_frames,
                           options.energy_ratio);

    report.csv_path = (fs::path(out_dir) / "aee.csv").string();
    detail::write_file(report.csv_path, csv);

    nlohmann::ordered_json summary;
    summary["samples"] = report.samples.size();
    summary["mean_aee"] = report.mean_aee;
    summary["mean_zero_flow_aee"] = report.mean_zero_flow_aee;
    summary["mean_loss"] = report.mean_loss;
    summary["resolution"] = {eval_h, eval_w};
    summary["activity"] = activity_json(report.activity);
    summary["energy"] = op_report_json(report.ops);
    report.summary_path = (fs::path(out_dir) / "summary.json").string();
    detail::write_file(report.summary_path, summary.dump(2) + "\n");
    return report;
}

}  // namespace spikeflow
