#pragma once

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "spikeflow/errors.hpp"
#include "spikeflow/events.hpp"
#include "spikeflow/io.hpp"
#include "spikeflow/loss.hpp"
#include "spikeflow/network.hpp"
#include "spikeflow/tensor.hpp"

namespace spikeflow {

// Training configuration. `dt_mode` selects the event-window regime: "dt1"
// windows span one image frame apart, "dt4" spans four. Picking a mode applies
// its default n_frames / lambda / threshold trio; explicit keys still win.
struct TrainConfig {
    std::string dt_mode = "dt1";
    std::size_t n_frames = 5;
    double lambda = 10.0;
    double threshold = 0.75;
    double learning_rate = 5e-5;
    std::size_t batch_size = 2;
    std::size_t epochs = 1;
    std::uint64_t seed = 1;
    std::size_t crop_size = 0;  // 0 keeps the full resolution
    double flip_probability = 0.5;
    std::size_t base_width = 64;
    HybridVariant variant = HybridVariant::standard;

    void apply_dt_defaults() {
        if (dt_mode == "dt1") {
            n_frames = 5;
            lambda = 10.0;
            threshold = 0.75;
        } else if (dt_mode == "dt4") {
            n_frames = 20;
            lambda = 1.0;
            threshold = 0.5;
        } else {
            throw ContractError("dt_mode must be dt1 or dt4, got '" + dt_mode + "'");
        }
    }

    void validate() const {
        if (dt_mode != "dt1" && dt_mode != "dt4")
            throw ContractError("dt_mode must be dt1 or dt4, got '" + dt_mode + "'");
        if (n_frames == 0) throw ContractError("n_frames must be positive");
        if (threshold <= 0.0) throw ContractError("threshold must be positive");
        if (lambda < 0.0) throw ContractError("lambda must be non-negative");
        if (learning_rate <= 0.0) throw ContractError("learning_rate must be positive");
        if (batch_size == 0) throw ContractError("batch_size must be positive");
        if (flip_probability < 0.0 || flip_probability > 1.0)
            throw ContractError("flip_probability must lie in [0, 1]");
        if (base_width == 0) throw ContractError("base_width must be positive");
    }

    NetworkConfig network() const {
        NetworkConfig cfg = NetworkConfig::with_base(base_width, threshold);
        cfg.variant = variant;
        return cfg;
    }

    LossConfig loss() const {
        LossConfig cfg;
        cfg.lambda = lambda;
        return cfg;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double_value(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ContractError("config key '" + key + "' expects a number, got '" + value + "'");
    }
}

inline std::uint64_t parse_uint_value(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw ContractError("config key '" + key + "' expects a non-negative integer, got '" +
                            value + "'");
    }
}

}  // namespace detail

// Parses `key = value` lines. Blank lines and lines starting with '#' are
// skipped. Unknown keys are rejected by name. dt_mode defaults are applied
// first so explicit keys in the same file override them regardless of order.
inline TrainConfig parse_train_config(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ContractError("config line " + std::to_string(line_no) +
                                " is not of the form key = value: '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ContractError("config line " + std::to_string(line_no) + " has an empty key");
        entries.emplace_back(key, value);
    }

    TrainConfig cfg;
    for (const auto& [key, value] : entries) {
        if (key == "dt_mode") {
            cfg.dt_mode = value;
            cfg.apply_dt_defaults();
        }
    }
    for (const auto& [key, value] : entries) {
        if (key == "dt_mode") {
            continue;
        } else if (key == "n_frames") {
            cfg.n_frames = static_cast<std::size_t>(detail::parse_uint_value(key, value));
        } else if (key == "lambda") {
            cfg.lambda = detail::parse_double_value(key, value);
        } else if (key == "threshold") {
            cfg.threshold = detail::parse_double_value(key, value);
        } else if (key == "learning_rate") {
            cfg.learning_rate = detail::parse_double_value(key, value);
        } else if (key == "batch_size") {
            cfg.batch_size = static_cast<std::size_t>(detail::parse_uint_value(key, value));
        } else if (key == "epochs") {
            cfg.epochs = static_cast<std::size_t>(detail::parse_uint_value(key, value));
        } else if (key == "seed") {
            cfg.seed = detail::parse_uint_value(key, value);
        } else if (key == "crop_size") {
            cfg.crop_size = static_cast<std::size_t>(detail::parse_uint_value(key, value));
        } else if (key == "flip_probability") {
            cfg.flip_probability = detail::parse_double_value(key, value);
        } else if (key == "base_width") {
            cfg.base_width = static_cast<std::size_t>(detail::parse_uint_value(key, value));
        } else if (key == "variant") {
            cfg.variant = parse_variant(value);
        } else {
            throw ContractError("unknown config key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

inline TrainConfig parse_train_config_file(const std::string& path) {
    return parse_train_config(detail::read_file(path));
}

// Step decay: x0.7 at epochs 5 and 10, then every 10 epochs from 20 on.
inline double lr_schedule(std::size_t epoch, double base_lr) {
    std::size_t drops = 0;
    if (epoch >= 5) ++drops;
    if (epoch >= 10) ++drops;
    if (epoch >= 20) drops += (epoch - 20) / 10 + 1;
    return base_lr * std::pow(0.7, static_cast<double>(drops));
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::uint64_t step = 0;
    // First/second moment buffers keyed by parameter name, insertion-ordered.
    std::vector<std::pair<std::string, std::pair<Tensor, Tensor>>> moments;

    std::pair<Tensor, Tensor>& moment_for(const std::string& name, const Shape& shape) {
        for (auto& entry : moments)
            if (entry.first == name) return entry.second;
        moments.emplace_back(name, std::make_pair(Tensor::zeros(shape), Tensor::zeros(shape)));
        return moments.back().second;
    }
};

// One bias-corrected Adam update over every parameter in the store, reading
// the accumulated gradients. Gradients are left untouched; callers zero them.
inline void adam_step(ParamStore& params, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, param] : params.entries()) {
        auto g = param.grad_buffer();
        if (strict_numerics()) {
            for (double gv : g)
                if (!std::isfinite(gv))
                    throw NumericError("non-finite gradient for parameter '" + name + "'");
        }
        auto& [m, v] = state.moment_for(name, param.shape());
        auto mv = m.mutable_values();
        auto vv = v.mutable_values();
        auto pv = param.mutable_values();
        for (std::size_t i = 0; i < g.size(); ++i) {
            mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * g[i];
            vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = mv[i] / bc1;
            const double v_hat = vv[i] / bc2;
            pv[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Dataset

// One stored sample: raw events plus the bracketing grayscale pair and the
// ground-truth flow over the window.
struct DataSample {
    std::string stem;
    EventStream events;
    GrayImagePair images;
    Tensor flow;
};

// Loads every `<stem>.events` in `dir` together with its `<stem>.first.pgm`,
// `<stem>.second.pgm` and `<stem>.flow.flo` siblings, sorted by stem.
inline std::vector<DataSample> load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir);
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        const std::string suffix = ".events";
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            stems.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw IoError("dataset directory has no .events files: " + dir);
    std::vector<DataSample> samples;
    samples.reserve(stems.size());
    for (const std::string& stem : stems) {
        const std::string base = (fs::path(dir) / stem).string();
        DataSample s;
        s.stem = stem;
        s.events = parse_event_file(base + ".events");
        s.images.first = read_pgm(base + ".first.pgm");
        s.images.second = read_pgm(base + ".second.pgm");
        s.flow = read_flow(base + ".flow.flo");
        samples.push_back(std::move(s));
    }
    return samples;
}

// Encoding window for a stored stream: from zero to the last event timestamp
// (events are time-ordered). Empty streams use a unit window and encode to
// all-zero frames.
inline std::pair<std::uint64_t, std::uint64_t> sample_window(const EventStream& stream) {
    std::uint64_t t_end = stream.events.empty() ? 1 : stream.events.back().t;
    if (t_end == 0) t_end = 1;
    return {0, t_end};
}

// Sample with encoding already applied; augmentation and batching start here.
struct EncodedSample {
    Tensor frames;  // [N, 4, H, W]
    Tensor first;   // [1, 1, H, W]
    Tensor second;  // [1, 1, H, W]
    Tensor flow;    // [1, 2, H, W]
};

inline EncodedSample encode_sample(const DataSample& sample, std::size_t n_frames) {
    auto [t0, t1] = sample_window(sample.events);
    EncodedSample enc;
    enc.frames = encode_spike_input(sample.events, t0, t1, n_frames).frames;
    enc.first = sample.images.first;
    enc.second = sample.images.second;
    enc.flow = sample.flow;
    return enc;
}

namespace detail {

// Deterministic draws independent of standard-library distribution details.
struct DetRng {
    std::mt19937_64 engine;

    explicit DetRng(std::uint64_t seed) : engine(seed) {}

    double next_double() {  // uniform in [0, 1)
        return static_cast<double>(engine() >> 11) * 0x1.0p-53;
    }
    bool next_bool(double p) { return next_double() < p; }
    std::size_t next_index(std::size_t n) {
        return static_cast<std::size_t>(engine() % static_cast<std::uint64_t>(n));
    }
    void shuffle(std::vector<std::size_t>& order) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[next_index(i)]);
    }
};

// Seeds an epoch-local generator from (run seed, epoch) so that resuming at an
// epoch boundary replays the exact draw sequence of an uninterrupted run.
inline std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

inline Tensor flip_horizontal(const Tensor& t) {  // reverses the W axis
    detail::check_rank("flip_horizontal", "input", t, 4);
    const Shape& s = t.shape();
    Tensor out(s);
    auto in = t.values();
    auto ov = out.mutable_values();
    const std::size_t W = s[3];
    const std::size_t rows = t.numel() / W;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t x = 0; x < W; ++x) ov[r * W + x] = in[r * W + (W - 1 - x)];
    return out;
}

inline Tensor flip_vertical(const Tensor& t) {  // reverses the H axis
    detail::check_rank("flip_vertical", "input", t, 4);
    const Shape& s = t.shape();
    Tensor out(s);
    auto in = t.values();
    auto ov = out.mutable_values();
    const std::size_t H = s[2], W = s[3];
    const std::size_t planes = s[0] * s[1];
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                ov[(p * H + y) * W + x] = in[(p * H + (H - 1 - y)) * W + x];
    return out;
}

inline Tensor negate_channel(const Tensor& t, std::size_t channel) {
    detail::check_rank("negate_channel", "input", t, 4);
    Tensor out(t.shape());
    const Shape& s = t.shape();
    auto ov = out.mutable_values();
    std::copy(t.values().begin(), t.values().end(), ov.begin());
    const std::size_t plane = s[2] * s[3];
    for (std::size_t b = 0; b < s[0]; ++b) {
        double* base = ov.data() + (b * s[1] + channel) * plane;
        for (std::size_t i = 0; i < plane; ++i) base[i] = -base[i];
    }
    return out;
}

inline Tensor crop(const Tensor& t, std::size_t y0, std::size_t x0, std::size_t h,
                   std::size_t w) {
    detail::check_rank("crop", "input", t, 4);
    const Shape& s = t.shape();
    if (y0 + h > s[2] || x0 + w > s[3])
        throw ContractError("crop window exceeds tensor bounds");
    Tensor out({s[0], s[1], h, w});
    auto in = t.values();
    auto ov = out.mutable_values();
    for (std::size_t p = 0; p < s[0] * s[1]; ++p)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                ov[(p * h + y) * w + x] = in[(p * s[2] + y0 + y) * s[3] + x0 + x];
    return out;
}

}  // namespace detail

// Random horizontal/vertical flips plus a random crop, applied consistently to
// the spike frames, both images and the ground-truth flow. Flipping an axis
// negates the matching flow component (u for horizontal, v for vertical).
// Draw order is fixed: h-flip, v-flip, crop row, crop column.
inline EncodedSample augment_sample(const EncodedSample& sample, detail::DetRng& rng,
                                    std::size_t crop_size, double flip_probability) {
    EncodedSample out = sample;
    const bool do_h = rng.next_bool(flip_probability);
    const bool do_v = rng.next_bool(flip_probability);
    if (do_h) {
        out.frames = detail::flip_horizontal(out.frames);
        out.first = detail::flip_horizontal(out.first);
        out.second = detail::flip_horizontal(out.second);
        out.flow = detail::negate_channel(detail::flip_horizontal(out.flow), 0);
    }
    if (do_v) {
        out.frames = detail::flip_vertical(out.frames);
        out.first = detail::flip_vertical(out.first);
        out.second = detail::flip_vertical(out.second);
        out.flow = detail::negate_channel(detail::flip_vertical(out.flow), 1);
    }
    if (crop_size > 0) {
        const std::size_t H = out.first.dim(2), W = out.first.dim(3);
        if (crop_size > H || crop_size > W)
            throw ContractError("crop_size " + std::to_string(crop_size) +
                                " exceeds sample resolution " + std::to_string(H) + "x" +
                                std::to_string(W));
        const std::size_t y0 = rng.next_index(H - crop_size + 1);
        const std::size_t x0 = rng.next_index(W - crop_size + 1);
        out.frames = detail::crop(out.frames, y0, x0, crop_size, crop_size);
        out.first = detail::crop(out.first, y0, x0, crop_size, crop_size);
        out.second = detail::crop(out.second, y0, x0, crop_size, crop_size);
        out.flow = detail::crop(out.flow, y0, x0, crop_size, crop_size);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint payload shared by trainer and evaluation

namespace detail {

inline Tensor copy_tensor(const Tensor& t) {
    return Tensor(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
}

inline std::vector<std::pair<std::string, Tensor>> training_records(
    const ParamStore& params, const AdamState& opt, std::size_t completed_epoch) {
    std::vector<std::pair<std::string, Tensor>> records;
    for (const auto& [name, param] : params.entries())
        records.emplace_back(name, copy_tensor(param));
    for (const auto& [name, moment] : opt.moments) {
        records.emplace_back("optim/m/" + name, copy_tensor(moment.first));
        records.emplace_back("optim/v/" + name, copy_tensor(moment.second));
    }
    records.emplace_back("optim/step", Tensor::scalar(static_cast<double>(opt.step)));
    records.emplace_back("trainer/epoch", Tensor::scalar(static_cast<double>(completed_epoch)));
    return records;
}

struct StrictScope {
    bool previous;
    explicit StrictScope(bool enable) : previous(strict_numerics()) {
        set_strict_numerics(enable);
    }
    ~StrictScope() { set_strict_numerics(previous); }
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Restores optimizer state recorded by a training checkpoint. Returns the
// next epoch to run (0 for a plain-parameters checkpoint).
inline std::size_t load_training_state(const CheckpointData& ckpt, const NetworkConfig& cfg,
                                       ParamStore& params, AdamState& opt) {
    load_params(ckpt, cfg, params);
    opt.moments.clear();
    opt.step = 0;
    for (const auto& [name, param] : params.entries()) {
        const Tensor* m = ckpt.find("optim/m/" + name);
        const Tensor* v = ckpt.find("optim/v/" + name);
        if (!m || !v) continue;
        if (m->shape() != param.shape() || v->shape() != param.shape())
            throw CheckpointError("optimizer moment shape mismatch for '" + name + "'");
        opt.moments.emplace_back(
            name, std::make_pair(detail::copy_tensor(*m), detail::copy_tensor(*v)));
    }
    if (const Tensor* step = ckpt.find("optim/step"))
        opt.step = static_cast<std::uint64_t>(step->values()[0]);
    if (const Tensor* epoch = ckpt.find("trainer/epoch"))
        return static_cast<std::size_t>(epoch->values()[0]) + 1;
    return 0;
}

struct TrainResult {
    std::size_t iterations = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double best_epoch_loss = 0.0;
    std::string csv_path;
    std::string last_checkpoint;
    std::string best_checkpoint;
};

// Full training loop. Deterministic for a fixed (config, dataset, resume
// point): per-epoch RNG depends only on (seed, epoch), batches are assembled
// in shuffled-index order, and all artifacts are written with exact decimal
// formatting. Checkpoints are written once per epoch plus a best-loss copy.
inline TrainResult train(const std::vector<DataSample>& dataset, const TrainConfig& cfg,
                         const std::string& out_dir, const std::string& resume_path = "") {
    namespace fs = std::filesystem;
    cfg.validate();
    if (dataset.empty()) throw ContractError("training dataset is empty");
    fs::create_directories(out_dir);

    const NetworkConfig net_cfg = cfg.network();
    const LossConfig loss_cfg = cfg.loss();
    const std::size_t ds_factor = std::size_t(1) << net_cfg.depth();

    std::vector<EncodedSample> encoded;
    encoded.reserve(dataset.size());
    for (const DataSample& sample : dataset) encoded.push_back(encode_sample(sample, cfg.n_frames));

    for (const EncodedSample& enc : encoded) {
        const std::size_t h = cfg.crop_size ? cfg.crop_size : enc.first.dim(2);
        const std::size_t w = cfg.crop_size ? cfg.crop_size : enc.first.dim(3);
        if (h % ds_factor != 0 || w % ds_factor != 0)
            throw ContractError("training resolution " + std::to_string(h) + "x" +
                                std::to_string(w) + " must be divisible by " +
                                std::to_string(ds_factor));
    }

    ParamStore params = init_params(net_cfg, cfg.seed);
    AdamState opt;
    std::size_t start_epoch = 0;
    if (!resume_path.empty()) {
        CheckpointData ckpt = load_checkpoint(resume_path);
        start_epoch = load_training_state(ckpt, net_cfg, params, opt);
    }

    const std::string csv_path = (fs::path(out_dir) / "loss.csv").string();
    std::string csv;
    if (start_epoch == 0 || !fs::exists(csv_path)) {
        csv = "epoch,iteration,total,photometric,smoothness,lr\n";
    } else {
        csv = detail::read_file(csv_path);
    }

    TrainResult result;
    result.csv_path = csv_path;
    result.best_epoch_loss = std::numeric_limits<double>::infinity();
    std::size_t iteration = opt.step;
    bool first_loss_seen = false;

    for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg.learning_rate);
        detail::DetRng rng(detail::epoch_seed(cfg.seed, epoch));
        std::vector<std::size_t> order(encoded.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);

        double epoch_loss_sum = 0.0;
        std::size_t epoch_batches = 0;

        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, order.size());
            std::vector<EncodedSample> batch;
            batch.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i)
                batch.push_back(
                    augment_sample(encoded[order[i]], rng, cfg.crop_size, cfg.flip_probability));

            // Stack per-step frames and images across the batch.
            const std::size_t n = cfg.n_frames;
            std::vector<Tensor> step_frames;
            step_frames.reserve(n);
            for (std::size_t s = 0; s < n; ++s) {
                std::vector<Tensor> parts;
                parts.reserve(batch.size());
                for (const EncodedSample& b : batch) {
                    const Shape& fs_ = b.frames.shape();
                    parts.push_back(slice(b.frames, {s, 0, 0, 0}, {1, fs_[1], fs_[2], fs_[3]}));
                }
                step_frames.push_back(concat(parts, 0));
            }
            std::vector<Tensor> firsts, seconds;
            for (const EncodedSample& b : batch) {
                firsts.push_back(b.first);
                seconds.push_back(b.second);
            }
            GrayImagePair images;
            images.first = concat(firsts, 0);
            images.second = concat(seconds, 0);

            detail::StrictScope strict(true);
            GradTape tape;
            LossBreakdown breakdown;
            try {
                TapeScope scope(tape);
                HybridResult fwd = hybrid_forward(step_frames, params, net_cfg);
                breakdown = total_loss_detailed(fwd.flows, images, loss_cfg);
                tape.backward(breakdown.total);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (iteration " +
                                   std::to_string(iteration) + ")");
            }
            adam_step(params, opt, lr);
            for (auto& [name, param] : params.entries()) param.zero_grad();

            const double total = breakdown.total.values()[0];
            const double photo = breakdown.photometric.values()[0];
            const double smooth = breakdown.smoothness.values()[0];
            ++iteration;
            csv += std::to_string(epoch) + "," + std::to_string(iteration) + "," +
                   detail::format_double(total) + "," + detail::format_double(photo) + "," +
                   detail::format_double(smooth) + "," + detail::format_double(lr) + "\n";
            if (!first_loss_seen) {
                result.initial_loss = total;
                first_loss_seen = true;
            }
            result.final_loss = total;
            epoch_loss_sum += total;
            ++epoch_batches;
        }

        detail::write_file(csv_path, csv);
        char name[64];
        std::snprintf(name, sizeof(name), "epoch-%04zu.ckpt", epoch);
        const std::string ckpt_path = (fs::path(out_dir) / name).string();
        const auto records = detail::training_records(params, opt, epoch);
        save_checkpoint(ckpt_path, net_cfg.digest(), records);
        result.last_checkpoint = ckpt_path;

        const double epoch_loss =
            epoch_batches ? epoch_loss_sum / static_cast<double>(epoch_batches) : 0.0;
        if (epoch_loss < result.best_epoch_loss) {
            result.best_epoch_loss = epoch_loss;
            result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
            save_checkpoint(result.best_checkpoint, net_cfg.digest(), records);
        }
    }

    result.iterations = iteration;
    if (result.last_checkpoint.empty()) {
        // No epochs ran (already complete); still leave a loadable snapshot.
        const std::string ckpt_path = (fs::path(out_dir) / "final.ckpt").string();
        save_checkpoint(ckpt_path, net_cfg.digest(),
                        detail::training_records(params, opt,
                                                 start_epoch == 0 ? 0 : start_epoch - 1));
        result.last_checkpoint = ckpt_path;
        detail::write_file(csv_path, csv);
    }
    return result;
}

}  // namespace spikeflow
