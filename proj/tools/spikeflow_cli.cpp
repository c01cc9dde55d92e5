// Command-line front end: synthetic data generation, encoding inspection,
// training, evaluation, energy reporting and checkpoint inspection.
//
// Exit codes: 0 success, 1 contract violation (bad arguments, bad config,
// digest mismatch, numeric failure), 2 I/O or file-format problem.

#include <cinttypes>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikeflow/spikeflow.hpp"

namespace fs = std::filesystem;
using namespace spikeflow;

namespace {

struct SynthArgs {
    std::string out_dir;
    std::string texture = "noise";
    double flow_u = 0.0;
    double flow_v = 0.0;
    double theta = 0.15;
    std::size_t steps = 10;
    std::size_t width = 64;
    std::size_t height = 64;
    std::uint64_t window_us = 100000;
    std::size_t count = 1;
    std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& args) {
    fs::create_directories(args.out_dir);
    for (std::size_t i = 0; i < args.count; ++i) {
        Tensor texture = make_texture(args.texture, args.height, args.width, args.seed + i);
        SynthResult synth =
            synthesize_events(texture, args.flow_u, args.flow_v, args.window_us, args.theta,
                              args.steps);
        char stem[32];
        std::snprintf(stem, sizeof(stem), "sample%03zu", i);
        const std::string base = (fs::path(args.out_dir) / stem).string();
        write_event_file(base + ".events", synth.events);
        write_pgm(base + ".first.pgm", synth.images.first);
        write_pgm(base + ".second.pgm", synth.images.second);
        write_flow(base + ".flow.flo", synth.flow);
        std::printf("%s: %zu events, flow (%g, %g), %zux%zu\n", stem,
                    synth.events.events.size(), args.flow_u, args.flow_v, args.width,
                    args.height);
    }
    return 0;
}

struct EncodeArgs {
    std::string events_path;
    std::size_t n_frames = 5;
    std::uint64_t t_start = 0;
    std::uint64_t t_end = 0;  // 0 means the last event timestamp
};

int run_encode(const EncodeArgs& args) {
    EventStream stream = parse_event_file(args.events_path);
    std::uint64_t t_end = args.t_end;
    if (t_end == 0) t_end = sample_window(stream).second;
    SpikeInputSequence seq = encode_spike_input(stream, args.t_start, t_end, args.n_frames);
    const std::size_t H = seq.frames.dim(2), W = seq.frames.dim(3);
    std::printf("events: %zu over %zux%zu\n", stream.events.size(), stream.width,
                stream.height);
    std::printf("window: %" PRIu64 " .. %" PRIu64 " us, %zu frames per group\n", seq.t_start,
                seq.t_end, args.n_frames);
    std::printf("frames: [%zu, 4, %zu, %zu]\n", seq.n_frames(), H, W);
    static const char* kChannels[] = {"former-on", "former-off", "latter-on", "latter-off"};
    auto vals = seq.frames.values();
    const std::size_t plane = H * W;
    std::uint64_t total = 0;
    for (std::size_t f = 0; f < seq.n_frames(); ++f) {
        std::printf("frame %zu:", f);
        for (std::size_t c = 0; c < 4; ++c) {
            std::uint64_t n = 0;
            const std::size_t offset = (f * 4 + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) n += vals[offset + i] != 0.0;
            total += n;
            std::printf(" %s=%" PRIu64, kChannels[c], n);
        }
        std::printf("\n");
    }
    std::printf("active pixels: %" PRIu64 "\n", total);
    return 0;
}

TrainConfig config_from(const std::string& config_path, const std::string& dt_mode,
                        std::size_t base_width, const std::string& variant,
                        std::uint64_t seed, bool seed_given) {
    TrainConfig cfg;
    if (!config_path.empty()) {
        cfg = parse_train_config_file(config_path);
    } else {
        cfg.dt_mode = dt_mode;
        cfg.apply_dt_defaults();
    }
    if (base_width) cfg.base_width = base_width;
    if (!variant.empty()) cfg.variant = parse_variant(variant);
    if (seed_given) cfg.seed = seed;
    cfg.validate();
    return cfg;
}

void print_energy(const OpCountReport& ops) {
    std::printf("snn ops: %.6g over %zu steps (%" PRIu64 " passes)\n", ops.snn_total_ops,
                ops.n_steps, ops.passes);
    std::printf("ann encoder ops: %.6g, ann network ops: %.6g\n", ops.ann_encoder_ops,
                ops.ann_network_ops);
    std::printf("normalized ops: %.2f%%\n", ops.normalized_percent);
    if (ops.infinite_benefit)
        std::printf("encoder energy benefit: infinite (zero spikes) at ratio %.2f\n",
                    ops.energy_ratio);
    else
        std::printf("encoder energy benefit: %.2fx at ratio %.2f\n",
                    ops.encoder_energy_benefit, ops.energy_ratio);
    std::printf("overall energy reduction: %.2f%%\n", ops.overall_reduction_percent);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid spiking/analog optical-flow network toolkit"};
    app.require_subcommand(1);

    // synth ------------------------------------------------------------
    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic event dataset");
    synth->add_option("--out-dir", synth_args.out_dir, "Output directory")->required();
    synth->add_option("--texture", synth_args.texture,
                      "Texture spec: ramp[:x|y], checker[:cell], noise[:passes]");
    synth->add_option("--flow-u", synth_args.flow_u, "Horizontal flow in pixels per window");
    synth->add_option("--flow-v", synth_args.flow_v, "Vertical flow in pixels per window");
    synth->add_option("--theta", synth_args.theta, "Event threshold on log intensity");
    synth->add_option("--steps", synth_args.steps, "Simulation sub-steps per window");
    synth->add_option("--width", synth_args.width, "Texture width in pixels");
    synth->add_option("--height", synth_args.height, "Texture height in pixels");
    synth->add_option("--window-us", synth_args.window_us, "Window length in microseconds");
    synth->add_option("--count", synth_args.count, "Number of samples to generate");
    synth->add_option("--seed", synth_args.seed, "Texture random seed");

    // encode -----------------------------------------------------------
    EncodeArgs encode_args;
    CLI::App* encode = app.add_subcommand("encode", "Inspect the spike encoding of an event file");
    encode->add_option("--events", encode_args.events_path, "Event file to encode")->required();
    encode->add_option("--n-frames", encode_args.n_frames, "Frames per half-window group");
    encode->add_option("--t-start", encode_args.t_start, "Window start in microseconds");
    encode->add_option("--t-end", encode_args.t_end,
                       "Window end in microseconds (0 = last event)");

    // train --------------------------------------------------------------
    std::string train_config, train_data, train_out, train_resume;
    std::uint64_t train_seed = 0;
    CLI::App* train_cmd = app.add_subcommand("train", "Train on an event dataset");
    train_cmd->add_option("--config", train_config, "Training config file")->required();
    train_cmd->add_option("--data-dir", train_data, "Dataset directory")->required();
    train_cmd->add_option("--out-dir", train_out, "Output directory")->required();
    train_cmd->add_option("--resume", train_resume, "Checkpoint to resume from");
    CLI::Option* train_seed_opt =
        train_cmd->add_option("--seed", train_seed, "Override the config seed");

    // eval ---------------------------------------------------------------
    std::string eval_ckpt, eval_data, eval_out, eval_config, eval_dt = "dt1", eval_variant;
    std::size_t eval_base = 0;
    std::uint64_t eval_seed = 0;
    double eval_ratio = 5.1;
    bool eval_no_vis = false, eval_gt_flow = false;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval_cmd->add_option("--data-dir", eval_data, "Dataset directory")->required();
    eval_cmd->add_option("--out-dir", eval_out, "Output directory")->required();
    eval_cmd->add_option("--config", eval_config, "Config file used for training");
    eval_cmd->add_option("--dt-mode", eval_dt, "dt1 or dt4 defaults when no config is given");
    eval_cmd->add_option("--base-width", eval_base, "Override encoder base width");
    eval_cmd->add_option("--variant", eval_variant,
                         "standard, one_residual_snn or two_residual_snn");
    eval_cmd->add_option("--energy-ratio", eval_ratio, "MAC/AC energy cost ratio");
    CLI::Option* eval_seed_opt = eval_cmd->add_option("--seed", eval_seed, "Override seed");
    eval_cmd->add_flag("--no-visualizations", eval_no_vis, "Skip flow image rendering");
    eval_cmd->add_flag("--use-gt-flow", eval_gt_flow,
                       "Score ground truth against itself (plumbing check)");

    // energy -------------------------------------------------------------
    std::string energy_ckpt, energy_data, energy_out, energy_config, energy_dt = "dt1",
                energy_variant;
    std::size_t energy_base = 0, energy_width = 256, energy_height = 256;
    std::uint64_t energy_seed = 0;
    double energy_ratio = 5.1;
    bool geometry_only = false;
    CLI::App* energy_cmd =
        app.add_subcommand("energy", "Report synaptic-operation counts and energy figures");
    energy_cmd->add_option("--checkpoint", energy_ckpt, "Checkpoint file");
    energy_cmd->add_option("--data-dir", energy_data, "Dataset directory");
    energy_cmd->add_option("--out-dir", energy_out, "Output directory");
    energy_cmd->add_option("--config", energy_config, "Config file used for training");
    energy_cmd->add_option("--dt-mode", energy_dt, "dt1 or dt4 defaults when no config is given");
    energy_cmd->add_option("--base-width", energy_base, "Override encoder base width");
    energy_cmd->add_option("--variant", energy_variant,
                           "standard, one_residual_snn or two_residual_snn");
    energy_cmd->add_option("--energy-ratio", energy_ratio, "MAC/AC energy cost ratio");
    energy_cmd->add_option("--width", energy_width, "Input width for geometry-only mode");
    energy_cmd->add_option("--height", energy_height, "Input height for geometry-only mode");
    CLI::Option* energy_seed_opt = energy_cmd->add_option("--seed", energy_seed, "Override seed");
    energy_cmd->add_flag("--geometry-only", geometry_only,
                         "Print dense per-layer operation counts without running data");

    // inspect-checkpoint ---------------------------------------------------
    std::string inspect_path;
    CLI::App* inspect = app.add_subcommand("inspect-checkpoint", "List checkpoint contents");
    inspect->add_option("--checkpoint", inspect_path, "Checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        std::fprintf(stderr, "%s", app.help().c_str());
        return 1;
    }

    try {
        if (*synth) return run_synth(synth_args);
        if (*encode) return run_encode(encode_args);
        if (*train_cmd) {
            TrainConfig cfg = config_from(train_config, "dt1", 0, "", train_seed,
                                          train_seed_opt->count() > 0);
            std::vector<DataSample> dataset = load_dataset(train_data);
            TrainResult result = train(dataset, cfg, train_out, train_resume);
            std::printf("trained %zu epochs, %zu iterations\n", cfg.epochs, result.iterations);
            std::printf("initial loss %.6g, final loss %.6g\n", result.initial_loss,
                        result.final_loss);
            std::printf("loss curve: %s\n", result.csv_path.c_str());
            std::printf("last checkpoint: %s\n", result.last_checkpoint.c_str());
            if (!result.best_checkpoint.empty())
                std::printf("best checkpoint: %s\n", result.best_checkpoint.c_str());
            return 0;
        }
        if (*eval_cmd) {
            TrainConfig cfg = config_from(eval_config, eval_dt, eval_base, eval_variant,
                                          eval_seed, eval_seed_opt->count() > 0);
            std::vector<DataSample> dataset = load_dataset(eval_data);
            EvalOptions options;
            options.energy_ratio = eval_ratio;
            options.write_visualizations = !eval_no_vis;
            options.use_gt_flow = eval_gt_flow;
            EvalReport report = evaluate(dataset, cfg, eval_ckpt, eval_out, options);
            std::printf("mean AEE %.3f over %zu samples (zero-flow baseline %.3f)\n",
                        report.mean_aee, report.samples.size(), report.mean_zero_flow_aee);
            std::printf("mean loss %.6g\n", report.mean_loss);
            print_energy(report.ops);
            std::printf("per-sample report: %s\n", report.csv_path.c_str());
            std::printf("summary: %s\n", report.summary_path.c_str());
            return 0;
        }
        if (*energy_cmd) {
            TrainConfig cfg = config_from(energy_config, energy_dt, energy_base, energy_variant,
                                          energy_seed, energy_seed_opt->count() > 0);
            if (geometry_only) {
                AnnOpCounts counts =
                    ann_op_counts(cfg.network(), energy_height, energy_width);
                std::printf("dense MACs at %zux%zu, base width %zu:\n", energy_width,
                            energy_height, cfg.base_width);
                for (const auto& [name, macs] : counts.layers)
                    std::printf("  %-18s %" PRIu64 "\n", name.c_str(), macs);
                std::printf("encoder total: %" PRIu64 "\n", counts.encoder_total);
                std::printf("network total: %" PRIu64 "\n", counts.network_total);
                return 0;
            }
            if (energy_ckpt.empty() || energy_data.empty() || energy_out.empty())
                throw ContractError(
                    "energy needs --checkpoint, --data-dir and --out-dir "
                    "(or --geometry-only)");
            std::vector<DataSample> dataset = load_dataset(energy_data);
            EvalOptions options;
            options.energy_ratio = energy_ratio;
            options.write_visualizations = false;
            EvalReport report = evaluate(dataset, cfg, energy_ckpt, energy_out, options);
            print_energy(report.ops);
            std::printf("summary: %s\n", report.summary_path.c_str());
            return 0;
        }
        if (*inspect) {
            CheckpointData ckpt = load_checkpoint(inspect_path);
            std::printf("version: %u\n", ckpt.version);
            std::printf("config digest: %s\n", hex_digest(ckpt.digest).c_str());
            std::printf("records: %zu\n", ckpt.records.size());
            for (const auto& [name, tensor] : ckpt.records)
                std::printf("  %-28s %s (%zu values)\n", name.c_str(),
                            shape_str(tensor.shape()).c_str(), tensor.numel());
            return 0;
        }
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {  // contract, dimension, numeric, checkpoint
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
