#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikeflow/eval.hpp"
#include "testing_util.hpp"

using namespace spikeflow;
namespace fs = std::filesystem;

namespace {

// Profile with one uniform firing rate across the input and every hidden
// encoder population, sized independently of count_ops' own bookkeeping.
ActivityProfile uniform_profile(const NetworkConfig& cfg, std::size_t H, std::size_t W,
                                std::size_t n_steps, std::uint64_t passes, double rate) {
    const EncoderConfig& enc = cfg.encoder;
    ActivityProfile profile;
    auto population = [&](const std::string& name, std::size_t channels, std::size_t h,
                          std::size_t w) {
        LayerActivity a;
        a.name = name;
        a.unit_steps = static_cast<std::uint64_t>(channels) * h * w * n_steps * passes;
        a.spikes = static_cast<std::uint64_t>(rate * static_cast<double>(a.unit_steps) + 0.5);
        return a;
    };
    std::size_t h = H, w = W;
    profile.input = population("input", enc.in_channels, h, w);
    for (std::size_t l = 0; l + 1 < enc.n_layers(); ++l) {
        h = (h + 2 * enc.padding() - enc.kernel) / enc.stride + 1;
        w = (w + 2 * enc.padding() - enc.kernel) / enc.stride + 1;
        profile.layers.push_back(
            population("encoder" + std::to_string(l + 1), enc.widths[l], h, w));
    }
    return profile;
}

std::vector<DataSample> tiny_dataset(std::size_t count, std::size_t size = 16) {
    std::vector<DataSample> samples;
    for (std::size_t i = 0; i < count; ++i) {
        Tensor texture = make_texture("noise", size, size, 200 + i);
        SynthResult synth =
            synthesize_events(texture, 1.5, 0.5 * static_cast<double>(i + 1), 1000, 0.1, 8);
        DataSample s;
        s.stem = "scene" + std::to_string(i);
        s.events = synth.events;
        s.images = synth.images;
        s.flow = synth.flow;
        samples.push_back(std::move(s));
    }
    return samples;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.n_frames = 2;
    cfg.threshold = 0.25;
    cfg.lambda = 0.5;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 1;
    cfg.epochs = 1;
    cfg.seed = 5;
    cfg.base_width = 4;
    cfg.flip_probability = 0.0;
    return cfg;
}

}  // namespace

TEST(Aee, MatchesHandComputedEndpointDistances) {
    Tensor pred(Shape{1, 2, 1, 2});
    Tensor gt(Shape{1, 2, 1, 2});
    // Pixel 0: error (3, 4) -> 5. Pixel 1: exact.
    gt.at(0, 0, 0, 0) = 3.0;
    gt.at(0, 1, 0, 0) = 4.0;
    gt.at(0, 0, 0, 1) = -2.0;
    pred.at(0, 0, 0, 1) = -2.0;
    Tensor ones(Shape{1, 1, 1, 2}, 1.0);

    AEEResult both = aee(pred, gt, ones, ones);
    EXPECT_DOUBLE_EQ(both.aee, 2.5);
    EXPECT_EQ(both.masked_pixels, 2u);
    EXPECT_FALSE(both.empty_mask);

    Tensor first_only(Shape{1, 1, 1, 2});
    first_only.at(0, 0, 0, 0) = 1.0;
    AEEResult single = aee(pred, gt, first_only, ones);
    EXPECT_DOUBLE_EQ(single.aee, 5.0);
    EXPECT_EQ(single.masked_pixels, 1u);
}

TEST(Aee, DisjointMasksAreFlaggedNotScored) {
    Tensor pred(Shape{1, 2, 1, 2});
    Tensor gt(Shape{1, 2, 1, 2}, 1.0);
    Tensor left(Shape{1, 1, 1, 2});
    left.at(0, 0, 0, 0) = 1.0;
    Tensor right(Shape{1, 1, 1, 2});
    right.at(0, 0, 0, 1) = 1.0;
    AEEResult result = aee(pred, gt, left, right);
    EXPECT_TRUE(result.empty_mask);
    EXPECT_EQ(result.masked_pixels, 0u);
    EXPECT_DOUBLE_EQ(result.aee, 0.0);
}

TEST(Aee, RejectsMismatchedShapes) {
    Tensor ones(Shape{1, 1, 2, 2}, 1.0);
    EXPECT_THROW(aee(Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{1, 2, 4, 4}), ones, ones),
                 DimensionError);
    EXPECT_THROW(aee(Tensor(Shape{1, 3, 2, 2}), Tensor(Shape{1, 3, 2, 2}), ones, ones),
                 DimensionError);
    EXPECT_THROW(aee(Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{1, 2, 2, 2}),
                     Tensor(Shape{1, 1, 4, 4}, 1.0), ones),
                 DimensionError);
}

TEST(Masks, EventPresenceCollapsesFramesAndChannels) {
    Tensor frames(Shape{2, 4, 2, 3});
    frames.at(1, 3, 0, 2) = 1.0;
    frames.at(0, 1, 0, 2) = 1.0;  // same pixel, different frame/channel
    frames.at(1, 0, 1, 1) = 1.0;
    Tensor mask = event_presence_mask(frames);
    ASSERT_EQ(mask.shape(), (Shape{1, 1, 2, 3}));
    double total = 0.0;
    for (double v : mask.values()) total += v;
    EXPECT_DOUBLE_EQ(total, 2.0);
    EXPECT_DOUBLE_EQ(mask(0, 0, 0, 2), 1.0);
    EXPECT_DOUBLE_EQ(mask(0, 0, 1, 1), 1.0);
}

TEST(Masks, FiniteMaskDropsNonFiniteFlowPixels) {
    Tensor flow(Shape{1, 2, 1, 3}, 1.0);
    flow.at(0, 0, 0, 1) = std::nan("");
    flow.at(0, 1, 0, 2) = std::numeric_limits<double>::infinity();
    Tensor mask = finite_mask(flow);
    EXPECT_DOUBLE_EQ(mask.values()[0], 1.0);
    EXPECT_DOUBLE_EQ(mask.values()[1], 0.0);
    EXPECT_DOUBLE_EQ(mask.values()[2], 0.0);
}

TEST(Activity, TwoSpikesOverSixObservationsIsOneThird) {
    IFLayerState state;
    state.name = "encoder1";
    state.spikes_per_step.push_back(Tensor(Shape{1, 1, 1, 3}, {1.0, 0.0, 1.0}));
    state.spikes_per_step.push_back(Tensor(Shape{1, 1, 1, 3}));
    LayerActivity activity = measure_layer_activity(state);
    EXPECT_EQ(activity.spikes, 2u);
    EXPECT_EQ(activity.unit_steps, 6u);
    EXPECT_DOUBLE_EQ(activity.rate(), 1.0 / 3.0);

    IFLayerState empty;
    empty.name = "encoder9";
    EXPECT_THROW(measure_layer_activity(empty), ContractError);
}

TEST(Activity, ProfileCoversInputEncoderAndConvertedResiduals) {
    NetworkConfig cfg = NetworkConfig::with_base(4, 0.25);
    cfg.variant = HybridVariant::two_residual_snn;
    ParamStore params = init_params(cfg, 3);
    std::vector<Tensor> frames;
    std::mt19937_64 rng(41);
    std::uint64_t input_spikes = 0;
    for (int i = 0; i < 3; ++i) {
        Tensor f(Shape{1, 4, 16, 16});
        for (double& v : f.mutable_values()) v = (rng() % 4 == 0) ? 1.0 : 0.0;
        input_spikes += count_nonzero(f);
        frames.push_back(f);
    }
    HybridResult fwd = hybrid_forward(frames, params, cfg);
    ActivityProfile profile = measure_spike_activity(frames, fwd);
    EXPECT_EQ(profile.input.spikes, input_spikes);
    EXPECT_EQ(profile.input.unit_steps, 3u * 4u * 16u * 16u);
    ASSERT_EQ(profile.layers.size(), 5u);  // encoder1..3 + residual1..2
    EXPECT_EQ(profile.layers[0].name, "encoder1");
    EXPECT_EQ(profile.layers[2].name, "encoder3");
    EXPECT_EQ(profile.layers[3].name, "residual1");
    EXPECT_EQ(profile.layers[4].name, "residual2");
    for (const LayerActivity& l : profile.layers) {
        EXPECT_GE(l.rate(), 0.0);
        EXPECT_LE(l.rate(), 1.0);
    }

    HybridResult stale;
    EXPECT_THROW(measure_spike_activity(frames, stale), ContractError);
    EXPECT_THROW(measure_spike_activity({}, fwd), ContractError);
}

TEST(Activity, MergeAccumulatesAcrossSamples) {
    ActivityProfile a;
    a.input = {"input", 10, 100};
    a.layers.push_back({"encoder1", 4, 40});
    ActivityProfile b;
    b.input = {"input", 5, 100};
    b.layers.push_back({"encoder1", 6, 40});
    b.layers.push_back({"encoder2", 1, 20});
    a.merge(b);
    EXPECT_EQ(a.input.spikes, 15u);
    EXPECT_EQ(a.input.unit_steps, 200u);
    ASSERT_NE(a.find("encoder1"), nullptr);
    EXPECT_EQ(a.find("encoder1")->spikes, 10u);
    EXPECT_EQ(a.find("encoder1")->unit_steps, 80u);
    ASSERT_NE(a.find("encoder2"), nullptr);
    EXPECT_EQ(a.find("encoder2")->spikes, 1u);
    EXPECT_EQ(a.find("encoder2")->unit_steps, 20u);
    EXPECT_EQ(a.find("encoder3"), nullptr);
}

TEST(AnnOps, DenseMacCountsFollowConvArithmetic) {
    NetworkConfig cfg = NetworkConfig::with_base(4, 0.75);
    AnnOpCounts counts = ann_op_counts(cfg, 16, 16);
    ASSERT_FALSE(counts.layers.empty());
    // encoder1: 8x8 outputs x 4 out-channels x 9 taps x 4 in-channels.
    EXPECT_EQ(counts.layers[0].first, "encoder1");
    EXPECT_EQ(counts.layers[0].second, 8ull * 8 * 4 * 9 * 4);
    // encoder totals are the first four layers summed.
    std::uint64_t encoder_sum = 0;
    for (std::size_t i = 0; i < 4; ++i) encoder_sum += counts.layers[i].second;
    EXPECT_EQ(counts.encoder_total, encoder_sum);
    std::uint64_t all = 0;
    for (const auto& [name, macs] : counts.layers) all += macs;
    EXPECT_EQ(counts.network_total, all);
    EXPECT_GT(counts.network_total, counts.encoder_total);
}

TEST(AnnOps, ReferenceGeometryMatchesPublishedTotals) {
    NetworkConfig cfg = NetworkConfig::with_base(64, 0.75);
    AnnOpCounts counts = ann_op_counts(cfg, 256, 256);
    EXPECT_EQ(counts.encoder_total, 943718400ull);
    EXPECT_NEAR(static_cast<double>(counts.encoder_total), 9.44e8, 0.02 * 9.44e8);
    EXPECT_EQ(counts.network_total, 5356994560ull);
    EXPECT_NEAR(static_cast<double>(counts.network_total), 5.35e9, 0.02 * 5.35e9);
}

TEST(CountOps, FullRateSingleStepCostsExactlyTheDensePass) {
    NetworkConfig cfg = NetworkConfig::with_base(4, 0.75);
    ActivityProfile profile = uniform_profile(cfg, 16, 16, 1, 1, 1.0);
    OpCountReport report = count_ops(cfg, 16, 16, profile, 1);
    EXPECT_EQ(report.passes, 1u);
    EXPECT_DOUBLE_EQ(report.normalized_percent, 100.0);
    for (const LayerOpCount& l : report.layers) {
        EXPECT_DOUBLE_EQ(l.f_input, 1.0);
        EXPECT_DOUBLE_EQ(l.snn_ops, static_cast<double>(l.ann_ops));
    }
}

TEST(CountOps, HandSizedToyLayerArithmetic) {
    NetworkConfig cfg = NetworkConfig::with_base(4, 0.75);
    ActivityProfile profile = uniform_profile(cfg, 16, 16, 2, 1, 0.0);
    profile.input.spikes = 100;
    profile.layers[0].spikes = 40;  // encoder1 population, 4ch at 8x8
    profile.layers[1].spikes = 7;
    OpCountReport report = count_ops(cfg, 16, 16, profile, 2);
    ASSERT_EQ(report.layers.size(), 4u);
    // spikes x k^2 x C_out / stride^2
    EXPECT_DOUBLE_EQ(report.layers[0].snn_ops, 100.0 * 9.0 * 4.0 / 4.0);
    EXPECT_DOUBLE_EQ(report.layers[1].snn_ops, 40.0 * 9.0 * 8.0 / 4.0);
    EXPECT_DOUBLE_EQ(report.layers[2].snn_ops, 7.0 * 9.0 * 16.0 / 4.0);
    EXPECT_DOUBLE_EQ(report.layers[3].snn_ops, 0.0);
    EXPECT_DOUBLE_EQ(report.snn_total_ops, 900.0 + 720.0 + 252.0);
    EXPECT_EQ(report.layers[0].neurons, 4ull * 16 * 16);
    EXPECT_EQ(report.layers[1].neurons, 4ull * 8 * 8);
    EXPECT_DOUBLE_EQ(report.layers[0].fan_out, 9.0 * 4.0 / 4.0);
    EXPECT_DOUBLE_EQ(report.layers[0].f_input,
                     100.0 / static_cast<double>(profile.input.unit_steps));
}

TEST(CountOps, AgreesWithPublishedReferenceFigures) {
    // Uniform firing at the reported mean rate of 0.33% over five steps at
    // 256x256 reproduces the published energy summary: roughly 0.16e8
    // event-driven ops, a ~305x encoder energy benefit at a 5.1 MAC/AC cost
    // ratio, and a ~17.6% whole-network energy reduction.
    NetworkConfig cfg = NetworkConfig::with_base(64, 0.75);
    ActivityProfile profile = uniform_profile(cfg, 256, 256, 5, 1, 0.0033);
    OpCountReport report = count_ops(cfg, 256, 256, profile, 5);
    EXPECT_NEAR(report.snn_total_ops, 1.6e7, 1.0e6);
    EXPECT_NEAR(report.normalized_percent, 1.68, 0.1);
    EXPECT_NEAR(report.encoder_energy_benefit, 305.0, 0.05 * 305.0);
    EXPECT_NEAR(report.overall_reduction_percent, 17.57, 0.25);
    EXPECT_FALSE(report.infinite_benefit);
}

TEST(CountOps, SilentEncoderFlagsInfiniteBenefit) {
    NetworkConfig cfg = NetworkConfig::with_base(4, 0.75);
    ActivityProfile profile = uniform_profile(cfg, 16, 16, 2, 1, 0.0);
    OpCountReport report = count_ops(cfg, 16, 16, profile, 2);
    EXPECT_TRUE(report.infinite_benefit);
    EXPECT_TRUE(std::isinf(report.encoder_energy_benefit));
    EXPECT_DOUBLE_EQ(report.normalized_percent, 0.0);
    EXPECT_GT(report.overall_reduction_percent, 0.0);
    EXPECT_TRUE(std::isfinite(report.overall_reduction_percent));
    nlohmann::ordered_json j = op_report_json(report);
    EXPECT_EQ(j["encoder_energy_benefit"], "infinity");
    EXPECT_EQ(j["infinite_benefit"], true);
}

TEST(CountOps, RejectsProfilesInconsistentWithGeometry) {
    NetworkConfig cfg = NetworkConfig::with_base(4, 0.75);
    ActivityProfile good = uniform_profile(cfg, 16, 16, 2, 1, 0.1);

    ActivityProfile wrong_input = good;
    wrong_input.input.unit_steps += 1;
    EXPECT_THROW(count_ops(cfg, 16, 16, wrong_input, 2), ContractError);

    ActivityProfile missing = good;
    missing.layers.erase(missing.layers.begin());
    EXPECT_THROW(count_ops(cfg, 16, 16, missing, 2), ContractError);

    ActivityProfile wrong_layer = good;
    wrong_layer.layers[1].unit_steps *= 2;
    EXPECT_THROW(count_ops(cfg, 16, 16, wrong_layer, 2), ContractError);

    ActivityProfile overfiring = good;
    overfiring.layers[0].spikes = overfiring.layers[0].unit_steps + 1;
    EXPECT_THROW(count_ops(cfg, 16, 16, overfiring, 2), ContractError);

    EXPECT_THROW(count_ops(cfg, 16, 16, good, 0), ContractError);
    EXPECT_THROW(count_ops(cfg, 16, 16, good, 2, 0.0), ContractError);
}

TEST(CountOps, FormulaEqualsInstrumentedCounterBitForBit) {
    // The analytic count (integer spike totals x fan-out work) and the
    // per-step instrumented tally must agree exactly, not approximately:
    // with stride 1 or 2 every per-step term is an exact multiple of 1/4.
    std::mt19937_64 rng(97);
    for (int trial = 0; trial < 20; ++trial) {
        NetworkConfig cfg = NetworkConfig::with_base(4, 0.15 + 0.1 * (trial % 5));
        ParamStore params = init_params(cfg, 1000 + trial);
        const std::size_t n_steps = 1 + trial % 4;
        std::vector<Tensor> frames;
        for (std::size_t s = 0; s < n_steps; ++s) {
            Tensor f(Shape{1, 4, 16, 16});
            for (double& v : f.mutable_values()) v = (rng() % 3 == 0) ? 1.0 : 0.0;
            frames.push_back(f);
        }
        SynapticOpCounter counter;
        HybridResult fwd = hybrid_forward(frames, params, cfg, &counter);
        ActivityProfile profile = measure_spike_activity(frames, fwd);
        OpCountReport report = count_ops(cfg, 16, 16, profile, n_steps);
        ASSERT_EQ(report.layers.size(), counter.per_layer.size());
        for (std::size_t l = 0; l < report.layers.size(); ++l)
            EXPECT_EQ(report.layers[l].snn_ops, counter.per_layer[l])
                << "trial " << trial << " layer " << l;
        EXPECT_EQ(report.snn_total_ops, counter.total()) << "trial " << trial;
    }
}

TEST(CountOps, MergedProfilesScaleDenseWorkByPasses) {
    NetworkConfig cfg = NetworkConfig::with_base(4, 0.25);
    ParamStore params = init_params(cfg, 55);
    std::mt19937_64 rng(56);
    SynapticOpCounter counter;
    ActivityProfile merged;
    for (int pass = 0; pass < 3; ++pass) {
        std::vector<Tensor> frames;
        for (int s = 0; s < 2; ++s) {
            Tensor f(Shape{1, 4, 16, 16});
            for (double& v : f.mutable_values()) v = (rng() % 2 == 0) ? 1.0 : 0.0;
            frames.push_back(f);
        }
        HybridResult fwd = hybrid_forward(frames, params, cfg, &counter);
        merged.merge(measure_spike_activity(frames, fwd));
    }
    OpCountReport report = count_ops(cfg, 16, 16, merged, 2);
    EXPECT_EQ(report.passes, 3u);
    EXPECT_EQ(report.snn_total_ops, counter.total());
    AnnOpCounts dense = ann_op_counts(cfg, 16, 16);
    EXPECT_DOUBLE_EQ(report.ann_encoder_ops, 3.0 * static_cast<double>(dense.encoder_total));
    EXPECT_DOUBLE_EQ(report.ann_network_ops, 3.0 * static_cast<double>(dense.network_total));
}

TEST(FlowImages, MagnitudeNormalizesToUnitPeak) {
    Tensor flow(Shape{1, 2, 1, 2});
    flow.at(0, 0, 0, 0) = 3.0;
    flow.at(0, 1, 0, 0) = 4.0;  // magnitude 5
    flow.at(0, 0, 0, 1) = 0.0;
    Tensor image = flow_magnitude_image(flow);
    EXPECT_DOUBLE_EQ(image.values()[0], 1.0);
    EXPECT_DOUBLE_EQ(image.values()[1], 0.0);

    Tensor still(Shape{1, 2, 2, 2});
    Tensor flat = flow_magnitude_image(still);
    for (double v : flat.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(FlowImages, DirectionRendersHueAndStationaryWhite) {
    Tensor flow(Shape{1, 2, 1, 3});
    flow.at(0, 0, 0, 0) = 2.0;   // pure +u: hue 0 -> red at full saturation
    flow.at(0, 1, 0, 1) = 2.0;   // pure +v: hue 90 degrees
    Tensor image = flow_direction_image(flow);
    ASSERT_EQ(image.shape(), (Shape{1, 3, 1, 3}));
    EXPECT_DOUBLE_EQ(image(0, 0, 0, 0), 1.0);  // red
    EXPECT_DOUBLE_EQ(image(0, 1, 0, 0), 0.0);
    EXPECT_DOUBLE_EQ(image(0, 2, 0, 0), 0.0);
    // Stationary pixel renders white.
    EXPECT_DOUBLE_EQ(image(0, 0, 0, 2), 1.0);
    EXPECT_DOUBLE_EQ(image(0, 1, 0, 2), 1.0);
    EXPECT_DOUBLE_EQ(image(0, 2, 0, 2), 1.0);
    // All channels stay inside [0, 1] for the PPM writer.
    for (double v : image.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Evaluate, WritesCsvSummaryAndVisualizations) {
    sft::TempDir dir("eval_full");
    std::vector<DataSample> dataset = tiny_dataset(2);
    TrainConfig cfg = tiny_config();
    TrainResult trained = train(dataset, cfg, dir.path() + "/train");

    EvalReport report =
        evaluate(dataset, cfg, trained.last_checkpoint, dir.path() + "/eval");
    ASSERT_EQ(report.samples.size(), 2u);
    EXPECT_EQ(report.samples[0].stem, "scene0");
    EXPECT_GT(report.samples[0].masked_pixels, 0u);
    EXPECT_TRUE(std::isfinite(report.mean_aee));
    EXPECT_GT(report.mean_zero_flow_aee, 0.0);
    EXPECT_EQ(report.ops.passes, 2u);
    EXPECT_GT(report.activity.input.spikes, 0u);

    const std::string csv = sft::read_all(report.csv_path);
    EXPECT_EQ(csv.rfind("sample,aee,zero_flow_aee,masked_pixels,loss\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_NE(csv.find("\nscene0,"), std::string::npos);

    auto summary = nlohmann::json::parse(sft::read_all(report.summary_path));
    EXPECT_EQ(summary["samples"], 2);
    EXPECT_EQ(summary["resolution"][0], 16);
    EXPECT_DOUBLE_EQ(summary["mean_aee"].get<double>(), report.mean_aee);
    EXPECT_TRUE(summary["activity"]["layers"].is_array());
    EXPECT_GT(summary["energy"]["ann_encoder_ops"].get<double>(), 0.0);

    EXPECT_TRUE(fs::exists(dir.path() + "/eval/scene0.flow-mag.pgm"));
    EXPECT_TRUE(fs::exists(dir.path() + "/eval/scene1.flow-dir.ppm"));

    sft::TempDir quiet("eval_quiet");
    EvalOptions options;
    options.write_visualizations = false;
    evaluate(dataset, cfg, trained.last_checkpoint, quiet.path(), options);
    EXPECT_FALSE(fs::exists(quiet.path() + "/scene0.flow-mag.pgm"));
    EXPECT_TRUE(fs::exists(quiet.path() + "/aee.csv"));
}

TEST(Evaluate, GroundTruthAsPredictionScoresZero) {
    sft::TempDir dir("eval_gt");
    std::vector<DataSample> dataset = tiny_dataset(2);
    TrainConfig cfg = tiny_config();
    TrainResult trained = train(dataset, cfg, dir.path() + "/train");

    EvalOptions options;
    options.use_gt_flow = true;
    options.write_visualizations = false;
    EvalReport report =
        evaluate(dataset, cfg, trained.last_checkpoint, dir.path() + "/eval", options);
    for (const SampleEval& s : report.samples) {
        EXPECT_DOUBLE_EQ(s.aee, 0.0);
        EXPECT_GT(s.zero_flow_aee, 0.0);
    }
    EXPECT_DOUBLE_EQ(report.mean_aee, 0.0);
}

TEST(Evaluate, ReproducesTrainingLossAtTheCheckpoint) {
    // Epoch 1's first CSV row is scored with the post-epoch-0 parameters, the
    // exact weights in epoch-0000.ckpt; with augmentation off, evaluating that
    // checkpoint on the single training sample must reproduce the number.
    sft::TempDir dir("eval_loss_repro");
    std::vector<DataSample> dataset = tiny_dataset(1);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 2;
    train(dataset, cfg, dir.path() + "/train");

    EvalOptions options;
    options.write_visualizations = false;
    EvalReport report = evaluate(dataset, cfg, dir.path() + "/train/epoch-0000.ckpt",
                                 dir.path() + "/eval", options);

    const std::string csv = sft::read_all(dir.path() + "/train/loss.csv");
    const std::size_t row = csv.find("\n1,2,");
    ASSERT_NE(row, std::string::npos) << csv;
    const double recorded = std::stod(csv.substr(row + 5));
    EXPECT_DOUBLE_EQ(report.samples[0].loss, recorded);
}

TEST(Evaluate, RejectsDigestMismatchAndMixedResolutions) {
    sft::TempDir dir("eval_errors");
    std::vector<DataSample> dataset = tiny_dataset(1);
    TrainConfig cfg = tiny_config();
    TrainResult trained = train(dataset, cfg, dir.path() + "/train");

    TrainConfig other = cfg;
    other.threshold = 0.75;
    EXPECT_THROW(evaluate(dataset, other, trained.last_checkpoint, dir.path() + "/eval"),
                 CheckpointError);

    std::vector<DataSample> mixed = tiny_dataset(1);
    std::vector<DataSample> big = tiny_dataset(1, 32);
    mixed.push_back(big[0]);
    EXPECT_THROW(evaluate(mixed, cfg, trained.last_checkpoint, dir.path() + "/eval"),
                 ContractError);

    std::vector<DataSample> small = tiny_dataset(1, 8);
    EXPECT_THROW(evaluate(small, cfg, trained.last_checkpoint, dir.path() + "/eval"),
                 ContractError);

    EXPECT_THROW(evaluate({}, cfg, trained.last_checkpoint, dir.path() + "/eval"),
                 ContractError);
}

TEST(Evaluate, CenterCropsOddResolutionsToTheNetworkFactor) {
    std::vector<DataSample> dataset = tiny_dataset(1, 20);  // crops to 16x16
    TrainConfig cfg = tiny_config();
    sft::TempDir dir("eval_crop");
    // Train on a cropped version to get a digest-compatible checkpoint.
    TrainConfig train_cfg = cfg;
    train_cfg.crop_size = 16;
    TrainResult trained = train(dataset, train_cfg, dir.path() + "/train");

    EvalOptions options;
    options.write_visualizations = false;
    EvalReport report =
        evaluate(dataset, cfg, trained.last_checkpoint, dir.path() + "/eval", options);
    auto summary = nlohmann::json::parse(sft::read_all(report.summary_path));
    EXPECT_EQ(summary["resolution"][0], 16);
    EXPECT_EQ(summary["resolution"][1], 16);
}
