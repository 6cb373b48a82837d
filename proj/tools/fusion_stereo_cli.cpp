// Command-line front end: train / eval / density / sensitivity / params.
// Flags override the optional config file; FUSION_STEREO_PRECISION overrides
// both.  Every command writes a config.resolved snapshot into --out first, so
// a run is reproducible from that file alone.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fusion_stereo/config.hpp"
#include "fusion_stereo/dataset.hpp"
#include "fusion_stereo/errors.hpp"
#include "fusion_stereo/harness.hpp"
#include "fusion_stereo/metrics.hpp"
#include "fusion_stereo/network.hpp"
#include "fusion_stereo/png_io.hpp"
#include "fusion_stereo/trainer.hpp"

namespace fs = std::filesystem;
using namespace fstereo;

namespace {

// One CLI11 option per RunConfig field; count() decides whether the flag
// overrides the config-file value.
struct Flags {
    std::string config_path;

    std::string variant;
    uint64_t seed = 0;
    int iters = 0;
    std::string out;
    std::string data;
    std::string precision;

    int channels = 0, reg_channels = 0, d_max = 0, downsample = 0, n_bins = 0;
    std::vector<int> cond_layers;
    int embed = 0, cbn_hidden = 0, concat_channels = 0;
    double bn_momentum = 0.0, bn_eps = 0.0;

    double lr = 0.0, alpha = 0.0, eps = 0.0, stop_below = 0.0;
    int crop_h = 0, crop_w = 0;

    int scene_width = 0, scene_height = 0, scene_planes = 0, scene_count = 0;
    double scene_d_lo = 0.0, scene_d_hi = 0.0;
    bool scene_slanted = true;
    std::string scene_texture;
    double lidar_coverage = 0.0, lidar_noise = 0.0, focal_px = 0.0, baseline_m = 0.0;

    std::vector<double> densities;
    std::vector<uint64_t> density_seeds;
    int density_samples = 0;

    int y0 = 0, x0 = 0, region_h = 0, region_w = 0, sample = 0;
    double delta = 0.0;

    int eval_samples = 0;

    std::string checkpoint;
    int runs = 10;
    bool all_runtimes = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "INI config file; flags win on conflict");
        cmd->add_option("--variant", variant, "pipeline variant");
        cmd->add_option("--seed", seed, "master seed");
        cmd->add_option("--iters", iters, "training iterations");
        cmd->add_option("--out", out, "output directory");
        cmd->add_option("--data", data, "synthetic | manifest:PATH[:crop_h]");
        cmd->add_option("--precision", precision, "f32 | f64");

        cmd->add_option("--channels", channels, "siamese feature channels");
        cmd->add_option("--reg-channels", reg_channels, "regularizer channels");
        cmd->add_option("--d-max", d_max, "full-resolution disparity range");
        cmd->add_option("--downsample", downsample, "volume subsampling factor");
        cmd->add_option("--n-bins", n_bins, "discretization bins (0 = d_max)");
        cmd->add_option("--cond-layers", cond_layers, "conditioned regularizer blocks")->delimiter(',');
        cmd->add_option("--embed", embed, "continuous trunk width");
        cmd->add_option("--cbn-hidden", cbn_hidden, "naive CBN hidden units");
        cmd->add_option("--concat-channels", concat_channels, "feature-concat channels");
        cmd->add_option("--bn-momentum", bn_momentum, "running-stats momentum");
        cmd->add_option("--bn-eps", bn_eps, "normalization epsilon");

        cmd->add_option("--lr", lr, "learning rate");
        cmd->add_option("--alpha", alpha, "RMSProp decay");
        cmd->add_option("--eps", eps, "RMSProp epsilon");
        cmd->add_option("--stop-below", stop_below, "early-stop loss threshold");
        cmd->add_option("--crop-h", crop_h, "training crop height (0 = full)");
        cmd->add_option("--crop-w", crop_w, "training crop width (0 = full)");

        cmd->add_option("--scene-width", scene_width, "synthetic scene width");
        cmd->add_option("--scene-height", scene_height, "synthetic scene height");
        cmd->add_option("--scene-planes", scene_planes, "floating rectangles");
        cmd->add_option("--scene-count", scene_count, "synthetic scene pool");
        cmd->add_option("--scene-d-lo", scene_d_lo, "minimum plane disparity");
        cmd->add_option("--scene-d-hi", scene_d_hi, "maximum plane disparity");
        cmd->add_flag("--scene-slanted,!--scene-fronto", scene_slanted, "slanted planes");
        cmd->add_option("--scene-texture", scene_texture, "noise|checker|gradient|mixed");
        cmd->add_option("--lidar-coverage", lidar_coverage, "sparse coverage fraction");
        cmd->add_option("--lidar-noise", lidar_noise, "sparse noise sigma, px");
        cmd->add_option("--focal-px", focal_px, "focal length, px");
        cmd->add_option("--baseline-m", baseline_m, "stereo baseline, m");

        cmd->add_option("--densities", densities, "density sweep fractions")->delimiter(',');
        cmd->add_option("--density-seeds", density_seeds, "density subsampling seeds")->delimiter(',');
        cmd->add_option("--density-samples", density_samples, "samples per sweep cell");

        cmd->add_option("--y0", y0, "probe region top row");
        cmd->add_option("--x0", x0, "probe region left column");
        cmd->add_option("--region-h", region_h, "probe region height");
        cmd->add_option("--region-w", region_w, "probe region width");
        cmd->add_option("--delta", delta, "disparity perturbation, px");
        cmd->add_option("--sample", sample, "probe sample index");

        cmd->add_option("--samples", eval_samples, "evaluation sample cap");
    }

    // cmd is the parsed subcommand; its option counts decide which flag
    // values override the config file.
    RunConfig resolve(const CLI::App* cmd) const {
        RunConfig c = config_path.empty() ? RunConfig{}
                                          : RunConfig::from_ini(IniFile::parse_file(config_path));
        const auto given = [cmd](const char* name) { return cmd->count(name) > 0; };
        if (given("--variant")) c.variant = variant;
        if (given("--seed")) c.seed = seed;
        if (given("--iters")) c.iters = iters;
        if (given("--out")) c.out = out;
        if (given("--data")) c.data = data;
        if (given("--precision")) c.precision = precision;

        if (given("--channels")) c.network.channels = channels;
        if (given("--reg-channels")) c.network.reg_channels = reg_channels;
        if (given("--d-max")) c.network.d_max = d_max;
        if (given("--downsample")) c.network.downsample = downsample;
        if (given("--n-bins")) c.network.n_bins = n_bins;
        if (given("--cond-layers")) c.network.cond_layers = cond_layers;
        if (given("--embed")) c.network.embed = embed;
        if (given("--cbn-hidden")) c.network.cbn_hidden = cbn_hidden;
        if (given("--concat-channels")) c.network.concat_channels = concat_channels;
        if (given("--bn-momentum")) c.network.bn_momentum = bn_momentum;
        if (given("--bn-eps")) c.network.bn_eps = bn_eps;

        if (given("--lr")) c.train.lr = lr;
        if (given("--alpha")) c.train.alpha = alpha;
        if (given("--eps")) c.train.eps = eps;
        if (given("--stop-below")) c.train.stop_below = stop_below;
        if (given("--crop-h")) c.train.crop_h = crop_h;
        if (given("--crop-w")) c.train.crop_w = crop_w;

        if (given("--scene-width")) c.scene.width = scene_width;
        if (given("--scene-height")) c.scene.height = scene_height;
        if (given("--scene-planes")) c.scene.n_planes = scene_planes;
        if (given("--scene-count")) c.scene_count = scene_count;
        if (given("--scene-d-lo")) c.scene.d_lo = scene_d_lo;
        if (given("--scene-d-hi")) c.scene.d_hi = scene_d_hi;
        if (given("--scene-slanted") || given("--scene-fronto")) c.scene.slanted = scene_slanted;
        if (given("--scene-texture")) c.scene.texture = scene_texture;
        if (given("--lidar-coverage")) c.scene.lidar_coverage = lidar_coverage;
        if (given("--lidar-noise")) c.scene.lidar_noise = lidar_noise;
        if (given("--focal-px")) c.scene.focal_px = focal_px;
        if (given("--baseline-m")) c.scene.baseline_m = baseline_m;

        if (given("--densities")) c.density_fractions = densities;
        if (given("--density-seeds")) c.density_seeds = density_seeds;
        if (given("--density-samples")) c.density_eval_samples = density_samples;

        if (given("--y0")) c.sens_y0 = y0;
        if (given("--x0")) c.sens_x0 = x0;
        if (given("--region-h")) c.sens_h = region_h;
        if (given("--region-w")) c.sens_w = region_w;
        if (given("--delta")) c.sens_delta = delta;
        if (given("--sample")) c.sens_sample = sample;

        if (given("--samples")) c.eval_samples = eval_samples;

        c.scene.d_max = c.network.d_max;
        c.train.iters = c.iters;
        c.train.seed = c.seed;
        if (c.iters < 0) throw ConfigError("iters must be >= 0");
        apply_precision_choice(c);
        parse_variant(c.variant);
        c.network.validate();
        c.scene.validate();
        return c;
    }
};

std::unique_ptr<DataSource> make_data_source(const RunConfig& cfg) {
    if (cfg.data == "synthetic")
        return std::make_unique<SyntheticDataSource>(cfg.scene, cfg.scene_count, cfg.seed);
    const std::string prefix = "manifest:";
    if (cfg.data.rfind(prefix, 0) != 0)
        throw ConfigError("data must be 'synthetic' or 'manifest:PATH[:crop_h]', got '" +
                          cfg.data + "'");
    std::string rest = cfg.data.substr(prefix.size());
    int crop_h = 0;
    const size_t colon = rest.rfind(':');
    if (colon != std::string::npos && colon + 1 < rest.size() &&
        rest.find_first_not_of("0123456789", colon + 1) == std::string::npos) {
        crop_h = std::stoi(rest.substr(colon + 1));
        rest = rest.substr(0, colon);
    }
    if (rest.empty()) throw ConfigError("manifest data spec has an empty path");
    return std::make_unique<ManifestDataSource>(rest, crop_h);
}

RunConfig prepare_run(const Flags& flags, const CLI::App* cmd) {
    RunConfig cfg = flags.resolve(cmd);
    fs::create_directories(cfg.out);
    cfg.write_resolved((fs::path(cfg.out) / "config.resolved").string());
    return cfg;
}

std::string indexed_name(const char* stem, int idx, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03d%s", stem, idx, suffix);
    return buf;
}

void write_prediction_pngs(const fs::path& dir, const char* stem, int idx, const Tensor& pred,
                           double d_max) {
    SparseDisparityMap exact(static_cast<int>(pred.dim(0)), static_cast<int>(pred.dim(1)));
    for (int y = 0; y < exact.height; ++y)
        for (int x = 0; x < exact.width; ++x)
            exact.set(y, x, pred.values[static_cast<size_t>(y * exact.width + x)]);
    write_depth_png((dir / indexed_name(stem, idx, "_disp.png")).string(), exact);
    write_gray8_png((dir / indexed_name(stem, idx, "_preview.png")).string(), pred, 0.0, d_max);
}

int cmd_train(const Flags& flags, const CLI::App* cmd) {
    const RunConfig cfg = prepare_run(flags, cmd);
    const Variant variant = parse_variant(cfg.variant);
    std::unique_ptr<DataSource> data = make_data_source(cfg);
    Model model(cfg.network, variant, cfg.seed);

    const fs::path out(cfg.out);
    std::ofstream loss_log(out / "loss.csv", std::ios::trunc);
    if (!loss_log) throw DataError("cannot write loss log under '" + cfg.out + "'");
    TrainResult result;  // iters 0 saves the freshly initialized model as-is
    if (cfg.train.iters > 0) result = train_model(model, *data, cfg.train, &loss_log);
    loss_log.close();
    model.save((out / "model.ckpt").string());

    std::printf("variant %s: %d iterations, final loss %.17g\n", variant_name(variant),
                result.iterations_run, result.final_loss);
    std::printf("checkpoint: %s\n", (out / "model.ckpt").string().c_str());
    return 0;
}

int cmd_eval(const Flags& flags, const CLI::App* cmd) {
    const RunConfig cfg = prepare_run(flags, cmd);
    const Variant variant = parse_variant(cfg.variant);
    std::unique_ptr<DataSource> data = make_data_source(cfg);
    Model model(cfg.network, variant, cfg.seed);
    if (flags.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
    model.load(flags.checkpoint);

    const fs::path out(cfg.out);
    const int n = cfg.eval_samples > 0 ? std::min(cfg.eval_samples, data->size()) : data->size();
    std::ofstream per_sample(out / "per_sample_metrics.csv", std::ios::trunc);
    per_sample << "sample,metric,value\n";
    std::vector<std::vector<MetricValue>> all;
    char line[160];
    for (int i = 0; i < n; ++i) {
        const StereoSample& s = data->get(i);
        const Tensor pred = model.forward(s, false);
        write_prediction_pngs(out, "pred", i, pred, static_cast<double>(cfg.network.d_max));
        all.push_back(compute_metrics(pred, s.gt, s.calib));
        for (const MetricValue& m : all.back()) {
            std::snprintf(line, sizeof(line), "%d,%s,%.17g\n", i, m.name.c_str(), m.value);
            per_sample << line;
        }
    }
    std::ofstream avg_csv(out / "metrics.csv", std::ios::trunc);
    avg_csv << "metric,value\n";
    for (const MetricValue& m : average_metrics(all)) {
        std::snprintf(line, sizeof(line), "%s,%.17g\n", m.name.c_str(), m.value);
        avg_csv << line;
        std::printf("%s = %.17g\n", m.name.c_str(), m.value);
    }
    return 0;
}

int cmd_density(const Flags& flags, const CLI::App* cmd) {
    const RunConfig cfg = prepare_run(flags, cmd);
    const Variant variant = parse_variant(cfg.variant);
    std::unique_ptr<DataSource> data = make_data_source(cfg);
    Model model(cfg.network, variant, cfg.seed);
    if (flags.checkpoint.empty()) throw ConfigError("density needs --checkpoint");
    model.load(flags.checkpoint);

    DensitySweepConfig sweep;
    sweep.fractions = cfg.density_fractions;
    sweep.seeds = cfg.density_seeds;
    sweep.eval_samples = cfg.density_eval_samples;

    const fs::path csv_path = fs::path(cfg.out) / "density.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw DataError("cannot write '" + csv_path.string() + "'");
    density_sweep(model, *data, sweep, csv);
    std::printf("wrote %s (%zu fractions x %zu seeds)\n", csv_path.string().c_str(),
                sweep.fractions.size(), sweep.seeds.size());
    return 0;
}

int cmd_sensitivity(const Flags& flags, const CLI::App* cmd) {
    const RunConfig cfg = prepare_run(flags, cmd);
    const Variant variant = parse_variant(cfg.variant);
    std::unique_ptr<DataSource> data = make_data_source(cfg);
    Model model(cfg.network, variant, cfg.seed);
    if (flags.checkpoint.empty()) throw ConfigError("sensitivity needs --checkpoint");
    model.load(flags.checkpoint);

    if (cfg.sens_sample < 0 || cfg.sens_sample >= data->size())
        throw ConfigError("probe sample index out of range");
    const StereoSample& s = data->get(cfg.sens_sample);
    Tensor base, probed;
    const SensitivityResult r = sensitivity_probe(model, s, cfg.sens_y0, cfg.sens_x0, cfg.sens_h,
                                                  cfg.sens_w, cfg.sens_delta, &base, &probed);

    const fs::path out(cfg.out);
    write_prediction_pngs(out, "base", cfg.sens_sample, base,
                          static_cast<double>(cfg.network.d_max));
    write_prediction_pngs(out, "probed", cfg.sens_sample, probed,
                          static_cast<double>(cfg.network.d_max));
    Tensor delta_map({base.dim(0), base.dim(1)});
    double delta_hi = 0.0;
    for (size_t i = 0; i < delta_map.values.size(); ++i) {
        delta_map.values[i] = std::abs(probed.values[i] - base.values[i]);
        delta_hi = std::max(delta_hi, delta_map.values[i]);
    }
    write_prediction_pngs(out, "delta", cfg.sens_sample, delta_map,
                          delta_hi > 0.0 ? delta_hi : 1.0);

    std::ofstream report(out / "sensitivity.csv", std::ios::trunc);
    char line[160];
    report << "metric,value\n";
    std::snprintf(line, sizeof(line), "inside_mean_abs_delta,%.17g\n", r.inside_mean_abs_delta);
    report << line;
    std::snprintf(line, sizeof(line), "outside_mean_abs_delta,%.17g\n", r.outside_mean_abs_delta);
    report << line;
    std::snprintf(line, sizeof(line), "perturbed_measurements,%lld\n",
                  static_cast<long long>(r.perturbed_measurements));
    report << line;
    std::printf("inside_mean_abs_delta = %.17g\n", r.inside_mean_abs_delta);
    std::printf("outside_mean_abs_delta = %.17g\n", r.outside_mean_abs_delta);
    std::printf("perturbed_measurements = %lld\n",
                static_cast<long long>(r.perturbed_measurements));
    return 0;
}

int cmd_params(const Flags& flags, const CLI::App* cmd) {
    const RunConfig cfg = prepare_run(flags, cmd);
    const Variant selected = parse_variant(cfg.variant);
    const fs::path out(cfg.out);
    std::ofstream report(out / "params.txt", std::ios::trunc);
    if (!report) throw DataError("cannot write params report under '" + cfg.out + "'");

    const int n_disp = cfg.network.n_disp_vol();
    const int bins = cfg.network.bins();
    const int c = cfg.network.reg_channels;
    const int64_t cat = categorical_params_per_layer(bins, n_disp, c);
    const int64_t hier = hier_params_per_layer(bins, n_disp, c);
    char line[256];
    std::snprintf(line, sizeof(line),
                  "conditioning per layer (bins=%d, n_disp=%d, channels=%d):\n", bins, n_disp, c);
    report << line;
    std::cout << line;
    std::snprintf(line, sizeof(line),
                  "  categorical %lld, hierarchical %lld, reduction %.2fx\n",
                  static_cast<long long>(cat), static_cast<long long>(hier),
                  static_cast<double>(cat) / static_cast<double>(hier));
    report << line;
    std::cout << line;

    const StereoSample scene = gen_scene(cfg.scene, cfg.seed);
    report << "\nvariant, params_total, params_conditioning, median_forward_ms, checkpoint_ok\n";
    std::cout << "\nvariant, params_total, params_conditioning, median_forward_ms, "
                 "checkpoint_ok\n";
    for (const std::string& name : variant_names()) {
        const Variant v = parse_variant(name);
        Model model(cfg.network, v, cfg.seed);
        if (v == selected || flags.all_runtimes) {
            const RuntimeReport r = runtime_report(model, scene, flags.runs,
                                                   (out / "scratch.ckpt").string());
            std::snprintf(line, sizeof(line), "%s, %lld, %lld, %.3f, %s\n", name.c_str(),
                          static_cast<long long>(r.param_total),
                          static_cast<long long>(r.param_conditioning), r.median_forward_ms,
                          r.checkpoint_matches ? "yes" : "no");
        } else {
            std::snprintf(line, sizeof(line), "%s, %lld, %lld, -, -\n", name.c_str(),
                          static_cast<long long>(model.param_count(true)),
                          static_cast<long long>(model.conditioning_param_count()));
        }
        report << line;
        std::cout << line;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-LiDAR-conditioned stereo matching"};
    app.require_subcommand(1);

    Flags flags;
    CLI::App* train = app.add_subcommand("train", "train a variant and write a checkpoint");
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint, write metrics and maps");
    CLI::App* density = app.add_subcommand("density", "LiDAR density sweep CSV");
    CLI::App* sensitivity =
        app.add_subcommand("sensitivity", "perturb a LiDAR region, measure the response");
    CLI::App* params = app.add_subcommand("params", "parameter and runtime accounting table");
    for (CLI::App* cmd : {train, eval, density, sensitivity, params}) flags.add_to(cmd);
    for (CLI::App* cmd : {eval, density, sensitivity})
        cmd->add_option("--checkpoint", flags.checkpoint, "trained model checkpoint")->required();
    params->add_option("--runs", flags.runs, "forward passes per timing");
    params->add_flag("--all-runtimes", flags.all_runtimes, "time every variant");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) return cmd_train(flags, train);
        if (eval->parsed()) return cmd_eval(flags, eval);
        if (density->parsed()) return cmd_density(flags, density);
        if (sensitivity->parsed()) return cmd_sensitivity(flags, sensitivity);
        if (params->parsed()) return cmd_params(flags, params);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
