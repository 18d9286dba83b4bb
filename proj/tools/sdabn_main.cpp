#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdabn/config.hpp"
#include "sdabn/dataset.hpp"
#include "sdabn/errors.hpp"
#include "sdabn/eval.hpp"
#include "sdabn/report.hpp"
#include "sdabn/training.hpp"

namespace {

using namespace sdabn;

ExperimentConfig load_config_or_default(const std::string& config_path) {
    if (config_path.empty()) {
        ExperimentConfig c;
        c.validate();
        return c;
    }
    return parse_config_file(config_path);
}

int cmd_generate(const std::string& config_path, bool force, std::int64_t seed_override) {
    ExperimentConfig config = load_config_or_default(config_path);
    if (seed_override >= 0) config.dataset.seed = static_cast<std::uint64_t>(seed_override);
    const std::filesystem::path root = config.resolved_dataset_root();
    const auto manifest_path = root / "manifest.txt";
    if (std::filesystem::exists(manifest_path) && !force) {
        throw UsageError("dataset already exists at " + root.string() + "; pass --force to regenerate");
    }
    if (std::filesystem::exists(root) && force) std::filesystem::remove_all(root);

    DatasetManifest all = generate_dataset(config.dataset.count, config.dataset.size,
                                           config.dataset.classes, config.dataset.seed, root);
    auto [train, test] = split_dataset(all, config.dataset.train_fraction, config.dataset.seed);
    save_manifest(train, root / "manifest_train.txt");
    save_manifest(test, root / "manifest_test.txt");
    std::printf("%s\n", manifest_path.string().c_str());
    std::printf("train=%zu test=%zu size=%lld classes=%lld\n", train.size(), test.size(),
                static_cast<long long>(config.dataset.size), static_cast<long long>(config.dataset.classes));
    return 0;
}

int cmd_train(const std::string& config_path, bool force, int blocks_override,
              const std::string& variant_override, const std::string& output_override) {
    ExperimentConfig config = load_config_or_default(config_path);
    if (blocks_override > 0) {
        config.model.blocks = blocks_override;
        if (config.model.variants.size() == 1 || !config.model.variants.empty()) {
            config.model.variants.assign(static_cast<std::size_t>(blocks_override), config.model.variants[0]);
        }
    }
    if (!variant_override.empty()) {
        if (variant_override == "joint") {
            config.training.mode = "joint";
            config.model.blocks = 2;
            config.model.variants.assign(2, "conditioned");
        } else {
            config.model.variants.assign(static_cast<std::size_t>(config.model.blocks), variant_override);
        }
    }
    if (!output_override.empty()) config.output_dir = output_override;
    config.validate();

    const RunArtifacts artifacts = run_training(config, force);
    std::printf("run: %s\n", artifacts.run_dir.string().c_str());
    std::printf("metrics: %s\n", artifacts.metrics_csv.string().c_str());
    return 0;
}

int cmd_eval(const std::string& run_dir_s, const std::string& split, bool dump_images,
             const std::string& noise_kind, double noise_sigma, double noise_peak,
             std::int64_t noise_seed, const std::string& out_override, bool force) {
    const std::filesystem::path run_dir(run_dir_s);
    const auto cfg_path = run_dir / "config_resolved.json";
    if (!std::filesystem::exists(cfg_path)) {
        throw UsageError("not a run directory (missing config_resolved.json): " + run_dir.string());
    }
    ExperimentConfig config = parse_config_file(cfg_path);

    NoiseSpec noise = config.noise;
    if (!noise_kind.empty()) {
        if (noise_kind == "gaussian") {
            noise.kind = NoiseKind::gaussian;
        } else if (noise_kind == "poisson") {
            noise.kind = NoiseKind::poisson;
        } else {
            throw ConfigError("--noise-kind must be gaussian or poisson");
        }
    }
    if (noise_sigma > 0) noise.sigma = noise_sigma;
    if (noise_peak > 0) noise.peak = noise_peak;
    if (noise.kind == NoiseKind::poisson && noise.peak <= 0) noise.peak = 255.0;
    if (noise_seed >= 0) noise.seed = static_cast<std::uint64_t>(noise_seed);
    noise.validate();

    CascadeParams cascade = load_run_cascade(run_dir, config);

    const std::filesystem::path root = config.resolved_dataset_root();
    std::vector<std::pair<std::string, std::vector<MetricsRecord>>> sections;
    std::vector<std::string> splits;
    if (split == "both") {
        splits = {"train", "test"};
    } else if (split == "train" || split == "test") {
        splits = {split};
    } else {
        throw ConfigError("--split must be train, test or both");
    }
    for (const std::string& s : splits) {
        DatasetManifest m = load_manifest(root / ("manifest_" + s + ".txt"));
        std::vector<Sample> samples = load_samples(m);
        EvalOptions opts;
        opts.dump_images = dump_images;
        opts.dump_dir = run_dir / "dumps";
        opts.dump_prefix = s + "_";
        sections.emplace_back(s, evaluate_cascade(cascade, samples, noise, opts));
    }

    const std::filesystem::path out_path =
        out_override.empty() ? run_dir / "eval_metrics.csv" : std::filesystem::path(out_override);
    if (std::filesystem::exists(out_path) && !force) {
        throw UsageError(out_path.string() + " already exists; pass --force to overwrite");
    }
    write_metrics_csv(out_path, config.experiment_id, noise.describe(), sections);
    std::printf("%s\n", out_path.string().c_str());
    return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.empty()) throw UsageError("report: at least one run directory is required");
    std::vector<RunSummary> summaries;
    std::string missing;
    for (const std::string& dir : run_dirs) {
        if (!std::filesystem::exists(std::filesystem::path(dir) / "metrics.csv")) {
            missing += (missing.empty() ? "" : ", ") + dir;
            continue;
        }
        summaries.push_back(read_run_summary(dir));
    }
    if (!missing.empty()) throw UsageError("report: missing metrics for runs: " + missing);
    write_report(summaries, out_dir);
    std::printf("%s\n", (std::filesystem::path(out_dir) / "summary.txt").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"segmentation-and-denoising alternate boosting experiments"};
    app.require_subcommand(1);

    std::string config_path;
    bool force = false;

    auto* generate = app.add_subcommand("generate", "generate the synthetic labelled dataset");
    std::int64_t gen_seed = -1;
    generate->add_option("--config", config_path, "experiment config file (JSON)");
    generate->add_flag("--force", force, "overwrite an existing dataset");
    generate->add_option("--seed", gen_seed, "override dataset.seed");

    auto* train = app.add_subcommand("train", "train the configured cascade");
    int blocks_override = 0;
    std::string variant_override, output_override;
    train->add_option("--config", config_path, "experiment config file (JSON)");
    train->add_flag("--force", force, "discard any previous results in the output directory");
    train->add_option("--blocks", blocks_override, "override model.blocks");
    train->add_option("--variant", variant_override,
                      "conditioned|plain|img-condition|gt-condition|joint (applies to every block)");
    train->add_option("--output", output_override, "override output_dir");

    auto* eval = app.add_subcommand("eval", "evaluate a finished run");
    std::string run_dir, split = "test", noise_kind, eval_out;
    double noise_sigma = 0.0, noise_peak = 0.0;
    std::int64_t noise_seed = -1;
    bool dump_images = false;
    eval->add_option("--run", run_dir, "run directory produced by train")->required();
    eval->add_option("--split", split, "train|test|both (default test)");
    eval->add_flag("--dump-images", dump_images, "write per-(sample,unit) denoised/segmentation PNGs");
    eval->add_option("--noise-kind", noise_kind, "override noise kind (gaussian|poisson)");
    eval->add_option("--noise-sigma", noise_sigma, "override gaussian sigma (0-255 scale)");
    eval->add_option("--noise-peak", noise_peak, "override poisson peak (0-255 scale)");
    eval->add_option("--noise-seed", noise_seed, "override noise seed");
    eval->add_option("--out", eval_out, "metrics CSV path (default <run>/eval_metrics.csv)");
    eval->add_flag("--force", force, "overwrite an existing metrics CSV");

    auto* report = app.add_subcommand("report", "merge runs into summary tables and plots");
    std::vector<std::string> report_runs;
    std::string report_out = "report";
    report->add_option("runs", report_runs, "run directories");
    report->add_option("--out", report_out, "report output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (generate->parsed()) return cmd_generate(config_path, force, gen_seed);
        if (train->parsed()) {
            return cmd_train(config_path, force, blocks_override, variant_override, output_override);
        }
        if (eval->parsed()) {
            return cmd_eval(run_dir, split, dump_images, noise_kind, noise_sigma, noise_peak,
                            noise_seed, eval_out, force);
        }
        if (report->parsed()) return cmd_report(report_runs, report_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "checkpoint error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
