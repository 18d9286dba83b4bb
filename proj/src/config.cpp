#include "sdabn/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sdabn/cascade.hpp"
#include "sdabn/rng.hpp"

namespace sdabn {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw ConfigError("config: " + path + ": " + what);
}

void expect_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* k : keys) {
            if (key == k) {
                known = true;
                break;
            }
        }
        if (!known) bad(path + "." + key, "unknown key");
    }
}

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        bad(path + "." + key, "wrong type");
    }
}

void parse_schedule(const json& obj, const std::string& path, StageSchedule& s) {
    if (!obj.is_object()) bad(path, "must be an object");
    expect_keys(obj, path,
                {"epochs", "batch_size", "lr", "momentum", "beta1", "beta2", "epsilon", "patience",
                 "min_delta", "lr_decay", "lr_step_epochs"});
    read_field(obj, path, "epochs", s.epochs);
    read_field(obj, path, "batch_size", s.batch_size);
    read_field(obj, path, "lr", s.lr);
    read_field(obj, path, "momentum", s.momentum);
    read_field(obj, path, "beta1", s.beta1);
    read_field(obj, path, "beta2", s.beta2);
    read_field(obj, path, "epsilon", s.epsilon);
    read_field(obj, path, "patience", s.patience);
    read_field(obj, path, "min_delta", s.min_delta);
    read_field(obj, path, "lr_decay", s.lr_decay);
    read_field(obj, path, "lr_step_epochs", s.lr_step_epochs);
    if (s.epochs < 1) bad(path + ".epochs", "must be >= 1");
    if (s.batch_size < 1) bad(path + ".batch_size", "must be >= 1");
    if (!(s.lr > 0.0)) bad(path + ".lr", "must be > 0");
    if (s.patience < 1) bad(path + ".patience", "must be >= 1");
}

}  // namespace

void ExperimentConfig::validate() const {
    if (experiment_id.empty()) throw ConfigError("config: .experiment_id: must not be empty");
    if (dataset.count < 2) throw ConfigError("config: .dataset.count: must be >= 2");
    if (dataset.size < 8 || dataset.size % 4 != 0) {
        throw ConfigError("config: .dataset.size: must be a multiple of 4 and >= 8");
    }
    if (dataset.classes < 2 || dataset.classes > 16) {
        throw ConfigError("config: .dataset.classes: must lie in [2, 16]");
    }
    if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0)) {
        throw ConfigError("config: .dataset.train_fraction: must lie in (0, 1)");
    }
    noise.validate();
    if (model.blocks < 1 || model.blocks > 8) throw ConfigError("config: .model.blocks: must lie in [1, 8]");
    if (model.variants.size() != static_cast<std::size_t>(model.blocks)) {
        throw ConfigError("config: .model.variants: expected one entry per block");
    }
    for (const std::string& v : model.variants) variant_from_name(v);
    if (model.seg_width1 < 1 || model.seg_width2 < 1 || model.seg_width3 < 1 ||
        model.denoiser_width < 1 || model.sft_width < 1) {
        throw ConfigError("config: .model: widths must be positive");
    }
    if (training.mode != "progressive" && training.mode != "joint") {
        throw ConfigError("config: .training.mode: must be 'progressive' or 'joint'");
    }
    if (training.mode == "joint" && model.blocks != 2) {
        throw ConfigError("config: joint training uses the S1 D1 S2 structure; set model.blocks = 2");
    }
}

std::filesystem::path ExperimentConfig::resolved_output_dir() const {
    std::filesystem::path p(output_dir);
    const char* root = std::getenv("SDABN_OUTPUT_ROOT");
    if (root != nullptr && *root != '\0' && p.is_relative()) return std::filesystem::path(root) / p;
    return p;
}

std::filesystem::path ExperimentConfig::resolved_dataset_root() const {
    std::filesystem::path p(dataset.root);
    const char* root = std::getenv("SDABN_OUTPUT_ROOT");
    if (root != nullptr && *root != '\0' && p.is_relative()) return std::filesystem::path(root) / p;
    return p;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + origin + ": invalid JSON: " + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: " + origin + ": top level must be an object");

    ExperimentConfig c;
    expect_keys(root, "", {"experiment_id", "seed", "output_dir", "dataset", "noise", "model", "training"});
    read_field(root, "", "experiment_id", c.experiment_id);
    read_field(root, "", "seed", c.seed);
    read_field(root, "", "output_dir", c.output_dir);

    if (root.contains("dataset")) {
        const json& d = root.at("dataset");
        if (!d.is_object()) bad(".dataset", "must be an object");
        expect_keys(d, ".dataset", {"root", "count", "size", "classes", "seed", "train_fraction"});
        read_field(d, ".dataset", "root", c.dataset.root);
        read_field(d, ".dataset", "count", c.dataset.count);
        read_field(d, ".dataset", "size", c.dataset.size);
        read_field(d, ".dataset", "classes", c.dataset.classes);
        read_field(d, ".dataset", "seed", c.dataset.seed);
        read_field(d, ".dataset", "train_fraction", c.dataset.train_fraction);
    }

    if (root.contains("noise")) {
        const json& n = root.at("noise");
        if (!n.is_object()) bad(".noise", "must be an object");
        expect_keys(n, ".noise", {"kind", "sigma", "peak", "seed"});
        std::string kind = c.noise.kind == NoiseKind::gaussian ? "gaussian" : "poisson";
        read_field(n, ".noise", "kind", kind);
        if (kind == "gaussian") {
            c.noise.kind = NoiseKind::gaussian;
        } else if (kind == "poisson") {
            c.noise.kind = NoiseKind::poisson;
        } else {
            bad(".noise.kind", "must be 'gaussian' or 'poisson'");
        }
        read_field(n, ".noise", "sigma", c.noise.sigma);
        read_field(n, ".noise", "peak", c.noise.peak);
        read_field(n, ".noise", "seed", c.noise.seed);
        if (c.noise.kind == NoiseKind::gaussian && n.contains("peak")) {
            bad(".noise.peak", "only valid for poisson noise");
        }
        if (c.noise.kind == NoiseKind::poisson && n.contains("sigma")) {
            bad(".noise.sigma", "only valid for gaussian noise");
        }
        if (c.noise.kind == NoiseKind::poisson && !n.contains("peak")) c.noise.peak = 255.0;
    }

    if (root.contains("model")) {
        const json& m = root.at("model");
        if (!m.is_object()) bad(".model", "must be an object");
        expect_keys(m, ".model",
                    {"blocks", "variant", "variants", "seg_widths", "denoiser_width", "sft_width",
                     "truncate_tail"});
        read_field(m, ".model", "blocks", c.model.blocks);
        if (m.contains("variant") && m.contains("variants")) {
            bad(".model", "give either 'variant' or 'variants', not both");
        }
        if (m.contains("variant")) {
            std::string v;
            read_field(m, ".model", "variant", v);
            c.model.variants.assign(static_cast<std::size_t>(std::max(c.model.blocks, 1)), v);
        }
        if (m.contains("variants")) {
            read_field(m, ".model", "variants", c.model.variants);
        }
        if (m.contains("seg_widths")) {
            std::vector<std::int64_t> w;
            read_field(m, ".model", "seg_widths", w);
            if (w.size() != 3) bad(".model.seg_widths", "expected 3 entries");
            c.model.seg_width1 = w[0];
            c.model.seg_width2 = w[1];
            c.model.seg_width3 = w[2];
        }
        read_field(m, ".model", "denoiser_width", c.model.denoiser_width);
        read_field(m, ".model", "sft_width", c.model.sft_width);
        read_field(m, ".model", "truncate_tail", c.model.truncate_tail);
    }
    if (c.model.variants.empty()) {
        c.model.variants.assign(static_cast<std::size_t>(std::max(c.model.blocks, 1)), "conditioned");
    }

    if (root.contains("training")) {
        const json& t = root.at("training");
        if (!t.is_object()) bad(".training", "must be an object");
        expect_keys(t, ".training", {"mode", "segmentation", "denoising"});
        read_field(t, ".training", "mode", c.training.mode);
        if (t.contains("segmentation")) parse_schedule(t.at("segmentation"), ".training.segmentation", c.training.segmentation);
        if (t.contains("denoising")) parse_schedule(t.at("denoising"), ".training.denoising", c.training.denoising);
    }

    c.validate();
    return c;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

namespace {

json schedule_json(const StageSchedule& s) {
    return json{{"epochs", s.epochs},       {"batch_size", s.batch_size},
                {"lr", s.lr},               {"momentum", s.momentum},
                {"beta1", s.beta1},         {"beta2", s.beta2},
                {"epsilon", s.epsilon},     {"patience", s.patience},
                {"min_delta", s.min_delta}, {"lr_decay", s.lr_decay},
                {"lr_step_epochs", s.lr_step_epochs}};
}

json config_json(const ExperimentConfig& c, int blocks_limit) {
    json noise;
    noise["kind"] = c.noise.kind == NoiseKind::gaussian ? "gaussian" : "poisson";
    if (c.noise.kind == NoiseKind::gaussian) {
        noise["sigma"] = c.noise.sigma;
    } else {
        noise["peak"] = c.noise.peak;
    }
    noise["seed"] = c.noise.seed;

    std::vector<std::string> variants = c.model.variants;
    if (blocks_limit >= 0 && static_cast<std::size_t>(blocks_limit) < variants.size()) {
        variants.resize(static_cast<std::size_t>(blocks_limit));
    }

    json model{{"seg_widths", {c.model.seg_width1, c.model.seg_width2, c.model.seg_width3}},
               {"denoiser_width", c.model.denoiser_width},
               {"sft_width", c.model.sft_width},
               {"variants", variants}};
    if (blocks_limit < 0) {
        model["blocks"] = c.model.blocks;
        model["truncate_tail"] = c.model.truncate_tail;
    }

    json j{{"seed", c.seed},
           {"dataset",
            {{"root", c.dataset.root},
             {"count", c.dataset.count},
             {"size", c.dataset.size},
             {"classes", c.dataset.classes},
             {"seed", c.dataset.seed},
             {"train_fraction", c.dataset.train_fraction}}},
           {"noise", noise},
           {"model", model},
           {"training",
            {{"mode", c.training.mode},
             {"segmentation", schedule_json(c.training.segmentation)},
             {"denoising", schedule_json(c.training.denoising)}}}};
    if (blocks_limit < 0) {
        j["experiment_id"] = c.experiment_id;
        j["output_dir"] = c.output_dir;
    }
    return j;
}

}  // namespace

std::string canonical_config_json(const ExperimentConfig& config) {
    return config_json(config, -1).dump(2);
}

std::uint64_t stage_config_digest(const ExperimentConfig& config, int blocks_needed) {
    const std::string s = config_json(config, blocks_needed).dump();
    return fnv1a(s.data(), s.size());
}

}  // namespace sdabn
