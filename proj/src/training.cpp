#include "sdabn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sdabn/eval.hpp"
#include "sdabn/rng.hpp"

namespace sdabn {

namespace {

std::uint64_t stage_seed(std::uint64_t seed, char kind, int block) {
    return derive_seed(seed, 0x5347u + static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(block));
}

struct LoopHooks {
    std::function<void(int epoch, double lr)> begin_epoch;
    std::function<double(std::span<const std::size_t>, std::uint64_t epoch)> train_batch;
    std::function<double()> validate;
};

StageResult run_stage_loop(const StageSchedule& schedule, std::size_t train_count,
                           std::uint64_t shuffle_seed, ParamList params, const LoopHooks& hooks,
                           const std::string& tag, bool verbose) {
    std::vector<std::vector<double>> best_values;
    auto take_snapshot = [&] {
        best_values.clear();
        best_values.reserve(params.size());
        for (const auto& [name, t] : params) best_values.push_back(t.values());
    };
    auto restore_snapshot = [&] {
        for (std::size_t i = 0; i < params.size(); ++i) params[i].second.values() = best_values[i];
    };

    StageResult result;
    result.initial_val_loss = hooks.validate();
    double best = result.initial_val_loss;
    take_snapshot();
    int stale_epochs = 0;

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_count);
    for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
        double lr = schedule.lr;
        if (schedule.lr_step_epochs > 0) {
            lr *= std::pow(schedule.lr_decay, (epoch - 1) / schedule.lr_step_epochs);
        }
        hooks.begin_epoch(epoch, lr);

        std::iota(order.begin(), order.end(), 0);
        CounterRng rng(derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = train_count; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        std::size_t batches = 0;
        const auto bs = static_cast<std::size_t>(schedule.batch_size);
        for (std::size_t begin = 0; begin < train_count; begin += bs) {
            const std::size_t end = std::min(train_count, begin + bs);
            loss_sum += hooks.train_batch(std::span<const std::size_t>(order.data() + begin, end - begin),
                                          static_cast<std::uint64_t>(epoch));
            ++batches;
        }

        const double val = hooks.validate();
        result.epochs_run = epoch;
        if (verbose) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::fprintf(stdout, "[%s] epoch %d/%d  train %.6f  val %.6f  best %.6f  (%.1fs)\n",
                         tag.c_str(), epoch, schedule.epochs, loss_sum / static_cast<double>(batches),
                         val, std::min(best, val), secs);
            std::fflush(stdout);
        }
        if (val < best - schedule.min_delta) {
            best = val;
            take_snapshot();
            stale_epochs = 0;
        } else if (++stale_epochs >= schedule.patience) {
            break;
        }
    }
    restore_snapshot();
    result.best_val_loss = best;
    return result;
}

Tensor clean_batch_tensor(const std::vector<Sample>& samples, std::span<const std::size_t> ids) {
    std::vector<Image> imgs;
    imgs.reserve(ids.size());
    for (std::size_t id : ids) imgs.push_back(samples[id].clean);
    return images_to_tensor(imgs);
}

LabelBatch label_batch_of(const std::vector<Sample>& samples, std::span<const std::size_t> ids) {
    std::vector<LabelMap> labs;
    labs.reserve(ids.size());
    for (std::size_t id : ids) labs.push_back(samples[id].labels);
    return labels_to_batch(labs);
}

Tensor noisy_batch_for_epoch(const std::vector<Sample>& samples, std::span<const std::size_t> ids,
                             const NoiseSpec& noise, std::uint64_t epoch) {
    std::vector<Image> imgs;
    imgs.reserve(ids.size());
    for (std::size_t id : ids) {
        imgs.push_back(corrupt_for_epoch(samples[id].clean, noise, samples[id].index, epoch));
    }
    return images_to_tensor(imgs);
}

Tensor noisy_batch_fixed(const std::vector<Sample>& samples, std::size_t begin, std::size_t end,
                         const NoiseSpec& noise) {
    std::vector<Image> imgs;
    imgs.reserve(end - begin);
    for (std::size_t k = begin; k < end; ++k) {
        imgs.push_back(corrupt(samples[k].clean, noise, samples[k].index));
    }
    return images_to_tensor(imgs);
}

bool prefix_has_gt_block(const CascadeParams& cascade, int upto) {
    for (int j = 0; j < upto; ++j) {
        if (cascade.blocks[static_cast<std::size_t>(j)].variant == BlockVariant::gt_conditioned) return true;
    }
    return false;
}

/// Input of block i's segmentation net: y for block 1, otherwise the frozen
/// prefix's last denoised output. Runs without gradient recording.
Tensor stage_input(const CascadeParams& cascade, int block_index, const Tensor& y,
                   const LabelBatch& labels) {
    if (block_index == 1) return y;
    NoGradGuard no_grad;
    Tensor gt;
    const Tensor* gtp = nullptr;
    if (prefix_has_gt_block(cascade, block_index - 1)) {
        gt = one_hot_labels(labels, cascade.classes);
        gtp = &gt;
    }
    CascadeOutputs out = cascade_forward(cascade, y, block_index - 1, gtp);
    return out.denoised.back();
}

struct SegValBatch {
    Tensor input;
    LabelBatch labels;
    std::size_t pixels;
};

double seg_val_loss(const SegNetTiny& seg, const std::vector<SegValBatch>& batches) {
    NoGradGuard no_grad;
    double acc = 0.0;
    std::size_t total = 0;
    for (const SegValBatch& b : batches) {
        auto [logits, probs] = seg.forward(b.input);
        acc += cross_entropy_loss(logits, b.labels).item() * static_cast<double>(b.pixels);
        total += b.pixels;
    }
    return acc / static_cast<double>(total);
}

}  // namespace

StageResult train_bootstrap_segmentation(SegNetTiny& net, const StageIO& io,
                                         const StageSchedule& schedule) {
    const auto& train = *io.train;
    const auto& val = *io.val;

    std::vector<SegValBatch> val_batches;
    for (std::size_t begin = 0; begin < val.size(); begin += static_cast<std::size_t>(schedule.batch_size)) {
        const std::size_t end = std::min(val.size(), begin + static_cast<std::size_t>(schedule.batch_size));
        SegValBatch b;
        std::vector<std::size_t> ids(end - begin);
        std::iota(ids.begin(), ids.end(), begin);
        b.input = clean_batch_tensor(val, ids);
        b.labels = label_batch_of(val, ids);
        b.pixels = static_cast<std::size_t>(b.labels.numel());
        val_batches.push_back(std::move(b));
    }

    ParamList params;
    net.register_params(params, "bootstrap");
    SgdOptimizer opt(params, schedule.lr, schedule.momentum);

    LoopHooks hooks;
    hooks.begin_epoch = [&](int, double lr) { opt.set_lr(lr); };
    hooks.train_batch = [&](std::span<const std::size_t> ids, std::uint64_t) {
        Tensor input = clean_batch_tensor(train, ids);
        LabelBatch labels = label_batch_of(train, ids);
        Tape tape;
        auto [logits, probs] = net.forward(input);
        Tensor loss = cross_entropy_loss(logits, labels);
        tape.backward(loss);
        const double value = loss.item();
        opt.step();
        return value;
    };
    hooks.validate = [&] { return seg_val_loss(net, val_batches); };
    return run_stage_loop(schedule, train.size(), stage_seed(io.seed, 'B', 0), params, hooks, "S0",
                          io.verbose);
}

StageResult train_segmentation_stage(CascadeParams& cascade, int block_index, const StageIO& io,
                                     const StageSchedule& schedule) {
    if (block_index < 1 || block_index > static_cast<int>(cascade.size())) {
        throw UsageError("train_segmentation_stage: block index out of range");
    }
    SegNetTiny& seg = cascade.blocks[static_cast<std::size_t>(block_index - 1)].sdb.seg;
    const auto& train = *io.train;
    const auto& val = *io.val;

    // validation inputs are fixed for the whole stage: per-sample noise plus
    // the frozen prefix's outputs
    std::vector<SegValBatch> val_batches;
    {
        NoGradGuard no_grad;
        const auto bs = static_cast<std::size_t>(schedule.batch_size);
        for (std::size_t begin = 0; begin < val.size(); begin += bs) {
            const std::size_t end = std::min(val.size(), begin + bs);
            SegValBatch b;
            std::vector<std::size_t> ids(end - begin);
            std::iota(ids.begin(), ids.end(), begin);
            Tensor y = noisy_batch_fixed(val, begin, end, io.noise);
            b.labels = label_batch_of(val, ids);
            b.input = stage_input(cascade, block_index, y, b.labels);
            b.pixels = static_cast<std::size_t>(b.labels.numel());
            val_batches.push_back(std::move(b));
        }
    }

    ParamList params;
    seg.register_params(params, "block" + std::to_string(block_index) + ".seg");
    SgdOptimizer opt(params, schedule.lr, schedule.momentum);

    LoopHooks hooks;
    hooks.begin_epoch = [&](int, double lr) { opt.set_lr(lr); };
    hooks.train_batch = [&](std::span<const std::size_t> ids, std::uint64_t epoch) {
        LabelBatch labels = label_batch_of(train, ids);
        Tensor input;
        {
            NoGradGuard no_grad;
            Tensor y = noisy_batch_for_epoch(train, ids, io.noise, epoch);
            input = stage_input(cascade, block_index, y, labels);
        }
        Tape tape;
        auto [logits, probs] = seg.forward(input);
        Tensor loss = cross_entropy_loss(logits, labels);
        tape.backward(loss);
        const double value = loss.item();
        opt.step();
        return value;
    };
    hooks.validate = [&] { return seg_val_loss(seg, val_batches); };
    return run_stage_loop(schedule, train.size(), stage_seed(io.seed, 'S', block_index), params, hooks,
                          "S" + std::to_string(block_index), io.verbose);
}

namespace {

struct DenValBatch {
    Tensor den_input;
    Tensor skip_y;  // undefined for block 1
    Tensor condition;
    Tensor clean;
};

Tensor stage_condition(const CascadeParams& cascade, int block_index, const Tensor& den_input,
                       const LabelBatch& labels) {
    NoGradGuard no_grad;
    const CascadeBlock& block = cascade.blocks[static_cast<std::size_t>(block_index - 1)];
    switch (block.variant) {
        case BlockVariant::plain:
            return Tensor();
        case BlockVariant::conditioned: {
            auto [logits, probs] = block.sdb.seg.forward(den_input);
            return probs;
        }
        case BlockVariant::img_conditioned:
            return replicate_channels(den_input, cascade.classes);
        case BlockVariant::gt_conditioned:
            return one_hot_labels(labels, cascade.classes);
    }
    return Tensor();
}

}  // namespace

StageResult train_denoising_stage(CascadeParams& cascade, int block_index, const StageIO& io,
                                  const StageSchedule& schedule) {
    if (block_index < 1 || block_index > static_cast<int>(cascade.size())) {
        throw UsageError("train_denoising_stage: block index out of range");
    }
    DenoiserTiny& den = cascade.blocks[static_cast<std::size_t>(block_index - 1)].sdb.den;
    const auto& train = *io.train;
    const auto& val = *io.val;

    std::vector<DenValBatch> val_batches;
    {
        NoGradGuard no_grad;
        const auto bs = static_cast<std::size_t>(schedule.batch_size);
        for (std::size_t begin = 0; begin < val.size(); begin += bs) {
            const std::size_t end = std::min(val.size(), begin + bs);
            std::vector<std::size_t> ids(end - begin);
            std::iota(ids.begin(), ids.end(), begin);
            DenValBatch b;
            Tensor y = noisy_batch_fixed(val, begin, end, io.noise);
            LabelBatch labels = label_batch_of(val, ids);
            b.den_input = stage_input(cascade, block_index, y, labels);
            if (block_index > 1) b.skip_y = y;
            b.condition = stage_condition(cascade, block_index, b.den_input, labels);
            b.clean = clean_batch_tensor(val, ids);
            val_batches.push_back(std::move(b));
        }
    }

    ParamList params;
    den.register_params(params, "block" + std::to_string(block_index) + ".den");
    AdamOptimizer opt(params, schedule.lr, schedule.beta1, schedule.beta2, schedule.epsilon);

    auto den_forward = [&](const DenValBatch& b) {
        if (b.skip_y.defined()) {
            const Tensor pair[] = {b.den_input, b.skip_y};
            return den.forward(pair, b.condition);
        }
        const Tensor single[] = {b.den_input};
        return den.forward(single, b.condition);
    };

    LoopHooks hooks;
    hooks.begin_epoch = [&](int, double lr) { opt.set_lr(lr); };
    hooks.train_batch = [&](std::span<const std::size_t> ids, std::uint64_t epoch) {
        DenValBatch b;
        LabelBatch labels = label_batch_of(train, ids);
        {
            NoGradGuard no_grad;
            Tensor y = noisy_batch_for_epoch(train, ids, io.noise, epoch);
            b.den_input = stage_input(cascade, block_index, y, labels);
            if (block_index > 1) b.skip_y = y;
            b.condition = stage_condition(cascade, block_index, b.den_input, labels);
        }
        b.clean = clean_batch_tensor(train, ids);
        Tape tape;
        Tensor out = den_forward(b);
        Tensor loss = mse_loss(out, b.clean);
        tape.backward(loss);
        const double value = loss.item();
        opt.step();
        return value;
    };
    hooks.validate = [&] {
        NoGradGuard no_grad;
        double acc = 0.0;
        std::int64_t total = 0;
        for (const DenValBatch& b : val_batches) {
            acc += mse_loss(den_forward(b), b.clean).item() * static_cast<double>(b.clean.numel());
            total += b.clean.numel();
        }
        return acc / static_cast<double>(total);
    };
    return run_stage_loop(schedule, train.size(), stage_seed(io.seed, 'D', block_index), params, hooks,
                          "D" + std::to_string(block_index), io.verbose);
}

StageResult train_joint_variant(CascadeParams& cascade, const StageIO& io,
                                const StageSchedule& schedule) {
    if (cascade.size() != 2) throw UsageError("joint training expects the S1 D1 S2 structure (2 blocks)");
    SdbParams& b1 = cascade.blocks[0].sdb;
    SegNetTiny& s2 = cascade.blocks[1].sdb.seg;
    const auto& train = *io.train;
    const auto& val = *io.val;

    ParamList params;
    b1.register_params(params, "block1");
    s2.register_params(params, "block2.seg");
    SgdOptimizer opt(params, schedule.lr, schedule.momentum);

    auto forward_logits = [&](const Tensor& y) {
        auto [logits1, probs1] = b1.seg.forward(y);
        const Tensor single[] = {y};
        Tensor x1 = b1.den.forward(single, probs1);
        auto [logits2, probs2] = s2.forward(x1);
        return logits2;
    };

    std::vector<std::pair<Tensor, LabelBatch>> val_batches;
    {
        const auto bs = static_cast<std::size_t>(schedule.batch_size);
        for (std::size_t begin = 0; begin < val.size(); begin += bs) {
            const std::size_t end = std::min(val.size(), begin + bs);
            std::vector<std::size_t> ids(end - begin);
            std::iota(ids.begin(), ids.end(), begin);
            val_batches.emplace_back(noisy_batch_fixed(val, begin, end, io.noise),
                                     label_batch_of(val, ids));
        }
    }

    LoopHooks hooks;
    hooks.begin_epoch = [&](int, double lr) { opt.set_lr(lr); };
    hooks.train_batch = [&](std::span<const std::size_t> ids, std::uint64_t epoch) {
        Tensor y = noisy_batch_for_epoch(train, ids, io.noise, epoch);
        LabelBatch labels = label_batch_of(train, ids);
        Tape tape;
        Tensor loss = cross_entropy_loss(forward_logits(y), labels);
        tape.backward(loss);
        const double value = loss.item();
        opt.step();
        return value;
    };
    hooks.validate = [&] {
        NoGradGuard no_grad;
        double acc = 0.0;
        std::int64_t total = 0;
        for (const auto& [y, labels] : val_batches) {
            acc += cross_entropy_loss(forward_logits(y), labels).item() *
                   static_cast<double>(labels.numel());
            total += labels.numel();
        }
        return acc / static_cast<double>(total);
    };
    return run_stage_loop(schedule, train.size(), stage_seed(io.seed, 'J', 1), params, hooks, "J1",
                          io.verbose);
}

// ---- orchestration -----------------------------------------------------------

CascadeConfig cascade_config_from(const ExperimentConfig& config) {
    CascadeConfig cc;
    cc.blocks = config.model.blocks;
    for (const std::string& v : config.model.variants) cc.variants.push_back(variant_from_name(v));
    cc.seg.classes = config.dataset.classes;
    cc.seg.width1 = config.model.seg_width1;
    cc.seg.width2 = config.model.seg_width2;
    cc.seg.width3 = config.model.seg_width3;
    cc.den.width = config.model.denoiser_width;
    cc.den.sft_width = config.model.sft_width;
    cc.truncated_tail = config.model.truncate_tail || config.training.mode == "joint";
    return cc;
}

bool stage_trains_segmentation(const ExperimentConfig& config, int block_index) {
    const bool truncated = config.model.truncate_tail || config.training.mode == "joint";
    if (truncated && block_index == config.model.blocks) return true;
    return config.model.variants[static_cast<std::size_t>(block_index - 1)] == "conditioned";
}

bool stage_trains_denoiser(const ExperimentConfig& config, int block_index) {
    const bool truncated = config.model.truncate_tail || config.training.mode == "joint";
    return !(truncated && block_index == config.model.blocks);
}

bool needs_bootstrap(const ExperimentConfig& config) {
    if (config.training.mode == "joint") return false;
    for (int i = 1; i <= config.model.blocks; ++i) {
        if (stage_trains_segmentation(config, i)) return true;
    }
    return false;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Loads the stage checkpoint when present (validating its digest), else
/// trains and saves it. Returns true when the stage was loaded.
bool resume_or_train(const std::filesystem::path& path, char kind, int block, std::uint64_t digest,
                     std::uint64_t seed, ParamList& params, const std::string& tag, bool verbose,
                     const std::function<StageResult()>& train_fn) {
    if (std::filesystem::exists(path)) {
        Checkpoint ckpt = load_checkpoint(path);
        if (ckpt.config_digest != digest) {
            throw CheckpointError(path.string() +
                                  ": stage was trained under a different configuration; use --force");
        }
        apply_checkpoint(ckpt, params);
        if (verbose) {
            std::fprintf(stdout, "[%s] reused checkpoint %s\n", tag.c_str(), path.string().c_str());
            std::fflush(stdout);
        }
        return true;
    }
    const StageResult res = train_fn();
    Checkpoint ckpt = make_checkpoint(kind, static_cast<std::uint32_t>(block), digest, seed, params,
                                      {{"initial_val_loss", res.initial_val_loss},
                                       {"best_val_loss", res.best_val_loss},
                                       {"epochs_run", static_cast<double>(res.epochs_run)}});
    save_checkpoint(ckpt, path);
    return false;
}

void load_split_samples(const ExperimentConfig& config, std::vector<Sample>& train,
                        std::vector<Sample>& test) {
    const std::filesystem::path root = config.resolved_dataset_root();
    const auto train_path = root / "manifest_train.txt";
    const auto test_path = root / "manifest_test.txt";
    if (!std::filesystem::exists(train_path) || !std::filesystem::exists(test_path)) {
        throw DataError("dataset not found under " + root.string() + "; run `sdabn generate` first");
    }
    DatasetManifest train_m = load_manifest(train_path);
    DatasetManifest test_m = load_manifest(test_path);
    if (train_m.classes != config.dataset.classes) {
        throw DataError("dataset class count " + std::to_string(train_m.classes) +
                        " does not match config " + std::to_string(config.dataset.classes));
    }
    train = load_samples(train_m);
    test = load_samples(test_m);
}

}  // namespace

RunArtifacts run_training(const ExperimentConfig& config, bool force) {
    config.validate();
    const std::filesystem::path run_dir = config.resolved_output_dir();
    const std::string canonical = canonical_config_json(config);
    const std::filesystem::path cfg_copy = run_dir / "config_resolved.json";

    if (std::filesystem::exists(run_dir)) {
        if (force) {
            std::filesystem::remove_all(run_dir);
        } else {
            if (!std::filesystem::exists(cfg_copy) || slurp(cfg_copy) != canonical) {
                throw UsageError("output directory " + run_dir.string() +
                                 " already holds different results; pass --force to overwrite");
            }
            // same config: resume from whatever stages finished
        }
    }
    std::filesystem::create_directories(run_dir / "checkpoints");
    {
        std::ofstream out(cfg_copy, std::ios::binary);
        out << canonical;
    }

    std::vector<Sample> train_samples, test_samples;
    load_split_samples(config, train_samples, test_samples);

    CascadeParams cascade = make_cascade(cascade_config_from(config), derive_seed(config.seed, 0xca5cadeull));
    StageIO io{&train_samples, &test_samples, config.noise, config.seed, true};

    RunArtifacts artifacts;
    artifacts.run_dir = run_dir;
    const std::filesystem::path ckpt_dir = run_dir / "checkpoints";

    if (config.training.mode == "joint") {
        ParamList params;
        cascade.blocks[0].sdb.register_params(params, "block1");
        cascade.blocks[1].sdb.seg.register_params(params, "block2.seg");
        const std::uint64_t digest = stage_config_digest(config, config.model.blocks);
        const auto path = ckpt_dir / "joint.ckpt";
        resume_or_train(path, 'J', 1, digest, config.seed, params, "J1", io.verbose,
                        [&] { return train_joint_variant(cascade, io, config.training.segmentation); });
        artifacts.checkpoints.push_back(path);

        std::vector<MetricsRecord> records = evaluate_cascade(cascade, test_samples, config.noise);
        std::vector<MetricsRecord> seg_only;
        for (const MetricsRecord& r : records) {
            if (r.unit_index == static_cast<int>(cascade.size()) && r.has_segmentation) {
                MetricsRecord keep = r;
                keep.has_denoising = false;
                seg_only.push_back(keep);
            }
        }
        artifacts.test_metrics = seg_only;
        artifacts.metrics_csv = run_dir / "metrics.csv";
        write_metrics_csv(artifacts.metrics_csv, config.experiment_id, config.noise.describe(),
                          {{"test", seg_only}});
        return artifacts;
    }

    SegNetConfig seg_cfg = cascade_config_from(config).seg;
    SegNetTiny bootstrap = SegNetTiny::make(seg_cfg, derive_seed(config.seed, 0xb007ull));
    if (needs_bootstrap(config)) {
        ParamList params;
        bootstrap.register_params(params, "bootstrap");
        const auto path = ckpt_dir / "S0.ckpt";
        resume_or_train(path, 'S', 0, stage_config_digest(config, 0), config.seed, params, "S0",
                        io.verbose,
                        [&] { return train_bootstrap_segmentation(bootstrap, io, config.training.segmentation); });
        artifacts.checkpoints.push_back(path);
    }

    int last_trained_seg = 0;  // 0 means "bootstrap"
    for (int i = 1; i <= config.model.blocks; ++i) {
        const std::uint64_t digest = stage_config_digest(config, i);
        if (stage_trains_segmentation(config, i)) {
            SegNetTiny& seg = cascade.blocks[static_cast<std::size_t>(i - 1)].sdb.seg;
            seg.copy_values_from(last_trained_seg == 0
                                     ? bootstrap
                                     : cascade.blocks[static_cast<std::size_t>(last_trained_seg - 1)].sdb.seg);
            ParamList params;
            seg.register_params(params, "block" + std::to_string(i) + ".seg");
            const auto path = ckpt_dir / ("S" + std::to_string(i) + ".ckpt");
            resume_or_train(path, 'S', i, digest, config.seed, params, "S" + std::to_string(i),
                            io.verbose,
                            [&] { return train_segmentation_stage(cascade, i, io, config.training.segmentation); });
            artifacts.checkpoints.push_back(path);
            last_trained_seg = i;
        }
        if (stage_trains_denoiser(config, i)) {
            DenoiserTiny& den = cascade.blocks[static_cast<std::size_t>(i - 1)].sdb.den;
            ParamList params;
            den.register_params(params, "block" + std::to_string(i) + ".den");
            const auto path = ckpt_dir / ("D" + std::to_string(i) + ".ckpt");
            resume_or_train(path, 'D', i, digest, config.seed, params, "D" + std::to_string(i),
                            io.verbose,
                            [&] { return train_denoising_stage(cascade, i, io, config.training.denoising); });
            artifacts.checkpoints.push_back(path);
        }
    }

    artifacts.test_metrics = evaluate_cascade(cascade, test_samples, config.noise);
    artifacts.metrics_csv = run_dir / "metrics.csv";
    write_metrics_csv(artifacts.metrics_csv, config.experiment_id, config.noise.describe(),
                      {{"test", artifacts.test_metrics}});
    return artifacts;
}

CascadeParams load_run_cascade(const std::filesystem::path& run_dir, const ExperimentConfig& config,
                               int* completed_blocks) {
    CascadeParams cascade = make_cascade(cascade_config_from(config), derive_seed(config.seed, 0xca5cadeull));
    const std::filesystem::path ckpt_dir = run_dir / "checkpoints";
    int completed = 0;

    if (config.training.mode == "joint") {
        const auto path = ckpt_dir / "joint.ckpt";
        if (!std::filesystem::exists(path)) throw CheckpointError("missing checkpoint " + path.string());
        ParamList params;
        cascade.blocks[0].sdb.register_params(params, "block1");
        cascade.blocks[1].sdb.seg.register_params(params, "block2.seg");
        apply_checkpoint(load_checkpoint(path), params);
        if (completed_blocks) *completed_blocks = 2;
        return cascade;
    }

    for (int i = 1; i <= config.model.blocks; ++i) {
        if (stage_trains_segmentation(config, i)) {
            const auto path = ckpt_dir / ("S" + std::to_string(i) + ".ckpt");
            if (!std::filesystem::exists(path)) break;
            ParamList params;
            cascade.blocks[static_cast<std::size_t>(i - 1)].sdb.seg.register_params(
                params, "block" + std::to_string(i) + ".seg");
            apply_checkpoint(load_checkpoint(path), params);
        }
        if (stage_trains_denoiser(config, i)) {
            const auto path = ckpt_dir / ("D" + std::to_string(i) + ".ckpt");
            if (!std::filesystem::exists(path)) break;
            ParamList params;
            cascade.blocks[static_cast<std::size_t>(i - 1)].sdb.den.register_params(
                params, "block" + std::to_string(i) + ".den");
            apply_checkpoint(load_checkpoint(path), params);
        }
        completed = i;
    }
    if (completed == 0) {
        throw CheckpointError("no completed stage checkpoints under " + ckpt_dir.string());
    }
    if (completed_blocks) *completed_blocks = completed;
    if (completed < config.model.blocks) {
        throw CheckpointError("run " + run_dir.string() + " is incomplete: only " +
                              std::to_string(completed) + " of " + std::to_string(config.model.blocks) +
                              " blocks finished training");
    }
    return cascade;
}

}  // namespace sdabn
