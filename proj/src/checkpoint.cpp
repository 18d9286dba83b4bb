#include "sdabn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "sdabn/errors.hpp"

namespace sdabn {

namespace {

constexpr char kMagic[4] = {'S', 'D', 'B', 'N'};

// All fields are written little-endian; this codebase targets little-endian
// hosts and asserts so at startup of the writer.
void ensure_little_endian() {
    const std::uint16_t probe = 1;
    if (*reinterpret_cast<const std::uint8_t*>(&probe) != 1) {
        throw IoError("checkpoint format requires a little-endian host");
    }
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError(path.string() + ": truncated checkpoint");
    return v;
}

void write_string(std::ofstream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::filesystem::path& path) {
    const auto n = read_pod<std::uint32_t>(in, path);
    if (n > (1u << 20)) throw IoError(path.string() + ": unreasonable string length in checkpoint");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw IoError(path.string() + ": truncated checkpoint");
    return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    ensure_little_endian();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    write_pod<std::uint16_t>(out, Checkpoint::kVersion);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(ckpt.stage_kind));
    write_pod<std::uint32_t>(out, ckpt.block_index);
    write_pod<std::uint64_t>(out, ckpt.config_digest);
    write_pod<std::uint64_t>(out, ckpt.rng_seed);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metric_snapshot.size()));
    for (const auto& [name, value] : ckpt.metric_snapshot) {
        write_string(out, name);
        write_pod<double>(out, value);
    }
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        write_string(out, name);
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.shape().size()));
        for (std::int64_t d : tensor.shape()) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.numel() * static_cast<std::int64_t>(sizeof(double))));
    }
    if (!out) throw IoError("failed while writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw CheckpointError(path.string() + ": bad checkpoint magic");
    }
    const auto version = read_pod<std::uint16_t>(in, path);
    if (version != Checkpoint::kVersion) {
        throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.stage_kind = static_cast<char>(read_pod<std::uint8_t>(in, path));
    ckpt.block_index = read_pod<std::uint32_t>(in, path);
    ckpt.config_digest = read_pod<std::uint64_t>(in, path);
    ckpt.rng_seed = read_pod<std::uint64_t>(in, path);
    const auto metric_count = read_pod<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < metric_count; ++i) {
        std::string name = read_string(in, path);
        const double value = read_pod<double>(in, path);
        ckpt.metric_snapshot.emplace_back(std::move(name), value);
    }
    const auto tensor_count = read_pod<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        std::string name = read_string(in, path);
        const auto ndim = read_pod<std::uint32_t>(in, path);
        if (ndim > 8) throw CheckpointError(path.string() + ": unreasonable tensor rank");
        Shape shape;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            shape.push_back(static_cast<std::int64_t>(read_pod<std::uint32_t>(in, path)));
        }
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(double))));
        if (!in) throw IoError(path.string() + ": truncated tensor payload");
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, ParamList& params) {
    std::map<std::string, const Tensor*> stored;
    for (const auto& [name, t] : ckpt.tensors) stored[name] = &t;

    std::string missing, mismatched, unexpected;
    for (auto& [name, t] : params) {
        auto it = stored.find(name);
        if (it == stored.end()) {
            missing += "\n  missing from checkpoint: " + name + " " + shape_str(t.shape());
            continue;
        }
        if (it->second->shape() != t.shape()) {
            mismatched += "\n  shape mismatch: " + name + " expects " + shape_str(t.shape()) +
                          ", checkpoint has " + shape_str(it->second->shape());
        }
        stored.erase(it);
    }
    for (const auto& [name, t] : stored) {
        unexpected += "\n  unexpected in checkpoint: " + name + " " + shape_str(t->shape());
    }
    if (!missing.empty() || !mismatched.empty() || !unexpected.empty()) {
        throw CheckpointError("checkpoint does not match the architecture:" + missing + mismatched +
                              unexpected);
    }

    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
    for (auto& [name, t] : params) {
        t.values() = by_name.at(name)->values();
    }
}

Checkpoint make_checkpoint(char stage_kind, std::uint32_t block_index, std::uint64_t config_digest,
                           std::uint64_t rng_seed, const ParamList& params,
                           std::vector<std::pair<std::string, double>> metric_snapshot) {
    Checkpoint ckpt;
    ckpt.stage_kind = stage_kind;
    ckpt.block_index = block_index;
    ckpt.config_digest = config_digest;
    ckpt.rng_seed = rng_seed;
    ckpt.metric_snapshot = std::move(metric_snapshot);
    for (const auto& [name, t] : params) {
        ckpt.tensors.emplace_back(name, t.clone());
    }
    return ckpt;
}

}  // namespace sdabn
