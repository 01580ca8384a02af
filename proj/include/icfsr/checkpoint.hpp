#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "icfsr/adam.hpp"
#include "icfsr/config.hpp"
#include "icfsr/error.hpp"
#include "icfsr/model.hpp"

namespace icfsr {

/// Everything needed to use a trained model or to resume its training.
template <class T>
struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    ParameterSet<T> params;
    OptimizerState<T> opt;
    int epoch = 0;  // completed epochs
    std::string rng_state;
    std::uint64_t config_digest = 0;

    bool operator==(const Checkpoint&) const = default;
};

inline constexpr const char* kCheckpointMagic = "ICFSR-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

/*
 * Container layout: a UTF-8 text manifest terminated by the line "end",
 * immediately followed by the blob section.
 *
 *   ICFSR-CHECKPOINT
 *   version=1
 *   dtype=f32|f64
 *   epoch=..., rng_state=..., config_digest=..., optimizer.step=...
 *   model.<field>=...        (ModelConfig)
 *   train.<field>=...        (TrainConfig)
 *   tensors=N
 *   tensor <name> <d0,d1,..> <offset> <nbytes>     (N lines)
 *   blob_bytes=...
 *   blob_fnv1a=<16 hex digits>
 *   end
 *
 * Tensors appear as param/<name>, adam.m/<name>, adam.v/<name> in
 * parameter order; values are little-endian IEEE floats of `dtype`.
 */

namespace detail {

template <class T>
constexpr const char* dtype_name() {
    return std::is_same_v<T, float> ? "f32" : "f64";
}

template <class T>
void append_le(std::string& out, const std::vector<T>& values) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (T v : values) {
        const Bits b = std::bit_cast<Bits>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i)
            out.push_back(static_cast<char>((b >> (8 * i)) & 0xff));
    }
}

template <class T>
void read_le(const char* src, std::vector<T>& values) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (std::size_t k = 0; k < values.size(); ++k) {
        Bits b = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            b |= static_cast<Bits>(static_cast<unsigned char>(src[k * sizeof(T) + i])) << (8 * i);
        values[k] = std::bit_cast<T>(b);
    }
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string shape_csv(const std::vector<int>& shape) { return join_ints(shape); }

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const Checkpoint<T>& ck) {
    std::string blob;
    std::string table;
    std::size_t count = 0;
    auto add = [&](const std::string& name, const ParamTensor<T>& t) {
        const std::size_t offset = blob.size();
        detail::append_le(blob, t.values);
        table += "tensor " + name + " " + detail::shape_csv(t.shape) + " " + std::to_string(offset) +
                 " " + std::to_string(blob.size() - offset) + "\n";
        ++count;
    };
    for (const auto& t : ck.params.tensors()) add("param/" + t.name, t);
    for (const auto& t : ck.opt.m.tensors()) add("adam.m/" + t.name, t);
    for (const auto& t : ck.opt.v.tensors()) add("adam.v/" + t.name, t);

    std::string head;
    head += std::string(kCheckpointMagic) + "\n";
    head += "version=" + std::to_string(kCheckpointVersion) + "\n";
    head += std::string("dtype=") + detail::dtype_name<T>() + "\n";
    head += "epoch=" + std::to_string(ck.epoch) + "\n";
    head += "rng_state=" + ck.rng_state + "\n";
    head += "config_digest=" + detail::hex64(ck.config_digest) + "\n";
    head += "optimizer.step=" + std::to_string(ck.opt.step) + "\n";
    head += render_key_values(to_key_values(ck.model), "model.");
    head += render_key_values(to_key_values(ck.train), "train.");
    head += "tensors=" + std::to_string(count) + "\n";
    head += table;
    head += "blob_bytes=" + std::to_string(blob.size()) + "\n";
    head += "blob_fnv1a=" + detail::hex64(fnv1a64(blob.data(), blob.size())) + "\n";
    head += "end\n";
    return head + blob;
}

template <class T>
void save_checkpoint(const Checkpoint<T>& ck, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(ck);
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write checkpoint: " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("write failed: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace detail {

struct Manifest {
    std::map<std::string, std::string> fields;
    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::size_t offset = 0;
        std::size_t nbytes = 0;
    };
    std::vector<Entry> tensors;
    std::size_t header_bytes = 0;
};

inline Manifest parse_manifest(const std::string& bytes) {
    Manifest m;
    std::size_t pos = 0;
    auto next_line = [&](std::string& line) {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw DataError("corrupt checkpoint: truncated manifest");
        line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
    };
    std::string line;
    next_line(line);
    if (line != kCheckpointMagic) throw DataError("not a checkpoint file (bad magic)");
    while (true) {
        next_line(line);
        if (line == "end") break;
        if (line.rfind("tensor ", 0) == 0) {
            std::istringstream is(line.substr(7));
            Manifest::Entry e;
            std::string shape;
            if (!(is >> e.name >> shape >> e.offset >> e.nbytes))
                throw DataError("corrupt checkpoint: bad tensor line '" + line + "'");
            try {
                e.shape = parse_int_list("shape", shape);
            } catch (const InvalidArgument&) {
                throw DataError("corrupt checkpoint: bad tensor shape '" + shape + "'");
            }
            m.tensors.push_back(std::move(e));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("corrupt checkpoint: bad manifest line '" + line + "'");
        m.fields[line.substr(0, eq)] = line.substr(eq + 1);
    }
    m.header_bytes = pos;
    return m;
}

inline const std::string& field(const Manifest& m, const std::string& key) {
    const auto it = m.fields.find(key);
    if (it == m.fields.end()) throw DataError("corrupt checkpoint: missing field '" + key + "'");
    return it->second;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

/// "f32" or "f64", read from the manifest only.
inline std::string checkpoint_dtype(const std::filesystem::path& path) {
    return detail::field(detail::parse_manifest(detail::read_file(path)), "dtype");
}

template <class T>
Checkpoint<T> deserialize_checkpoint(const std::string& bytes) {
    const detail::Manifest m = detail::parse_manifest(bytes);
    try {
        if (detail::parse_int("version", detail::field(m, "version")) != kCheckpointVersion)
            throw DataError("checkpoint version mismatch: " + detail::field(m, "version"));
        if (detail::field(m, "dtype") != detail::dtype_name<T>())
            throw DataError("checkpoint dtype " + detail::field(m, "dtype") + " does not match " +
                            detail::dtype_name<T>());

        const std::size_t blob_bytes =
            static_cast<std::size_t>(detail::parse_int("blob_bytes", detail::field(m, "blob_bytes")));
        if (bytes.size() < m.header_bytes + blob_bytes)
            throw DataError("corrupt checkpoint: truncated blob section");
        if (bytes.size() > m.header_bytes + blob_bytes)
            throw DataError("corrupt checkpoint: trailing bytes after blob section");
        const char* blob = bytes.data() + m.header_bytes;
        if (detail::hex64(fnv1a64(blob, blob_bytes)) != detail::field(m, "blob_fnv1a"))
            throw DataError("corrupt checkpoint: blob checksum mismatch");

        Checkpoint<T> ck;
        for (const auto& [k, v] : m.fields) {
            if (k.rfind("model.", 0) == 0 && !apply_key_value(ck.model, k.substr(6), v))
                throw DataError("corrupt checkpoint: unknown field '" + k + "'");
            if (k.rfind("train.", 0) == 0 && !apply_key_value(ck.train, k.substr(6), v))
                throw DataError("corrupt checkpoint: unknown field '" + k + "'");
        }
        ck.model.validate();
        ck.epoch = static_cast<int>(detail::parse_int("epoch", detail::field(m, "epoch")));
        ck.rng_state = detail::field(m, "rng_state");
        ck.config_digest = std::stoull(detail::field(m, "config_digest"), nullptr, 16);
        ck.params = ParameterSet<T>(ck.model);
        ck.opt = make_optimizer_state(ck.params);
        ck.opt.step = detail::parse_int("optimizer.step", detail::field(m, "optimizer.step"));

        std::vector<ParamTensor<T>*> targets;
        std::vector<std::string> names;
        for (auto& t : ck.params.tensors()) {
            targets.push_back(&t);
            names.push_back("param/" + t.name);
        }
        for (auto& t : ck.opt.m.tensors()) {
            targets.push_back(&t);
            names.push_back("adam.m/" + t.name);
        }
        for (auto& t : ck.opt.v.tensors()) {
            targets.push_back(&t);
            names.push_back("adam.v/" + t.name);
        }
        if (detail::parse_int("tensors", detail::field(m, "tensors")) !=
                static_cast<long long>(m.tensors.size()) ||
            m.tensors.size() != targets.size())
            throw DataError("checkpoint tensor count does not match its model config");
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const auto& e = m.tensors[i];
            if (e.name != names[i])
                throw DataError("checkpoint tensor " + std::to_string(i) + " is '" + e.name +
                                "', expected '" + names[i] + "'");
            if (e.shape != targets[i]->shape)
                throw DataError("checkpoint tensor '" + e.name + "' has shape " +
                                detail::shape_csv(e.shape) + ", model expects " +
                                detail::shape_csv(targets[i]->shape));
            if (e.nbytes != targets[i]->values.size() * sizeof(T))
                throw DataError("checkpoint tensor '" + e.name + "': manifest shape does not match blob length");
            if (e.offset > blob_bytes || e.nbytes > blob_bytes - e.offset)
                throw DataError("checkpoint tensor '" + e.name + "' extends past the blob section");
            detail::read_le(blob + e.offset, targets[i]->values);
        }
        return ck;
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("corrupt checkpoint: ") + e.what());
    } catch (const std::logic_error& e) {
        throw DataError(std::string("corrupt checkpoint: ") + e.what());
    }
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint<T>(detail::read_file(path));
}

}  // namespace icfsr
