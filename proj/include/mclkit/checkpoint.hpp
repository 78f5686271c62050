#pragma once

// Checkpoint file layout (little-endian):
//
//   "MCLK" | u32 version | u64 body length | records... | u32 CRC-32 of everything before it
//
// A record is u32 name length, name bytes, u32 rank, u32 dims[rank], f32 payload.
// The model description is stored as records named "meta.*"; parameters follow as
// "<net>.<layer>.<param>" with net one of sense, synth, task.

#include <cstdint>
#include <string>
#include <vector>

#include "mclkit/binary_io.hpp"
#include "mclkit/models.hpp"

namespace mclkit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

namespace detail {

inline const char* net_name(std::size_t i) {
    static const char* names[] = {"sense", "synth", "task"};
    return names[i];
}

inline CheckpointRecord meta_record(const std::string& name, const std::vector<std::size_t>& values) {
    CheckpointRecord r{"meta." + name, {values.size()}, {}};
    for (std::size_t v : values) r.data.push_back(static_cast<float>(v));
    return r;
}

inline std::vector<CheckpointRecord> meta_records(const ModelSpec& s) {
    return {
        meta_record("kind", {static_cast<std::size_t>(s.kind)}),
        meta_record("signal", s.signal),
        meta_record("measurement", s.measurement),
        meta_record("classes", {s.classes}),
        meta_record("capacity", {static_cast<std::size_t>(s.capacity)}),
        meta_record("width", {s.width}),
    };
}

template <typename T>
std::vector<CheckpointRecord> parameter_records(const CompressiveNet<T>& m) {
    std::vector<CheckpointRecord> out;
    const auto stacks = m.stacks();
    for (std::size_t s = 0; s < stacks.size(); ++s) {
        const auto names = stacks[s]->param_names();
        const auto ps = stacks[s]->params();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            CheckpointRecord r{std::string(net_name(s)) + "." + names[i], ps[i]->value.shape(), {}};
            r.data.reserve(ps[i]->value.size());
            for (T v : ps[i]->value.values()) r.data.push_back(static_cast<float>(v));
            out.push_back(std::move(r));
        }
    }
    return out;
}

inline const CheckpointRecord& find_record(const std::vector<CheckpointRecord>& records, const std::string& name) {
    for (const auto& r : records)
        if (r.name == name) return r;
    throw ShapeError("checkpoint has no field '" + name + "'");
}

inline std::vector<std::size_t> meta_values(const std::vector<CheckpointRecord>& records, const std::string& name) {
    const auto& r = find_record(records, "meta." + name);
    std::vector<std::size_t> out;
    for (float v : r.data) {
        if (!(v >= 0.0f) || v != static_cast<float>(static_cast<std::size_t>(v)))
            throw FormatError("checkpoint field 'meta." + name + "' holds a non-integer value");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

inline std::size_t meta_scalar(const std::vector<CheckpointRecord>& records, const std::string& name) {
    const auto v = meta_values(records, name);
    if (v.size() != 1) throw FormatError("checkpoint field 'meta." + name + "' must hold one value");
    return v[0];
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointRecord>& records) {
    ByteWriter body;
    for (const auto& r : records) {
        if (shape_size(r.shape) != r.data.size())
            throw ShapeError("checkpoint record '" + r.name + "' payload does not match its shape");
        body.u32(static_cast<std::uint32_t>(r.name.size()));
        body.text(r.name);
        body.u32(static_cast<std::uint32_t>(r.shape.size()));
        for (std::size_t d : r.shape) body.u32(static_cast<std::uint32_t>(d));
        for (float v : r.data) body.f32(v);
    }
    ByteWriter out;
    out.text("MCLK");
    out.u32(kCheckpointVersion);
    out.u64(body.buffer().size());
    out.bytes(body.buffer());
    out.u32(crc32(out.buffer()));
    return std::move(out.buffer());
}

/// Validates and decodes a checkpoint image. Checks run in order: magic, version,
/// length (TruncatedError), CRC (ChecksumError), record structure (FormatError).
inline std::vector<CheckpointRecord> decode_checkpoint(std::span<const std::uint8_t> data) {
    ByteReader header(data, "checkpoint");
    if (data.size() < 4 || header.text(4) != "MCLK") throw BadMagicError("checkpoint: missing MCLK magic");
    const std::uint32_t version = header.u32();
    if (version != kCheckpointVersion)
        throw VersionError("checkpoint: format version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    const std::uint64_t body_len = header.u64();
    const std::size_t head = header.position();
    if (data.size() < head + 4 || body_len > data.size() - head - 4)
        throw TruncatedError("checkpoint: file holds " + std::to_string(data.size()) + " bytes, header announces " +
                             std::to_string(head + body_len + 4));
    const std::size_t crc_at = data.size() - 4;
    ByteReader tail(data.subspan(crc_at), "checkpoint");
    if (crc32(data.first(crc_at)) != tail.u32()) throw ChecksumError("checkpoint: CRC-32 mismatch");
    if (head + body_len != crc_at) throw FormatError("checkpoint: trailing bytes after the record body");

    std::vector<CheckpointRecord> records;
    ByteReader body(data.subspan(head, static_cast<std::size_t>(body_len)), "checkpoint body");
    try {
        while (body.remaining()) {
            CheckpointRecord r;
            r.name = body.text(body.u32());
            const std::uint32_t rank = body.u32();
            if (rank == 0 || rank > 8) throw FormatError("checkpoint: record '" + r.name + "' has invalid rank");
            for (std::uint32_t k = 0; k < rank; ++k) r.shape.push_back(body.u32());
            const std::size_t n = shape_size(r.shape);
            if (n > body.remaining() / 4) throw FormatError("checkpoint: record '" + r.name + "' overruns the body");
            r.data.resize(n);
            for (auto& v : r.data) v = body.f32();
            records.push_back(std::move(r));
        }
    } catch (const TruncatedError& e) {
        throw FormatError(std::string("checkpoint: malformed record body: ") + e.what());
    }
    return records;
}

inline std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
    const auto data = read_file(path);
    return decode_checkpoint(data);
}

inline ModelSpec spec_from_records(const std::vector<CheckpointRecord>& records) {
    ModelSpec s;
    const std::size_t kind = detail::meta_scalar(records, "kind");
    if (kind > 2) throw FormatError("checkpoint: unknown model kind " + std::to_string(kind));
    s.kind = static_cast<ModelKind>(kind);
    s.signal = detail::meta_values(records, "signal");
    s.measurement = detail::meta_values(records, "measurement");
    s.classes = detail::meta_scalar(records, "classes");
    const std::size_t cap = detail::meta_scalar(records, "capacity");
    if (cap > 1) throw FormatError("checkpoint: unknown capacity " + std::to_string(cap));
    s.capacity = static_cast<Capacity>(cap);
    s.width = detail::meta_scalar(records, "width");
    return s;
}

template <typename T>
std::vector<std::uint8_t> encode_model(const CompressiveNet<T>& m) {
    auto records = detail::meta_records(m.spec);
    for (auto& r : detail::parameter_records(m)) records.push_back(std::move(r));
    return encode_checkpoint(records);
}

template <typename T>
void save_checkpoint(const CompressiveNet<T>& m, const std::string& path) {
    write_file(path, encode_model(m));
}

/// Copies the parameters of a decoded checkpoint into `m`. Every mismatch names the field.
template <typename T>
void assign_parameters(CompressiveNet<T>& m, const std::vector<CheckpointRecord>& records) {
    const ModelSpec spec = spec_from_records(records);
    auto check = [](const std::string& field, const auto& got, const auto& want, auto fmt) {
        if (got != want)
            throw ShapeError("checkpoint field 'meta." + field + "' is " + fmt(got) + " but the model expects " +
                             fmt(want));
    };
    auto num = [](std::size_t v) { return std::to_string(v); };
    check("kind", std::string(to_string(spec.kind)), std::string(to_string(m.spec.kind)), [](const std::string& s) { return s; });
    check("signal", spec.signal, m.spec.signal, shape_string);
    check("measurement", spec.measurement, m.spec.measurement, shape_string);
    check("classes", spec.classes, m.spec.classes, num);
    check("capacity", static_cast<std::size_t>(spec.capacity), static_cast<std::size_t>(m.spec.capacity), num);
    check("width", spec.width, m.spec.width, num);

    std::size_t expected = 0;
    const auto stacks = m.stacks();
    for (std::size_t s = 0; s < stacks.size(); ++s) {
        const auto names = stacks[s]->param_names();
        const auto ps = stacks[s]->params();
        for (std::size_t i = 0; i < ps.size(); ++i, ++expected) {
            const std::string field = std::string(detail::net_name(s)) + "." + names[i];
            const auto& r = detail::find_record(records, field);
            if (r.shape != ps[i]->value.shape())
                throw ShapeError("checkpoint field '" + field + "' has shape " + shape_string(r.shape) +
                                 " but the model expects " + shape_string(ps[i]->value.shape()));
            for (std::size_t j = 0; j < r.data.size(); ++j) ps[i]->value[j] = static_cast<T>(r.data[j]);
        }
    }
    std::size_t params_in_file = 0;
    for (const auto& r : records)
        if (r.name.rfind("meta.", 0) != 0) ++params_in_file;
    if (params_in_file != expected)
        throw ShapeError("checkpoint holds " + std::to_string(params_in_file) + " parameter fields, model has " +
                         std::to_string(expected));
}

template <typename T>
void load_parameters(CompressiveNet<T>& m, const std::string& path) {
    assign_parameters(m, read_checkpoint(path));
}

/// Reconstructs a model of whatever kind the checkpoint describes.
template <typename T>
CompressiveNet<T> load_checkpoint(const std::string& path) {
    const auto records = read_checkpoint(path);
    CompressiveNet<T> m = build_from_spec<T>(spec_from_records(records));
    assign_parameters(m, records);
    return m;
}

template <typename T>
MclModel<T> load_mcl(const std::string& path) {
    CompressiveNet<T> net = load_checkpoint<T>(path);
    if (net.spec.kind == ModelKind::prior)
        throw ConfigError("'" + path + "' holds a prior-generating model, expected an MCL model");
    MclModel<T> m;
    static_cast<CompressiveNet<T>&>(m) = std::move(net);
    return m;
}

template <typename T>
PriorModel<T> load_prior(const std::string& path) {
    CompressiveNet<T> net = load_checkpoint<T>(path);
    if (net.spec.kind != ModelKind::prior)
        throw ConfigError("'" + path + "' holds an MCL model, expected a prior-generating model");
    PriorModel<T> m;
    static_cast<CompressiveNet<T>&>(m) = std::move(net);
    return m;
}

}  // namespace mclkit
