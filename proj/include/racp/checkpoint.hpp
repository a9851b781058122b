#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "racp/config.hpp"
#include "racp/model.hpp"
#include "racp/params.hpp"

namespace racp {

/**
 * Checkpoint layout (all integers little-endian):
 *
 *   "RACPCKPT"            8 bytes
 *   version               u32
 *   config length, text  u64 + bytes (ModelConfig as key = value lines)
 *   parameter count       u32
 *   per parameter         u32 name length, name, u32 rank, u64 dims[rank],
 *                         f64 values (IEEE-754 binary64, little-endian)
 *   checksum              u64 FNV-1a over every preceding byte
 */
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'R', 'A', 'C', 'P', 'C', 'K', 'P', 'T'};

namespace detail {

class ByteWriter {
public:
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    std::string& bytes() { return buf_; }

private:
    template <class T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw FormatError("checkpoint truncated");
    }
    template <class T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const ModelConfig& config, const ParamStore& params) {
    detail::ByteWriter w;
    w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);
    const std::string cfg = config.to_kv().serialize();
    w.u64(cfg.size());
    w.raw(cfg.data(), cfg.size());
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& [path, var] : params) {
        w.str(path);
        const auto& shape = var.shape();
        w.u32(static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) w.u64(d);
        for (double v : var.value().values()) w.f64(v);
    }
    const std::uint64_t sum = fnv1a64(w.bytes());
    w.u64(sum);
    return std::move(w.bytes());
}

struct Checkpoint {
    ModelConfig config;
    ParamStore params;
};

/**
 * Parses and validates a checkpoint: magic, version, checksum, and that
 * parameter paths and shapes equal those the embedded config produces.
 */
inline Checkpoint decode_checkpoint(std::string_view data) {
    if (data.size() < sizeof kCheckpointMagic + 12) throw FormatError("checkpoint truncated");
    if (std::memcmp(data.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
        throw FormatError("not a checkpoint file (bad magic)");
    {
        detail::ByteReader tail(data.substr(data.size() - 8));
        if (tail.u64() != fnv1a64(data.substr(0, data.size() - 8))) throw FormatError("checkpoint checksum mismatch");
    }
    detail::ByteReader r(data.substr(0, data.size() - 8));
    char magic[8];
    r.raw(magic, 8);
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto cfg_len = r.u64();
    Checkpoint ck;
    ck.config = ModelConfig::from_kv(KeyValues::parse(r.bytes(cfg_len)));

    Rng dummy(0);
    const ParamStore expected = init_params(ck.config, dummy);
    const auto n = r.u32();
    if (n != expected.size())
        throw ConfigError("checkpoint has " + std::to_string(n) + " parameters, config expects " +
                          std::to_string(expected.size()));
    auto exp_it = expected.begin();
    for (std::uint32_t i = 0; i < n; ++i, ++exp_it) {
        const std::string path = r.str();
        const auto rank = r.u32();
        Shape shape(rank);
        for (auto& d : shape) d = r.u64();
        if (path != exp_it->first || shape != exp_it->second.shape())
            throw ConfigError("checkpoint parameter " + path + " " + shape_str(shape) + " does not match config (" +
                              exp_it->first + " " + shape_str(exp_it->second.shape()) + ")");
        Tensor t(shape);
        for (auto& v : t.values()) v = r.f64();
        ck.params.add(path, std::move(t));
    }
    return ck;
}

inline void save_checkpoint(const std::string& path, const ModelConfig& config, const ParamStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write checkpoint " + path);
    const std::string bytes = encode_checkpoint(config, params);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read checkpoint " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace racp
