// Bit-exact tensor container (.tdgc): a fixed little-endian layout with an
// embedded JSON metadata blob. Writes go to a temp file and are renamed into
// place, so readers never observe a half-written container.
//
// Layout: magic "TDGC" | u32 version=1 | u32 tensor count | u32 meta length |
// meta JSON bytes | per tensor: u32 name length | name | u32 rows | u32 cols |
// rows*cols little-endian IEEE-754 doubles.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftlab/mat.hpp"

namespace driftlab {

struct CheckpointMeta {
    std::string run_id;
    int64_t step = 0;
    uint64_t seed = 0;
    int64_t created_at = 0;  // unix seconds; run artifacts leave this 0 so
                             // identical configs produce identical bytes
};

struct Checkpoint {
    std::map<std::string, Mat> tensors;  // ordered by name
    CheckpointMeta meta;
};

namespace detail {

inline void put_u32le(std::string& out, uint32_t v) {
    char b[4];
    b[0] = static_cast<char>(v & 0xFF);
    b[1] = static_cast<char>((v >> 8) & 0xFF);
    b[2] = static_cast<char>((v >> 16) & 0xFF);
    b[3] = static_cast<char>((v >> 24) & 0xFF);
    out.append(b, 4);
}

inline void put_f64le(std::string& out, double d) {
    const uint64_t v = std::bit_cast<uint64_t>(d);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.append(b, 8);
}

class Reader {
public:
    Reader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

    uint32_t u32(const std::string& what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    double f64(const std::string& what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }

    std::string str(size_t len, const std::string& what) {
        need(len, what);
        std::string s = bytes_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    size_t remaining() const { return bytes_.size() - pos_; }

    void need(size_t n, const std::string& what) const {
        if (bytes_.size() - pos_ < n)
            throw std::runtime_error(path_ + ": truncated container while reading " + what);
    }

private:
    const std::string& bytes_;
    std::string path_;
    size_t pos_ = 0;
};

}  // namespace detail

inline void write_container(const std::string& path, const std::map<std::string, Mat>& tensors,
                            const nlohmann::json& meta) {
    for (const auto& [name, mat] : tensors) {
        if (name.empty()) throw std::invalid_argument("write_container: empty tensor name");
        if (name.size() > 255) throw std::invalid_argument("write_container: tensor name over 255 bytes: " + name);
        if (mat.rows <= 0 || mat.cols <= 0)
            throw std::invalid_argument("write_container: tensor " + name + " has non-positive shape");
    }

    std::string out;
    out.append("TDGC", 4);
    detail::put_u32le(out, 1);
    detail::put_u32le(out, static_cast<uint32_t>(tensors.size()));
    const std::string meta_str = meta.dump();
    detail::put_u32le(out, static_cast<uint32_t>(meta_str.size()));
    out.append(meta_str);
    for (const auto& [name, mat] : tensors) {
        detail::put_u32le(out, static_cast<uint32_t>(name.size()));
        out.append(name);
        detail::put_u32le(out, static_cast<uint32_t>(mat.rows));
        detail::put_u32le(out, static_cast<uint32_t>(mat.cols));
        for (double d : mat.data) detail::put_f64le(out, d);
    }

    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("write_container: cannot open " + tmp.string());
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw std::runtime_error("write_container: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
}

// Convenience for callers detecting duplicates before any bytes hit disk.
inline void write_container(const std::string& path, const std::vector<std::pair<std::string, Mat>>& tensors,
                            const nlohmann::json& meta) {
    std::map<std::string, Mat> m;
    for (const auto& [name, mat] : tensors)
        if (!m.emplace(name, mat).second)
            throw std::invalid_argument("write_container: duplicate tensor name: " + name);
    write_container(path, m, meta);
}

inline std::pair<std::map<std::string, Mat>, nlohmann::json> read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_container: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    detail::Reader rd(bytes, path);
    const std::string magic = rd.str(4, "magic");
    if (magic != "TDGC") throw std::runtime_error(path + ": bad magic, not a TDGC container");
    const uint32_t version = rd.u32("version");
    if (version != 1) throw std::runtime_error(path + ": unsupported container version " + std::to_string(version));
    const uint32_t count = rd.u32("tensor count");
    const uint32_t meta_len = rd.u32("meta length");
    rd.need(meta_len, "meta JSON");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(rd.str(meta_len, "meta JSON"));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path + ": invalid meta JSON: " + e.what());
    }

    std::map<std::string, Mat> tensors;
    for (uint32_t t = 0; t < count; ++t) {
        const std::string where = "tensor " + std::to_string(t);
        const uint32_t name_len = rd.u32(where + " name length");
        if (name_len == 0 || name_len > 255)
            throw std::runtime_error(path + ": " + where + " has invalid name length " + std::to_string(name_len));
        const std::string name = rd.str(name_len, where + " name");
        const uint32_t rows = rd.u32(name + " rows");
        const uint32_t cols = rd.u32(name + " cols");
        if (rows == 0 || cols == 0) throw std::runtime_error(path + ": tensor " + name + " has zero dimension");
        const uint64_t n = static_cast<uint64_t>(rows) * cols;
        rd.need(n * 8, "payload of " + name);  // validate before allocating
        Mat mat(static_cast<int>(rows), static_cast<int>(cols));
        for (uint64_t i = 0; i < n; ++i) {
            const double d = rd.f64("payload of " + name);
            if (!std::isfinite(d))
                throw std::runtime_error(path + ": tensor " + name + " has non-finite value at flat index " +
                                         std::to_string(i));
            mat.data[i] = d;
        }
        if (!tensors.emplace(name, std::move(mat)).second)
            throw std::runtime_error(path + ": duplicate tensor name: " + name);
    }
    return {std::move(tensors), std::move(meta)};
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json meta = {{"run_id", ckpt.meta.run_id},
                           {"step", ckpt.meta.step},
                           {"seed", ckpt.meta.seed},
                           {"created_at", ckpt.meta.created_at}};
    write_container(path, ckpt.tensors, meta);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    auto [tensors, meta] = read_container(path);
    Checkpoint c;
    c.tensors = std::move(tensors);
    c.meta.run_id = meta.value("run_id", std::string());
    c.meta.step = meta.value("step", int64_t{0});
    c.meta.seed = meta.value("seed", uint64_t{0});
    c.meta.created_at = meta.value("created_at", int64_t{0});
    return c;
}

}  // namespace driftlab
