#pragma once

// VTF tensor container.
//
//   "VTF1"                      4 magic bytes
//   u32 record count            little-endian
//   per record:
//     u16 name length, UTF-8 name bytes
//     u8 rank (1..5), rank x u32 dims
//     product(dims) float32 values, row-major
//
// All integers and floats are little-endian regardless of host order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vitalcam/error.hpp"
#include "vitalcam/tensor.hpp"

namespace vitalcam {

/// Ordered list of named tensors, as stored in a VTF file.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

namespace vtf_detail {

inline constexpr char kMagic[4] = {'V', 'T', 'F', '1'};

template <typename U>
void put_le(std::string& buf, U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    template <typename U>
    U get(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::string take(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            throw FormatError(std::string("VTF truncated while reading ") + what);
    }

    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace vtf_detail

inline std::string vtf_encode(const NamedTensors& tensors) {
    using namespace vtf_detail;
    std::string buf(kMagic, 4);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff) throw FormatError("VTF tensor name longer than 65535 bytes");
        put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(name.size()));
        buf += name;
        if (t.rank() == 0 || t.rank() > kMaxRank) throw FormatError("VTF rank must be 1..5");
        buf.push_back(static_cast<char>(t.rank()));
        for (auto d : t.shape().dims()) put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
        for (float v : t.data()) put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(v));
    }
    return buf;
}

inline NamedTensors vtf_decode(std::string bytes) {
    using namespace vtf_detail;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("VTF bad magic");
    Reader rd(std::move(bytes));
    rd.take(4, "magic");
    const auto count = rd.get<std::uint32_t>("record count");
    NamedTensors out;
    for (std::uint32_t r = 0; r < count; ++r) {
        const auto len = rd.get<std::uint16_t>("name length");
        std::string name = rd.take(len, "name");
        const auto rank = rd.get<std::uint8_t>("rank");
        if (rank == 0 || rank > kMaxRank)
            throw FormatError("VTF record '" + name + "' has unsupported rank " + std::to_string(rank));
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) {
            d = rd.get<std::uint32_t>("dims");
            if (d == 0) throw FormatError("VTF record '" + name + "' has a zero extent");
        }
        Shape shape(std::move(dims));
        std::vector<float> data(shape.numel());
        for (auto& v : data) v = std::bit_cast<float>(rd.get<std::uint32_t>("payload"));
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!rd.done()) throw FormatError("VTF trailing bytes after last record");
    return out;
}

inline void vtf_write(const std::filesystem::path& path, const NamedTensors& tensors) {
    const std::string buf = vtf_encode(tensors);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

inline NamedTensors vtf_read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return vtf_decode(ss.str());
}

/// Looks up a record by name; throws naming the missing entry.
inline const Tensor& vtf_find(const NamedTensors& tensors, const std::string& name) {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw FormatError("VTF record '" + name + "' not found");
}

}  // namespace vitalcam
