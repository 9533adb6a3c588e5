#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace orfid {

// Little-endian byte serialization, written out explicitly so file formats are
// host-order independent.

class ByteWriter {
public:
    void put_u8(std::uint8_t v) { buf_.push_back(v); }

    void put_u16(std::uint16_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v));
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    }

    void put_u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void put_u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
    void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

    void put_bytes(const char* data, std::size_t n) {
        buf_.insert(buf_.end(), data, data + n);
    }

    const std::vector<std::uint8_t>& bytes() const { return buf_; }

    void write_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + path);
        out.write(reinterpret_cast<const char*>(buf_.data()),
                  static_cast<std::streamsize>(buf_.size()));
        if (!out) throw std::runtime_error("write failed: " + path);
    }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> bytes) : buf_(std::move(bytes)) {}

    static ByteReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw std::runtime_error("cannot open: " + path);
        const std::streamsize size = in.tellg();
        in.seekg(0);
        std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
        if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
        if (!in) throw std::runtime_error("read failed: " + path);
        return ByteReader(std::move(bytes));
    }

    std::uint8_t get_u8() { return buf_[need(1)]; }

    std::uint16_t get_u16() {
        const std::size_t p = need(2);
        return static_cast<std::uint16_t>(buf_[p] | (buf_[p + 1] << 8));
    }

    std::uint32_t get_u32() {
        const std::size_t p = need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[p + i]) << (8 * i);
        return v;
    }

    std::uint64_t get_u64() {
        const std::size_t p = need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[p + i]) << (8 * i);
        return v;
    }

    float get_f32() { return std::bit_cast<float>(get_u32()); }
    double get_f64() { return std::bit_cast<double>(get_u64()); }

    void get_bytes(char* out, std::size_t n) {
        const std::size_t p = need(n);
        std::memcpy(out, buf_.data() + p, n);
    }

    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    std::size_t need(std::size_t n) {
        if (pos_ + n > buf_.size()) throw std::runtime_error("truncated input");
        const std::size_t p = pos_;
        pos_ += n;
        return p;
    }

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

// FNV-1a, used for the run manifests.
inline std::uint64_t fnv1a_64(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string file_hash_hex(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    std::vector<std::uint8_t> bytes(r.remaining());
    if (!bytes.empty()) r.get_bytes(reinterpret_cast<char*>(bytes.data()), bytes.size());
    const std::uint64_t h = fnv1a_64(bytes.data(), bytes.size());
    static const char* hex = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 0; i < 16; ++i) s[15 - i] = hex[(h >> (4 * i)) & 0xf];
    return s;
}

}  // namespace orfid
