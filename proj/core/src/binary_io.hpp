#pragma once

// Little-endian fixed-width encoding shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mtr::detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) { buf_.append(s); }
    void str(std::string_view s) {
        u64(s.size());
        bytes(s);
    }
    const std::string& data() const noexcept { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
        const auto s = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const auto s = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string_view bytes(std::size_t n) { return take(n); }
    std::string str() {
        const auto n = u64();
        return std::string(take(n));
    }
    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    std::string_view take(std::size_t n) {
        if (n > data_.size() - pos_) throw std::runtime_error("truncated binary data");
        const auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace mtr::detail
