#pragma once

#include <bit>
#include <cstdint>
#include <type_traits>
#include <vector>

namespace flame::detail {

// Little-endian encoding independent of the host byte order.
class ByteWriter {
public:
    template <class T>
    void put(T value) {
        using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
        const auto bits = std::bit_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            bytes_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFU));
        }
    }
    void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
    const std::vector<char>& bytes() const { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<char>& bytes) : bytes_(bytes) {}

    bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    template <class T>
    T get() {
        using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(U);
        return std::bit_cast<T>(bits);
    }

    const char* take(std::size_t n) {
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

private:
    const std::vector<char>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace flame::detail
