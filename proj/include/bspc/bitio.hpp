#ifndef BSPC_BITIO_HPP
#define BSPC_BITIO_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace bspc {

class StreamUnderflow : public std::runtime_error {
public:
    StreamUnderflow() : std::runtime_error("bit source exhausted") {}
};

// Bits are packed most-significant-bit first within each byte.
class BitWriter {
public:
    void put_bit(int bit) {
        if (fill_ == 0) {
            bytes_.push_back(0);
            fill_ = 8;
        }
        --fill_;
        if (bit) bytes_.back() |= static_cast<std::uint8_t>(1u << fill_);
        ++bit_count_;
    }

    // writes the low `nbits` of value, most significant first
    void put_bits(std::uint64_t value, int nbits) {
        for (int i = nbits - 1; i >= 0; --i) put_bit(static_cast<int>((value >> i) & 1u));
    }

    std::int64_t bit_count() const { return bit_count_; }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
    int fill_ = 0;  // unused bits remaining in the last byte
    std::int64_t bit_count_ = 0;
};

class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> data) : data_(data) {}

    int get_bit() {
        const std::size_t byte = static_cast<std::size_t>(pos_ >> 3);
        if (byte >= data_.size()) throw StreamUnderflow();
        const int bit = (data_[byte] >> (7 - (pos_ & 7))) & 1;
        ++pos_;
        return bit;
    }

    std::uint64_t get_bits(int nbits) {
        std::uint64_t v = 0;
        for (int i = 0; i < nbits; ++i) v = (v << 1) | static_cast<std::uint64_t>(get_bit());
        return v;
    }

    std::int64_t bits_read() const { return pos_; }

private:
    std::span<const std::uint8_t> data_;
    std::int64_t pos_ = 0;
};

}  // namespace bspc

#endif  // BSPC_BITIO_HPP
