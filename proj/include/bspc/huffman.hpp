#ifndef BSPC_HUFFMAN_HPP
#define BSPC_HUFFMAN_HPP

#include <algorithm>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <vector>

#include "bspc/bitio.hpp"

namespace bspc {

inline constexpr int kMaxCodeLength = 16;

class HuffmanError : public std::runtime_error {
public:
    explicit HuffmanError(const std::string& msg) : std::runtime_error(msg) {}
};

// Code lengths for the given frequency table (0 for absent symbols). Built
// with a deterministic heap (ties broken by creation order) and clamped to
// kMaxCodeLength with the usual Kraft-preserving depth adjustment.
inline std::vector<int> huffman_code_lengths(const std::vector<std::uint64_t>& freqs) {
    const int n = static_cast<int>(freqs.size());
    std::vector<int> lengths(n, 0);

    struct Item {
        std::uint64_t weight;
        int order;
        int index;  // node id in the merge forest
    };
    auto cmp = [](const Item& a, const Item& b) {
        if (a.weight != b.weight) return a.weight > b.weight;
        return a.order > b.order;
    };
    std::priority_queue<Item, std::vector<Item>, decltype(cmp)> heap(cmp);

    std::vector<std::pair<int, int>> children;  // merge nodes
    std::vector<int> leaf_symbol;
    int order = 0;
    for (int s = 0; s < n; ++s) {
        if (freqs[s] == 0) continue;
        const int id = static_cast<int>(leaf_symbol.size());
        leaf_symbol.push_back(s);
        heap.push({freqs[s], order++, id});
    }
    const int active = static_cast<int>(leaf_symbol.size());
    if (active == 0) return lengths;
    if (active == 1) {
        lengths[leaf_symbol[0]] = 1;
        return lengths;
    }

    const int leaf_nodes = active;
    while (heap.size() > 1) {
        const Item a = heap.top(); heap.pop();
        const Item b = heap.top(); heap.pop();
        const int id = leaf_nodes + static_cast<int>(children.size());
        children.push_back({a.index, b.index});
        heap.push({a.weight + b.weight, order++, id});
    }

    // depth-first depth assignment
    std::vector<std::pair<int, int>> stack{{heap.top().index, 0}};
    while (!stack.empty()) {
        auto [id, depth] = stack.back();
        stack.pop_back();
        if (id < leaf_nodes) {
            lengths[leaf_symbol[id]] = std::max(depth, 1);
        } else {
            const auto [l, r] = children[id - leaf_nodes];
            stack.push_back({l, depth + 1});
            stack.push_back({r, depth + 1});
        }
    }

    // clamp over-long codes, then repair the Kraft sum by deepening the
    // shallowest leaves (alphabets here are small, so this rarely triggers)
    int max_len = 0;
    for (int s = 0; s < n; ++s) max_len = std::max(max_len, lengths[s]);
    if (max_len > kMaxCodeLength) {
        std::vector<int> count(kMaxCodeLength + 1, 0);
        for (int s = 0; s < n; ++s)
            if (lengths[s] > 0) ++count[std::min(lengths[s], kMaxCodeLength)];
        std::int64_t kraft = 0;
        for (int l = 1; l <= kMaxCodeLength; ++l)
            kraft += static_cast<std::int64_t>(count[l]) << (kMaxCodeLength - l);
        const std::int64_t full = std::int64_t{1} << kMaxCodeLength;
        for (int l = kMaxCodeLength - 1; l >= 1 && kraft > full; --l) {
            while (count[l] > 0 && kraft > full) {
                --count[l];
                ++count[l + 1];
                kraft -= std::int64_t{1} << (kMaxCodeLength - l - 1);
            }
        }
        if (kraft > full) throw HuffmanError("cannot satisfy code length limit");
        // reassign lengths in frequency order: rarer symbols get longer codes
        std::vector<int> symbols;
        for (int s = 0; s < n; ++s)
            if (freqs[s] > 0) symbols.push_back(s);
        std::sort(symbols.begin(), symbols.end(), [&](int a, int b) {
            if (freqs[a] != freqs[b]) return freqs[a] > freqs[b];
            return a < b;
        });
        std::size_t next = 0;
        for (int l = 1; l <= kMaxCodeLength; ++l)
            for (int c = 0; c < count[l]; ++c) lengths[symbols[next++]] = l;
    }
    return lengths;
}

// Canonical prefix code: reconstructible from lengths alone.
class CanonicalCode {
public:
    CanonicalCode() = default;

    explicit CanonicalCode(std::vector<int> lengths) : lengths_(std::move(lengths)) {
        codes_.assign(lengths_.size(), 0);
        count_by_len_.assign(kMaxCodeLength + 1, 0);
        std::int64_t kraft = 0;
        for (std::size_t s = 0; s < lengths_.size(); ++s) {
            const int l = lengths_[s];
            if (l < 0 || l > kMaxCodeLength) throw HuffmanError("code length out of range");
            if (l > 0) {
                ++count_by_len_[l];
                kraft += std::int64_t{1} << (kMaxCodeLength - l);
            }
        }
        if (kraft > (std::int64_t{1} << kMaxCodeLength))
            throw HuffmanError("over-subscribed code length table");

        first_code_.assign(kMaxCodeLength + 2, 0);
        first_index_.assign(kMaxCodeLength + 2, 0);
        std::uint32_t code = 0;
        int index = 0;
        symbols_by_code_.clear();
        for (int l = 1; l <= kMaxCodeLength; ++l) {
            first_code_[l] = code;
            first_index_[l] = index;
            code += count_by_len_[l];
            index += count_by_len_[l];
            code <<= 1;
        }
        symbols_by_code_.resize(index);
        std::vector<int> next(kMaxCodeLength + 1);
        for (int l = 1; l <= kMaxCodeLength; ++l) next[l] = first_index_[l];
        for (std::size_t s = 0; s < lengths_.size(); ++s) {
            const int l = lengths_[s];
            if (l == 0) continue;
            const int slot = next[l]++;
            symbols_by_code_[slot] = static_cast<int>(s);
            codes_[s] = first_code_[l] + static_cast<std::uint32_t>(slot - first_index_[l]);
        }
    }

    int symbol_count() const { return static_cast<int>(lengths_.size()); }
    const std::vector<int>& lengths() const { return lengths_; }
    int length(int symbol) const { return lengths_[symbol]; }

    void encode(int symbol, BitWriter& out) const {
        const int l = lengths_[symbol];
        if (l == 0) throw HuffmanError("encoding symbol with no code");
        out.put_bits(codes_[symbol], l);
    }

    int decode(BitReader& in) const {
        std::uint32_t code = 0;
        for (int l = 1; l <= kMaxCodeLength; ++l) {
            code = (code << 1) | static_cast<std::uint32_t>(in.get_bit());
            if (count_by_len_[l] == 0) continue;
            const std::uint32_t offset = code - first_code_[l];
            if (code >= first_code_[l] && offset < static_cast<std::uint32_t>(count_by_len_[l]))
                return symbols_by_code_[first_index_[l] + static_cast<int>(offset)];
        }
        throw HuffmanError("invalid Huffman code in stream");
    }

private:
    std::vector<int> lengths_;
    std::vector<std::uint32_t> codes_;
    std::vector<int> count_by_len_;
    std::vector<std::uint32_t> first_code_;
    std::vector<int> first_index_;
    std::vector<int> symbols_by_code_;
};

// Length-table bytes: runs of zeros collapse to {0x00, run}; other lengths
// are literal bytes. Keeps sparse tables from bloating the stream header.
inline void serialize_code_lengths(const std::vector<int>& lengths, std::vector<std::uint8_t>& out) {
    std::size_t i = 0;
    while (i < lengths.size()) {
        if (lengths[i] == 0) {
            std::size_t run = 1;
            while (i + run < lengths.size() && lengths[i + run] == 0 && run < 255) ++run;
            out.push_back(0);
            out.push_back(static_cast<std::uint8_t>(run));
            i += run;
        } else {
            out.push_back(static_cast<std::uint8_t>(lengths[i]));
            ++i;
        }
    }
}

inline std::vector<int> parse_code_lengths(std::span<const std::uint8_t> data, std::size_t& pos,
                                           std::size_t symbol_count) {
    std::vector<int> lengths;
    lengths.reserve(symbol_count);
    while (lengths.size() < symbol_count) {
        if (pos >= data.size()) throw HuffmanError("truncated code length table");
        const std::uint8_t b = data[pos++];
        if (b == 0) {
            if (pos >= data.size()) throw HuffmanError("truncated code length table");
            const std::size_t run = data[pos++];
            if (run == 0 || lengths.size() + run > symbol_count)
                throw HuffmanError("bad zero run in code length table");
            lengths.insert(lengths.end(), run, 0);
        } else {
            if (b > kMaxCodeLength) throw HuffmanError("code length exceeds limit");
            lengths.push_back(b);
        }
    }
    return lengths;
}

}  // namespace bspc

#endif  // BSPC_HUFFMAN_HPP
