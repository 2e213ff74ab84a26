#ifndef BSPC_CODEC_HPP
#define BSPC_CODEC_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bspc/bitio.hpp"
#include "bspc/huffman.hpp"
#include "bspc/image.hpp"
#include "bspc/tree.hpp"

namespace bspc {

inline constexpr std::array<char, 4> kStreamMagic = {'B', 'S', 'P', 'C'};
inline constexpr std::uint16_t kStreamVersion = 1;

class CorruptStreamError : public std::runtime_error {
public:
    explicit CorruptStreamError(const std::string& msg, int tile_index = -1)
        : std::runtime_error(tile_index < 0 ? msg
                                            : msg + " (tile " + std::to_string(tile_index) + ")"),
          tile_index(tile_index) {}
    int tile_index;
};

// Uniform scalar quantizer for the leaf plane coefficients. Value clamps are
// format constants; index ranges follow from the configured steps.
struct CoeffQuantizer {
    double step_a = 0.125;
    double step_b = 0.125;
    double step_c = 1.0;

    static constexpr double kSlopeMin = -32.0, kSlopeMax = 32.0;
    static constexpr double kOffsetMin = -128.0, kOffsetMax = 383.0;

    int a_index_min() const { return static_cast<int>(std::llround(kSlopeMin / step_a)); }
    int a_index_max() const { return static_cast<int>(std::llround(kSlopeMax / step_a)); }
    int b_index_min() const { return static_cast<int>(std::llround(kSlopeMin / step_b)); }
    int b_index_max() const { return static_cast<int>(std::llround(kSlopeMax / step_b)); }
    int c_index_min() const { return static_cast<int>(std::llround(kOffsetMin / step_c)); }
    int c_index_max() const { return static_cast<int>(std::llround(kOffsetMax / step_c)); }

    bool valid() const {
        for (double s : {step_a, step_b, step_c})
            if (!std::isfinite(s) || s < 1e-6 || s > 1e6) return false;
        return true;
    }
};

struct QuantizedCoeffs {
    int ia = 0;
    int ib = 0;
    int ic = 0;
    bool operator==(const QuantizedCoeffs&) const = default;
};

inline QuantizedCoeffs quantize_fit(const PlaneFit& fit, const CoeffQuantizer& q) {
    if (!std::isfinite(fit.a) || !std::isfinite(fit.b) || !std::isfinite(fit.c))
        throw std::invalid_argument("quantize_fit: non-finite coefficient");
    auto idx = [](double v, double step, int lo, int hi) {
        const long long k = std::llround(v / step);
        return static_cast<int>(std::clamp<long long>(k, lo, hi));
    };
    return {idx(fit.a, q.step_a, q.a_index_min(), q.a_index_max()),
            idx(fit.b, q.step_b, q.b_index_min(), q.b_index_max()),
            idx(fit.c, q.step_c, q.c_index_min(), q.c_index_max())};
}

inline PlaneFit dequantize_fit(const QuantizedCoeffs& qc, const CoeffQuantizer& q) {
    PlaneFit fit;
    fit.a = qc.ia * q.step_a;
    fit.b = qc.ib * q.step_b;
    fit.c = qc.ic * q.step_c;
    return fit;
}

// Leaf payloads code (A, B, plane value at the region anchor) rather than the
// tile-origin C: the anchored value stays within +-(|A|+|B|) of the region
// mean, so the offset clamp never bites regardless of slope or position.
inline QuantizedCoeffs quantize_fit_at(const PlaneFit& fit, int ax, int ay,
                                       const CoeffQuantizer& q) {
    return quantize_fit(PlaneFit{fit.a, fit.b, fit.eval(ax, ay), 0.0, false}, q);
}

inline PlaneFit dequantize_fit_at(const QuantizedCoeffs& qc, int ax, int ay,
                                  const CoeffQuantizer& q) {
    PlaneFit fit = dequantize_fit(qc, q);
    fit.c = fit.c - fit.a * ax - fit.b * ay;  // back to tile-origin form
    return fit;
}

// Static per-image entropy models, one canonical code per coefficient class.
struct HuffmanModel {
    CanonicalCode code_a;
    CanonicalCode code_b;
    CanonicalCode code_c;
};

struct StreamHeader {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint16_t tile_size = 0;
    std::uint32_t partition_limit = 0;
    double lambda = 0.0;
    CoeffQuantizer quantizer;
    HuffmanModel model;

    BuildParams build_params() const {
        BuildParams p;
        p.partition_limit = static_cast<int>(partition_limit);
        // min_domain_pixels and error_threshold are format constants (64, 0):
        // the header does not carry them
        return p;
    }
};

namespace detail {

inline void wr_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void wr_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void wr_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void wr_f32le(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    wr_u32le(out, bits);
}

struct ByteCursor {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > data.size()) throw CorruptStreamError("truncated stream header");
    }
    std::uint8_t u8() { need(1); return data[pos++]; }
    std::uint16_t u16() { need(2); std::uint16_t v = detail::rd_u16le(&data[pos]); pos += 2; return v; }
    std::uint32_t u32() { need(4); std::uint32_t v = detail::rd_u32le(&data[pos]); pos += 4; return v; }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | data[pos + i];
        pos += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

inline std::uint64_t lambda_to_fixed(double lambda) {
    if (lambda == kPruneAll) return UINT64_MAX;
    const double scaled = lambda * 4294967296.0;  // Q32.32
    if (scaled >= 18446744073709549568.0) return UINT64_MAX - 1;
    return static_cast<std::uint64_t>(std::llround(scaled));
}

inline double lambda_from_fixed(std::uint64_t fp) {
    if (fp == UINT64_MAX) return kPruneAll;
    return static_cast<double>(fp) / 4294967296.0;
}

// Code-length tables carry no symbol range: the alphabet is derived from the
// quantizer steps on both ends. Two encodings, whichever is smaller: mode 0 is
// zero-run RLE over the whole alphabet, mode 1 lists (symbol, length) pairs.
inline void serialize_table(std::vector<std::uint8_t>& out, const CanonicalCode& code) {
    const std::vector<int>& lengths = code.lengths();
    std::vector<std::uint8_t> rle;
    serialize_code_lengths(lengths, rle);
    std::size_t present = 0;
    for (int l : lengths) present += l > 0 ? 1 : 0;
    const std::size_t sparse_size = 2 + 3 * present;
    if (sparse_size < rle.size() && present < 65536) {
        out.push_back(1);
        wr_u16le(out, static_cast<std::uint16_t>(present));
        for (std::size_t s = 0; s < lengths.size(); ++s) {
            if (lengths[s] == 0) continue;
            wr_u16le(out, static_cast<std::uint16_t>(s));
            out.push_back(static_cast<std::uint8_t>(lengths[s]));
        }
    } else {
        out.push_back(0);
        out.insert(out.end(), rle.begin(), rle.end());
    }
}

inline CanonicalCode parse_table(ByteCursor& cur, std::size_t alphabet_size) {
    try {
        const std::uint8_t mode = cur.u8();
        std::vector<int> lengths;
        if (mode == 0) {
            lengths = parse_code_lengths(cur.data, cur.pos, alphabet_size);
        } else if (mode == 1) {
            const std::uint16_t present = cur.u16();
            lengths.assign(alphabet_size, 0);
            int prev = -1;
            for (int i = 0; i < present; ++i) {
                const std::uint16_t sym = cur.u16();
                const std::uint8_t len = cur.u8();
                if (sym >= alphabet_size || static_cast<int>(sym) <= prev || len == 0 ||
                    len > kMaxCodeLength)
                    throw CorruptStreamError("bad sparse code table entry");
                lengths[sym] = len;
                prev = sym;
            }
        } else {
            throw CorruptStreamError("unknown code table mode");
        }
        return CanonicalCode(std::move(lengths));
    } catch (const HuffmanError& e) {
        throw CorruptStreamError(std::string("bad Huffman table: ") + e.what());
    }
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_header(const StreamHeader& h) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kStreamMagic.begin(), kStreamMagic.end());
    detail::wr_u16le(out, kStreamVersion);
    detail::wr_u32le(out, h.width);
    detail::wr_u32le(out, h.height);
    detail::wr_u16le(out, h.tile_size);
    detail::wr_u32le(out, h.partition_limit);
    detail::wr_u64le(out, detail::lambda_to_fixed(h.lambda));
    detail::wr_f32le(out, static_cast<float>(h.quantizer.step_a));
    detail::wr_f32le(out, static_cast<float>(h.quantizer.step_b));
    detail::wr_f32le(out, static_cast<float>(h.quantizer.step_c));
    detail::serialize_table(out, h.model.code_a);
    detail::serialize_table(out, h.model.code_b);
    detail::serialize_table(out, h.model.code_c);
    return out;
}

// Parses and sanity-checks the header; on return `pos` is the payload offset.
inline StreamHeader parse_header(std::span<const std::uint8_t> data, std::size_t& pos) {
    detail::ByteCursor cur{data, 0};
    cur.need(4);
    if (std::memcmp(data.data(), kStreamMagic.data(), 4) != 0)
        throw CorruptStreamError("bad magic (not a BSPC stream)");
    cur.pos = 4;
    if (cur.u16() != kStreamVersion) throw CorruptStreamError("unsupported stream version");
    StreamHeader h;
    h.width = cur.u32();
    h.height = cur.u32();
    h.tile_size = cur.u16();
    h.partition_limit = cur.u32();
    h.lambda = detail::lambda_from_fixed(cur.u64());
    h.quantizer.step_a = cur.f32();
    h.quantizer.step_b = cur.f32();
    h.quantizer.step_c = cur.f32();

    if (h.width < 1 || h.height < 1 || h.width > 32768 || h.height > 32768 ||
        static_cast<std::uint64_t>(h.width) * h.height > (1u << 26))
        throw CorruptStreamError("implausible image dimensions in header");
    if (h.tile_size < 8) throw CorruptStreamError("tile size below format minimum");
    if (h.partition_limit < 1 || h.partition_limit > (1u << 26))
        throw CorruptStreamError("implausible partition limit in header");
    if (!h.quantizer.valid()) throw CorruptStreamError("implausible quantizer steps in header");

    const CoeffQuantizer& q = h.quantizer;
    h.model.code_a =
        detail::parse_table(cur, static_cast<std::size_t>(q.a_index_max() - q.a_index_min() + 1));
    h.model.code_b =
        detail::parse_table(cur, static_cast<std::size_t>(q.b_index_max() - q.b_index_min() + 1));
    h.model.code_c =
        detail::parse_table(cur, static_cast<std::size_t>(q.c_index_max() - q.c_index_min() + 1));
    pos = cur.pos;
    return h;
}

namespace detail {

// Encoder-side preorder walk. A structure bit is written only when the
// geometric predicate permits a split (the decoder can tell); sse-based stops
// therefore always write an explicit leaf bit.
struct TreeEncoder {
    const BspTree& tree;
    const AngleGrid& grid;
    const BuildParams& params;
    const CoeffQuantizer& quantizer;
    const HuffmanModel* model;  // null during the histogram pass
    BitWriter* writer;
    std::array<std::vector<std::uint64_t>, 3>* histograms;

    void walk(int idx, Region region) {
        const BspNode& node = tree.nodes[idx];
        const std::vector<QuantizedLine> cands = split_candidates(region, grid, params);
        if (!cands.empty()) {
            if (writer) writer->put_bit(node.is_leaf() ? 0 : 1);
        } else if (!node.is_leaf()) {
            throw std::logic_error("encode_tree: internal node in a non-splittable region");
        }
        if (node.is_leaf()) {
            const QuantizedCoeffs qc =
                quantize_fit_at(node.fit, node.anchor_x, node.anchor_y, quantizer);
            if (histograms) {
                ++(*histograms)[0][qc.ia - quantizer.a_index_min()];
                ++(*histograms)[1][qc.ib - quantizer.b_index_min()];
                ++(*histograms)[2][qc.ic - quantizer.c_index_min()];
            }
            if (writer) {
                model->code_a.encode(qc.ia - quantizer.a_index_min(), *writer);
                model->code_b.encode(qc.ib - quantizer.b_index_min(), *writer);
                model->code_c.encode(qc.ic - quantizer.c_index_min(), *writer);
            }
            return;
        }
        const auto it = std::lower_bound(cands.begin(), cands.end(), node.line);
        if (it == cands.end() || !(*it == node.line))
            throw std::logic_error("encode_tree: chosen line is not in the candidate list");
        if (writer) {
            const int width = candidate_index_bits(static_cast<int>(cands.size()));
            writer->put_bits(static_cast<std::uint64_t>(it - cands.begin()), width);
        }
        auto [r0, r1] = split_region(region, node.line, grid);
        region.pixels.clear();
        region.pixels.shrink_to_fit();
        walk(node.child0, std::move(r0));
        walk(node.child1, std::move(r1));
    }
};

}  // namespace detail

// Tallies the leaf coefficient symbols of one tile tree into `histograms`.
inline void collect_leaf_symbols(const BspTree& tree, const AngleGrid& grid,
                                 const BuildParams& params, const CoeffQuantizer& quantizer,
                                 std::array<std::vector<std::uint64_t>, 3>& histograms) {
    detail::TreeEncoder enc{tree, grid, params, quantizer, nullptr, nullptr, &histograms};
    enc.walk(0, make_tile_region(tree.tile_w, tree.tile_h));
}

// Returns the number of payload bits written for this tile.
inline std::int64_t encode_tree(const BspTree& tree, const AngleGrid& grid,
                                const BuildParams& params, const CoeffQuantizer& quantizer,
                                const HuffmanModel& model, BitWriter& writer) {
    const std::int64_t before = writer.bit_count();
    detail::TreeEncoder enc{tree, grid, params, quantizer, &model, &writer, nullptr};
    enc.walk(0, make_tile_region(tree.tile_w, tree.tile_h));
    return writer.bit_count() - before;
}

namespace detail {

struct TreeDecoder {
    const AngleGrid& grid;
    const BuildParams& params;
    const CoeffQuantizer& quantizer;
    const HuffmanModel& model;
    BitReader& reader;
    BspTree& tree;
    int tile_index;
    std::size_t node_cap;

    int walk(Region region) {
        if (tree.nodes.size() >= node_cap)
            throw CorruptStreamError("tree exceeds structural node bound", tile_index);
        const int idx = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes[idx].pixel_count = region.pixel_count();
        const auto [ax, ay] = region_anchor(region);
        tree.nodes[idx].anchor_x = ax;
        tree.nodes[idx].anchor_y = ay;

        const std::vector<QuantizedLine> cands = split_candidates(region, grid, params);
        tree.nodes[idx].candidate_count = static_cast<int>(cands.size());
        tree.nodes[idx].splittable = !cands.empty();

        bool internal = false;
        if (!cands.empty()) internal = reader.get_bit() != 0;

        if (!internal) {
            QuantizedCoeffs qc;
            qc.ia = model.code_a.decode(reader) + quantizer.a_index_min();
            qc.ib = model.code_b.decode(reader) + quantizer.b_index_min();
            qc.ic = model.code_c.decode(reader) + quantizer.c_index_min();
            tree.nodes[idx].fit = dequantize_fit_at(qc, ax, ay, quantizer);
            return idx;
        }

        const int width = candidate_index_bits(static_cast<int>(cands.size()));
        const std::uint64_t li = reader.get_bits(width);
        if (li >= cands.size())
            throw CorruptStreamError("candidate index out of range", tile_index);
        tree.nodes[idx].line = cands[li];
        auto [r0, r1] = split_region(region, cands[li], grid);
        region.pixels.clear();
        region.pixels.shrink_to_fit();
        const int c0 = walk(std::move(r0));
        tree.nodes[idx].child0 = c0;
        const int c1 = walk(std::move(r1));
        tree.nodes[idx].child1 = c1;
        return idx;
    }
};

}  // namespace detail

// Rebuilds one tile tree by mirroring the encoder: the split predicate and
// candidate list are re-derived from geometry alone, so the only data read
// from the stream are structure bits, candidate indices and leaf payloads.
inline BspTree decode_tree(BitReader& reader, int tile_w, int tile_h, const AngleGrid& grid,
                           const BuildParams& params, const CoeffQuantizer& quantizer,
                           const HuffmanModel& model, int tile_index = -1) {
    BspTree tree;
    tree.tile_w = tile_w;
    tree.tile_h = tile_h;
    const std::size_t cap = 2ull * tile_w * tile_h + 1;
    detail::TreeDecoder dec{grid, params, quantizer, model, reader, tree, tile_index, cap};
    try {
        dec.walk(make_tile_region(tile_w, tile_h));
    } catch (const StreamUnderflow&) {
        throw CorruptStreamError("stream ended mid-tree", tile_index);
    } catch (const HuffmanError& e) {
        throw CorruptStreamError(std::string("bad leaf payload: ") + e.what(), tile_index);
    }
    return tree;
}

struct TileLayout {
    int tile_size = 0;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<TileRect> tiles;  // row-major

    int count() const { return static_cast<int>(tiles.size()); }
};

inline TileLayout make_tile_layout(int width, int height, int tile_size) {
    if (tile_size < 8) throw std::invalid_argument("tile size must be at least 8");
    TileLayout layout;
    layout.tile_size = tile_size;
    layout.tiles_x = (width + tile_size - 1) / tile_size;
    layout.tiles_y = (height + tile_size - 1) / tile_size;
    for (int ty = 0; ty < layout.tiles_y; ++ty) {
        for (int tx = 0; tx < layout.tiles_x; ++tx) {
            const int x0 = tx * tile_size;
            const int y0 = ty * tile_size;
            layout.tiles.push_back({x0, y0, std::min(tile_size, width - x0),
                                    std::min(tile_size, height - y0)});
        }
    }
    return layout;
}

struct EncodeConfig {
    int tile_size = 64;
    int partition_limit = 64;
    double lambda = 0.0;        // used directly when target_ratio == 0
    double target_ratio = 0.0;  // > 1 enables the lambda bisection
    CoeffQuantizer quantizer;
    int threads = 1;
};

struct EncodeResult {
    std::vector<std::uint8_t> bytes;
    double lambda = 0.0;
    double achieved_ratio = 0.0;
    bool target_reached = true;
    std::int64_t payload_bits = 0;
    std::vector<std::int64_t> tile_bits;
    std::vector<BuildStats> tile_stats;
    std::vector<BspTree> forest;  // pruned, with dequantized coefficients
};

// Replace every leaf fit by its quantize->dequantize image: this is the model
// the decoder reconstructs bit-for-bit.
inline BspTree quantize_leaves(BspTree tree, const CoeffQuantizer& q) {
    for (BspNode& node : tree.nodes) {
        if (!node.is_leaf()) continue;
        const PlaneFit original = node.fit;
        node.fit =
            dequantize_fit_at(quantize_fit_at(original, node.anchor_x, node.anchor_y, q),
                              node.anchor_x, node.anchor_y, q);
        node.fit.sse = original.sse;
        node.fit.degenerate = original.degenerate;
    }
    return tree;
}

namespace detail {

struct SerializedForest {
    std::vector<std::uint8_t> bytes;
    std::int64_t payload_bits = 0;
    std::vector<std::int64_t> tile_bits;
    std::vector<BspTree> forest;
};

inline SerializedForest serialize_forest(const std::vector<BspTree>& full_trees,
                                         const std::vector<AngleGrid>& grids,
                                         const StreamHeader& base_header, double lambda,
                                         const BitCostModel& cost_model) {
    const BuildParams params = base_header.build_params();
    const CoeffQuantizer& q = base_header.quantizer;

    SerializedForest out;
    out.forest.reserve(full_trees.size());
    for (const BspTree& t : full_trees)
        out.forest.push_back(quantize_leaves(prune_tree(t, lambda, cost_model), q));

    std::array<std::vector<std::uint64_t>, 3> histograms = {
        std::vector<std::uint64_t>(q.a_index_max() - q.a_index_min() + 1, 0),
        std::vector<std::uint64_t>(q.b_index_max() - q.b_index_min() + 1, 0),
        std::vector<std::uint64_t>(q.c_index_max() - q.c_index_min() + 1, 0)};
    for (std::size_t i = 0; i < out.forest.size(); ++i)
        collect_leaf_symbols(out.forest[i], grids[i], params, q, histograms);

    StreamHeader header = base_header;
    header.lambda = lambda;
    header.model.code_a = CanonicalCode(huffman_code_lengths(histograms[0]));
    header.model.code_b = CanonicalCode(huffman_code_lengths(histograms[1]));
    header.model.code_c = CanonicalCode(huffman_code_lengths(histograms[2]));

    out.bytes = serialize_header(header);
    BitWriter writer;
    out.tile_bits.reserve(out.forest.size());
    for (std::size_t i = 0; i < out.forest.size(); ++i)
        out.tile_bits.push_back(
            encode_tree(out.forest[i], grids[i], params, q, header.model, writer));
    out.payload_bits = writer.bit_count();
    const std::vector<std::uint8_t> payload = writer.take();
    out.bytes.insert(out.bytes.end(), payload.begin(), payload.end());
    return out;
}

}  // namespace detail

inline EncodeResult encode_image(const GrayImage& image, const EncodeConfig& config) {
    if (image.width < 1 || image.height < 1) throw std::invalid_argument("encode_image: empty image");
    if (!config.quantizer.valid()) throw std::invalid_argument("encode_image: bad quantizer steps");
    if (config.partition_limit < 1) throw std::invalid_argument("encode_image: bad partition limit");

    const TileLayout layout = make_tile_layout(image.width, image.height, config.tile_size);

    StreamHeader base;
    base.width = static_cast<std::uint32_t>(image.width);
    base.height = static_cast<std::uint32_t>(image.height);
    base.tile_size = static_cast<std::uint16_t>(config.tile_size);
    base.partition_limit = static_cast<std::uint32_t>(config.partition_limit);
    base.quantizer = config.quantizer;
    // steps travel as f32; snap them up front so encoder and decoder quantize
    // with bit-identical values
    base.quantizer.step_a = static_cast<float>(base.quantizer.step_a);
    base.quantizer.step_b = static_cast<float>(base.quantizer.step_b);
    base.quantizer.step_c = static_cast<float>(base.quantizer.step_c);
    const BuildParams params = base.build_params();

    std::vector<AngleGrid> grids(layout.count());
    std::vector<BspTree> trees(layout.count());
    std::vector<BuildStats> stats(layout.count());

    const int threads = std::max(1, config.threads);
    auto build_range = [&](int begin, int step) {
        for (int i = begin; i < layout.count(); i += step) {
            const TileRect r = layout.tiles[i];
            grids[i] = make_angle_grid(r.w, r.h);
            auto [tree, st] = build_tree(TileView(image, r), params, grids[i]);
            st.tile_index = i;
            trees[i] = std::move(tree);
            stats[i] = st;
        }
    };
    if (threads == 1 || layout.count() == 1) {
        build_range(0, 1);
    } else {
        std::vector<std::thread> pool;
        const int n = std::min(threads, layout.count());
        pool.reserve(n);
        for (int t = 0; t < n; ++t) pool.emplace_back(build_range, t, n);
        for (std::thread& t : pool) t.join();
    }

    const BitCostModel cost_model;
    const double raw_bytes = static_cast<double>(image.width) * image.height;

    double lambda = config.lambda;
    bool reached = true;
    detail::SerializedForest chosen;
    if (config.target_ratio > 1.0) {
        const double target_bytes = raw_bytes / config.target_ratio;
        auto size_at = [&](double l) {
            return detail::serialize_forest(trees, grids, base, l, cost_model);
        };
        detail::SerializedForest cur = size_at(0.0);
        lambda = 0.0;
        if (static_cast<double>(cur.bytes.size()) > target_bytes) {
            double lo = 0.0, hi = 1.0;
            detail::SerializedForest at_hi = size_at(hi);
            while (static_cast<double>(at_hi.bytes.size()) > target_bytes && hi < 1e15) {
                lo = hi;
                hi *= 8.0;
                at_hi = size_at(hi);
            }
            if (static_cast<double>(at_hi.bytes.size()) > target_bytes) {
                // even maximal pruning cannot reach the target
                hi = kPruneAll;
                at_hi = size_at(hi);
                reached = static_cast<double>(at_hi.bytes.size()) <= target_bytes;
                cur = std::move(at_hi);
                lambda = hi;
            } else {
                cur = std::move(at_hi);
                lambda = hi;
                for (int step = 0; step < 30; ++step) {
                    if (std::fabs(static_cast<double>(cur.bytes.size()) - target_bytes) <=
                        0.02 * target_bytes)
                        break;
                    const double mid = 0.5 * (lo + hi);
                    detail::SerializedForest at_mid = size_at(mid);
                    if (static_cast<double>(at_mid.bytes.size()) > target_bytes) {
                        lo = mid;
                    } else {
                        hi = mid;
                        cur = std::move(at_mid);
                        lambda = mid;
                    }
                }
            }
        }
        chosen = std::move(cur);
    } else {
        chosen = detail::serialize_forest(trees, grids, base, lambda, cost_model);
    }

    EncodeResult result;
    result.bytes = std::move(chosen.bytes);
    result.lambda = lambda;
    result.achieved_ratio = raw_bytes / static_cast<double>(result.bytes.size());
    result.target_reached = reached;
    result.payload_bits = chosen.payload_bits;
    result.tile_bits = std::move(chosen.tile_bits);
    result.tile_stats = std::move(stats);
    result.forest = std::move(chosen.forest);
    return result;
}

struct DecodedStream {
    StreamHeader header;
    TileLayout layout;
    std::vector<BspTree> forest;
    std::vector<std::int64_t> tile_bits;
    std::int64_t payload_bits = 0;
};

inline DecodedStream decode_forest(std::span<const std::uint8_t> bytes) {
    DecodedStream out;
    std::size_t payload_offset = 0;
    out.header = parse_header(bytes, payload_offset);
    out.layout = make_tile_layout(static_cast<int>(out.header.width),
                                  static_cast<int>(out.header.height), out.header.tile_size);
    const BuildParams params = out.header.build_params();

    BitReader reader(bytes.subspan(payload_offset));
    out.forest.reserve(out.layout.count());
    for (int i = 0; i < out.layout.count(); ++i) {
        const TileRect r = out.layout.tiles[i];
        const AngleGrid grid = make_angle_grid(r.w, r.h);
        const std::int64_t before = reader.bits_read();
        out.forest.push_back(decode_tree(reader, r.w, r.h, grid, params, out.header.quantizer,
                                         out.header.model, i));
        out.tile_bits.push_back(reader.bits_read() - before);
    }
    out.payload_bits = reader.bits_read();
    return out;
}

inline GrayImage decode_image(std::span<const std::uint8_t> bytes) {
    const DecodedStream stream = decode_forest(bytes);
    GrayImage out(static_cast<int>(stream.header.width), static_cast<int>(stream.header.height));
    for (int i = 0; i < stream.layout.count(); ++i) {
        const TileRect r = stream.layout.tiles[i];
        const GrayImage tile = render(stream.forest[i]);
        for (int y = 0; y < r.h; ++y)
            for (int x = 0; x < r.w; ++x) out.at(r.x0 + x, r.y0 + y) = tile.at(x, y);
    }
    return out;
}

}  // namespace bspc

#endif  // BSPC_CODEC_HPP
