#ifndef BSPC_TREE_HPP
#define BSPC_TREE_HPP

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "bspc/fitting.hpp"
#include "bspc/geometry.hpp"
#include "bspc/image.hpp"

namespace bspc {

struct BuildParams {
    int partition_limit = 64;
    int min_domain_pixels = 64;
    double error_threshold = 0.0;

    // A region is split-eligible iff it holds at least twice the nominal
    // limit: a 4096-px tile at limit 2000 then splits exactly once (children
    // ~2048 are no longer eligible), which is the observable behaviour behind
    // the reference iteration counts. Splits may not create children below
    // min_domain_pixels.
    int split_threshold() const { return 2 * std::max(partition_limit, min_domain_pixels); }
};

struct BspNode {
    QuantizedLine line;       // meaningful only for internal nodes
    std::int32_t child0 = -1;
    std::int32_t child1 = -1;
    PlaneFit fit;             // this node's own region fit
    std::int32_t pixel_count = 0;
    std::int32_t candidate_count = 0;  // admissible (min-child filtered) candidates
    std::int32_t anchor_x = 0;         // rounded pixel centroid; the coded C
    std::int32_t anchor_y = 0;         // coefficient is the plane value here
    bool splittable = false;           // geometric split predicate, decoder-derivable

    bool is_leaf() const { return child0 < 0; }
};

// Integer point near the region's pixel centroid. Derived from the pixel set
// alone, so encoder and decoder agree on it without side information.
inline std::pair<int, int> region_anchor(const Region& region) {
    std::int64_t sx = 0, sy = 0;
    for (const PixelPoint& p : region.pixels) {
        sx += p.x;
        sy += p.y;
    }
    const double n = static_cast<double>(region.pixels.size());
    if (n == 0) return {0, 0};
    return {static_cast<int>(std::llround(static_cast<double>(sx) / n)),
            static_cast<int>(std::llround(static_cast<double>(sy) / n))};
}

// One tile's partition tree. Nodes are stored in preorder (node, then child 0
// subtree, then child 1 subtree) with node 0 as the root; regions are not
// stored and get re-derived by walking the splits from the tile hull.
struct BspTree {
    int tile_w = 0;
    int tile_h = 0;
    std::vector<BspNode> nodes;

    int node_count() const { return static_cast<int>(nodes.size()); }
    int internal_count() const {
        int c = 0;
        for (const BspNode& n : nodes) c += n.is_leaf() ? 0 : 1;
        return c;
    }
    int leaf_count() const { return node_count() - internal_count(); }
    int depth() const { return depth_of(0); }

private:
    int depth_of(int i) const {
        if (i < 0 || nodes.empty()) return 0;
        const BspNode& n = nodes[i];
        if (n.is_leaf()) return 1;
        return 1 + std::max(depth_of(n.child0), depth_of(n.child1));
    }
};

struct BuildStats {
    std::int64_t iterations = 0;   // regions examined
    std::int64_t lines_drawn = 0;  // internal nodes
    double elapsed_seconds = 0.0;
    int tile_index = 0;
};

// The admissible-split list for a region, empty when the region may not be
// split at all. Tree construction, the encoder and the decoder all route
// through this one function: the bitstream's candidate indices are positions
// in exactly this list.
inline std::vector<QuantizedLine> split_candidates(const Region& region, const AngleGrid& grid,
                                                   const BuildParams& params) {
    if (region.pixel_count() < params.split_threshold()) return {};
    const Pld pld = compute_pld(region, grid);
    return enumerate_candidates(region, pld, grid, params.min_domain_pixels);
}

namespace detail {

struct TreeBuilder {
    const TileView& image;
    const BuildParams& params;
    const AngleGrid& grid;
    BspTree& tree;
    BuildStats& stats;

    int visit(Region region) {
        ++stats.iterations;
        const int idx = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes[idx].pixel_count = region.pixel_count();
        const auto [ax, ay] = region_anchor(region);
        tree.nodes[idx].anchor_x = ax;
        tree.nodes[idx].anchor_y = ay;

        const MomentVector m = accumulate_moments(region.pixels, image);
        const PlaneFit fit = fit_plane(m);
        tree.nodes[idx].fit = fit;

        const std::vector<QuantizedLine> candidates = split_candidates(region, grid, params);
        tree.nodes[idx].candidate_count = static_cast<int>(candidates.size());
        tree.nodes[idx].splittable = !candidates.empty();

        if (candidates.empty() || fit.sse <= params.error_threshold) return idx;

        const auto choice = best_split(region, candidates, image, grid);
        if (!choice) return idx;

        ++stats.lines_drawn;
        tree.nodes[idx].line = choice->line;
        auto [r0, r1] = split_region(region, choice->line, grid);
        region.pixels.clear();
        region.pixels.shrink_to_fit();
        const int c0 = visit(std::move(r0));
        tree.nodes[idx].child0 = c0;
        const int c1 = visit(std::move(r1));
        tree.nodes[idx].child1 = c1;
        return idx;
    }
};

}  // namespace detail

inline std::pair<BspTree, BuildStats> build_tree(const TileView& tile, const BuildParams& params,
                                                 const AngleGrid& grid) {
    if (tile.width() < 1 || tile.height() < 1)
        throw std::invalid_argument("build_tree: empty tile");
    BspTree tree;
    tree.tile_w = tile.width();
    tree.tile_h = tile.height();
    BuildStats stats;
    const auto t0 = std::chrono::steady_clock::now();
    detail::TreeBuilder builder{tile, params, grid, tree, stats};
    builder.visit(make_tile_region(tile.width(), tile.height()));
    stats.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(tree), stats};
}

inline int candidate_index_bits(int candidate_count) {
    return candidate_count <= 1 ? 0 : std::bit_width(static_cast<unsigned>(candidate_count - 1));
}

// Bit estimates used by the pruner. leaf_coeff_bits approximates the Huffman
// cost of one quantized (a, b, c) payload; the lambda sweep absorbs the error.
struct BitCostModel {
    double leaf_coeff_bits = 24.0;

    virtual ~BitCostModel() = default;
    virtual double leaf_bits(const BspNode& node) const {
        return (node.splittable ? 1.0 : 0.0) + leaf_coeff_bits;
    }
    virtual double internal_bits(const BspNode& node) const {
        return 1.0 + candidate_index_bits(node.candidate_count);
    }
};

inline constexpr double kPruneAll = std::numeric_limits<double>::infinity();

namespace detail {

struct PruneState {
    const BspTree& in;
    const BitCostModel& model;
    double lambda;
    std::vector<char> collapse;  // per input node: subtree becomes a leaf

    // returns (distortion, bits) of the optimally pruned subtree
    std::pair<double, double> decide(int i) {
        const BspNode& node = in.nodes[i];
        const double leaf_d = node.fit.sse;
        const double leaf_r = model.leaf_bits(node);
        if (node.is_leaf()) return {leaf_d, leaf_r};

        const auto [d0, r0] = decide(node.child0);
        const auto [d1, r1] = decide(node.child1);
        const double split_d = d0 + d1;
        const double split_r = model.internal_bits(node) + r0 + r1;

        // collapse only on strict improvement; at lambda == 0 a split is never
        // undone (children sse can only tie the parent's, not beat it)
        const bool keep_split = !(leaf_d + lambda * leaf_r < split_d + lambda * split_r);
        if (lambda == kPruneAll) {
            collapse[i] = 1;
            return {leaf_d, leaf_r};
        }
        collapse[i] = keep_split ? 0 : 1;
        if (collapse[i]) return {leaf_d, leaf_r};
        return {split_d, split_r};
    }

    int emit(int i, BspTree& out) {
        const BspNode& node = in.nodes[i];
        const int idx = static_cast<int>(out.nodes.size());
        out.nodes.push_back(node);
        if (node.is_leaf() || collapse[i]) {
            out.nodes[idx].child0 = out.nodes[idx].child1 = -1;
            return idx;
        }
        const int c0 = emit(node.child0, out);
        out.nodes[idx].child0 = c0;
        const int c1 = emit(node.child1, out);
        out.nodes[idx].child1 = c1;
        return idx;
    }
};

}  // namespace detail

inline BspTree prune_tree(const BspTree& tree, double lambda, const BitCostModel& model) {
    if (lambda < 0.0) throw std::invalid_argument("prune_tree: lambda must be nonnegative");
    if (lambda == 0.0 || tree.nodes.empty()) return tree;  // no rate pressure, no collapse
    detail::PruneState st{tree, model, lambda, std::vector<char>(tree.nodes.size(), 0)};
    st.decide(0);
    BspTree out;
    out.tile_w = tree.tile_w;
    out.tile_h = tree.tile_h;
    out.nodes.reserve(tree.nodes.size());
    st.emit(0, out);
    return out;
}

inline std::uint8_t quantize_intensity(double v) {
    const double r = std::floor(v + 0.5);  // round half up
    if (r <= 0.0) return 0;
    if (r >= 255.0) return 255;
    return static_cast<std::uint8_t>(r);
}

namespace detail {

inline void render_walk(const BspTree& tree, int idx, Region region, const AngleGrid& grid,
                        GrayImage& out) {
    const BspNode& node = tree.nodes[idx];
    if (node.is_leaf()) {
        for (const PixelPoint& p : region.pixels)
            out.at(p.x, p.y) = quantize_intensity(node.fit.eval(p.x, p.y));
        return;
    }
    auto [r0, r1] = split_region(region, node.line, grid);
    region.pixels.clear();
    region.pixels.shrink_to_fit();
    render_walk(tree, node.child0, std::move(r0), grid, out);
    render_walk(tree, node.child1, std::move(r1), grid, out);
}

}  // namespace detail

inline GrayImage render(const BspTree& tree) {
    GrayImage out(tree.tile_w, tree.tile_h);
    if (tree.nodes.empty()) return out;
    const AngleGrid grid = make_angle_grid(tree.tile_w, tree.tile_h);
    detail::render_walk(tree, 0, make_tile_region(tree.tile_w, tree.tile_h), grid, out);
    return out;
}

}  // namespace bspc

#endif  // BSPC_TREE_HPP
