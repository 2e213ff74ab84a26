#ifndef BSPC_HARNESS_HPP
#define BSPC_HARNESS_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "bspc/codec.hpp"
#include "bspc/image.hpp"
#include "bspc/tree.hpp"

namespace bspc {

inline constexpr double kPsnrCap = 99.0;  // reported for identical images

inline double mse(const GrayImage& a, const GrayImage& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("mse: image dimensions differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.pixels.size());
}

inline double psnr(const GrayImage& a, const GrayImage& b) {
    const double m = mse(a, b);
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / m));
}

struct BenchRow {
    int tile_size = 0;
    int partition_limit = 0;
    std::int64_t iterations = 0;
    double seconds = 0.0;
};

// Timing covers tree generation only, on the designated tile (default: the
// first, i.e. top-left, tile).
inline std::vector<BenchRow> bench_sweep(const GrayImage& image, int tile_size,
                                         const std::vector<int>& limits, int tile_index = 0) {
    const TileLayout layout = make_tile_layout(image.width, image.height, tile_size);
    if (tile_index < 0 || tile_index >= layout.count())
        throw std::invalid_argument("bench_sweep: tile index out of range");
    const TileRect rect = layout.tiles[tile_index];
    const AngleGrid grid = make_angle_grid(rect.w, rect.h);
    const TileView tile(image, rect);

    std::vector<BenchRow> rows;
    rows.reserve(limits.size());
    for (int limit : limits) {
        BuildParams params;
        params.partition_limit = limit;
        auto [tree, stats] = build_tree(tile, params, grid);
        rows.push_back({tile_size, limit, stats.iterations, stats.elapsed_seconds});
    }
    return rows;
}

inline void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
    out << "tile_size,partition_limit,iterations,seconds\n";
    char buf[64];
    for (const BenchRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.seconds);
        out << r.tile_size << "," << r.partition_limit << "," << r.iterations << "," << buf << "\n";
    }
}

inline void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open CSV output: " + path);
    write_bench_csv(rows, out);
}

struct RdRow {
    double target_ratio = 0.0;
    double achieved_ratio = 0.0;
    double psnr_db = 0.0;
    bool reached = true;
};

inline std::vector<RdRow> rd_sweep(const GrayImage& image, const std::vector<double>& targets,
                                   EncodeConfig config = {}) {
    std::vector<RdRow> rows;
    rows.reserve(targets.size());
    for (double target : targets) {
        if (!(target > 1.0)) throw std::invalid_argument("rd_sweep: target ratio must exceed 1");
        config.target_ratio = target;
        const EncodeResult enc = encode_image(image, config);
        const GrayImage decoded = decode_image(enc.bytes);
        rows.push_back({target, enc.achieved_ratio, psnr(image, decoded), enc.target_reached});
    }
    return rows;
}

inline void write_rd_csv(const std::vector<RdRow>& rows, std::ostream& out) {
    out << "target_ratio,achieved_ratio,psnr_db\n";
    char buf[96];
    for (const RdRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f", r.target_ratio, r.achieved_ratio,
                      r.psnr_db);
        out << buf << "\n";
    }
}

inline void write_rd_csv(const std::vector<RdRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open CSV output: " + path);
    write_rd_csv(rows, out);
}

}  // namespace bspc

#endif  // BSPC_HARNESS_HPP
