#ifndef BSPC_GEOMETRY_HPP
#define BSPC_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

// Quantized-line geometry shared verbatim by encoder and decoder. Everything
// here is a pure function of region geometry and the integer pixel lattice;
// the decoder re-derives candidate lists from it without side information,
// so any change to these routines is a bitstream format change.

namespace bspc {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct PixelPoint {
    int x = 0;  // column
    int y = 0;  // row
    bool operator==(const PixelPoint&) const = default;
};

// Line orientations theta_i = i * 3pi/(2n), i in [0, n): n is the smallest
// power of two with n^2 >= M*N. The 3pi/2 span duplicates some undirected
// lines; the duplicates cost candidate-index bits but never break sync.
struct AngleGrid {
    int theta_count = 0;
    double theta_step = 0.0;
    std::vector<double> cos_t;
    std::vector<double> sin_t;
    std::vector<double> rho_step_t;

    double theta(int i) const { return theta_step * i; }
};

inline int theta_count(int m, int n) {
    if (m < 1 || n < 1) throw std::invalid_argument("theta_count: dimensions must be positive");
    const std::int64_t area = static_cast<std::int64_t>(m) * n;
    std::int64_t t = 1;
    while (t * t < area) t <<= 1;
    return static_cast<int>(t);
}

inline double rho_step(double theta) {
    return std::max(std::fabs(std::cos(theta)), std::fabs(std::sin(theta)));
}

inline AngleGrid make_angle_grid(int m, int n) {
    AngleGrid g;
    g.theta_count = theta_count(m, n);
    g.theta_step = 3.0 * M_PI / (2.0 * g.theta_count);
    g.cos_t.resize(g.theta_count);
    g.sin_t.resize(g.theta_count);
    g.rho_step_t.resize(g.theta_count);
    for (int i = 0; i < g.theta_count; ++i) {
        const double th = g.theta(i);
        g.cos_t[i] = std::cos(th);
        g.sin_t[i] = std::sin(th);
        g.rho_step_t[i] = std::max(std::fabs(g.cos_t[i]), std::fabs(g.sin_t[i]));
    }
    return g;
}

// A candidate bisecting line x*cos(theta_i) + y*sin(theta_i) = k * drho(theta_i).
struct QuantizedLine {
    int theta_index = 0;
    int rho_index = 0;

    bool operator==(const QuantizedLine&) const = default;
    // canonical candidate order
    bool operator<(const QuantizedLine& o) const {
        if (theta_index != o.theta_index) return theta_index < o.theta_index;
        return rho_index < o.rho_index;
    }
};

inline double line_rho(const QuantizedLine& line, const AngleGrid& grid) {
    return grid.rho_step_t[line.theta_index] * line.rho_index;
}

// x*cos + y*sin - rho; negative -> child 0, zero or positive -> child 1.
inline double line_signed_value(double theta, double rho, Vec2 p) {
    return p.x * std::cos(theta) + p.y * std::sin(theta) - rho;
}

inline double line_signed_value(const QuantizedLine& line, Vec2 p, const AngleGrid& grid) {
    return p.x * grid.cos_t[line.theta_index] + p.y * grid.sin_t[line.theta_index] -
           line_rho(line, grid);
}

// Convex polygonal subdomain plus the integer sample points it owns.
// Coordinates are tile-local, origin at the tile's top-left pixel center.
struct Region {
    std::vector<Vec2> vertices;
    std::vector<PixelPoint> pixels;

    int pixel_count() const { return static_cast<int>(pixels.size()); }
};

inline double polygon_area(const std::vector<Vec2>& v) {
    double a = 0.0;
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = v[i];
        const Vec2& q = v[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * a;
}

// Root region of a w x h tile: the pixel-cell hull. Corners sit half a cell
// beyond the border pixel centers so boundary cuts through the outermost
// pixels stay inside the polygon interior.
inline Region make_tile_region(int w, int h) {
    if (w < 1 || h < 1) throw std::invalid_argument("make_tile_region: empty tile");
    Region r;
    r.vertices = {{-0.5, -0.5}, {w - 0.5, -0.5}, {w - 0.5, h - 0.5}, {-0.5, h - 0.5}};
    r.pixels.reserve(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) r.pixels.push_back({x, y});
    return r;
}

// Per-theta band of rho values whose lines cross the polygon interior, with
// the admissible grid multiples k: rho_min < k*drho < rho_max (strict).
struct PldBand {
    double rho_min = 0.0;
    double rho_max = 0.0;
    int k_lo = 0;
    int k_hi = -1;  // empty when k_lo > k_hi

    bool empty() const { return k_lo > k_hi; }
    int count() const { return empty() ? 0 : k_hi - k_lo + 1; }
};

struct Pld {
    std::vector<PldBand> bands;  // one per theta index
};

inline Pld compute_pld(const Region& region, const AngleGrid& grid) {
    if (region.vertices.size() < 3 || std::fabs(polygon_area(region.vertices)) < 1e-12)
        throw std::invalid_argument("compute_pld: degenerate polygon, PLD is empty");
    Pld pld;
    pld.bands.resize(grid.theta_count);
    for (int i = 0; i < grid.theta_count; ++i) {
        const double c = grid.cos_t[i];
        const double s = grid.sin_t[i];
        double lo = region.vertices[0].x * c + region.vertices[0].y * s;
        double hi = lo;
        for (std::size_t v = 1; v < region.vertices.size(); ++v) {
            const double p = region.vertices[v].x * c + region.vertices[v].y * s;
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
        PldBand& band = pld.bands[i];
        band.rho_min = lo;
        band.rho_max = hi;
        const double dr = grid.rho_step_t[i];
        // strict interior multiples; the only correctness that matters is that
        // the comparisons below are the ones actually used, identically, on
        // both codec ends
        int k_lo = static_cast<int>(std::ceil(lo / dr));
        while (k_lo * dr <= lo) ++k_lo;
        while ((k_lo - 1) * dr > lo) --k_lo;
        int k_hi = static_cast<int>(std::floor(hi / dr));
        while (k_hi * dr >= hi) --k_hi;
        while ((k_hi + 1) * dr < hi) ++k_hi;
        band.k_lo = k_lo;
        band.k_hi = k_hi;
    }
    return pld;
}

// All grid lines inside the PLD whose split leaves both pixel children with
// at least min_child_pixels samples, in canonical (theta_index, rho_index)
// order. Depends only on geometry and the pixel lattice, never on image
// intensities, so the decoder reproduces it exactly.
inline std::vector<QuantizedLine> enumerate_candidates(const Region& region, const Pld& pld,
                                                       const AngleGrid& grid,
                                                       int min_child_pixels = 1) {
    std::vector<QuantizedLine> out;
    const int p = region.pixel_count();
    if (p < 2 * min_child_pixels) return out;

    std::vector<double> proj(region.pixels.size());
    for (int i = 0; i < grid.theta_count; ++i) {
        const PldBand& band = pld.bands[i];
        if (band.empty()) continue;
        const double c = grid.cos_t[i];
        const double s = grid.sin_t[i];
        const double dr = grid.rho_step_t[i];
        for (std::size_t j = 0; j < region.pixels.size(); ++j)
            proj[j] = region.pixels[j].x * c + region.pixels[j].y * s;
        // child0 = {proj < rho}, child1 = {proj >= rho}; both have at least
        // mc pixels iff proj_(mc-1) < rho <= proj_(p-mc) (order statistics)
        const int mc = min_child_pixels;
        std::nth_element(proj.begin(), proj.begin() + (mc - 1), proj.end());
        const double lo_stat = proj[mc - 1];
        std::nth_element(proj.begin(), proj.begin() + (p - mc), proj.end());
        const double hi_stat = proj[p - mc];
        for (int k = band.k_lo; k <= band.k_hi; ++k) {
            const double rho = k * dr;
            if (lo_stat < rho && rho <= hi_stat) out.push_back({i, k});
        }
    }
    return out;
}

namespace detail {

inline std::vector<Vec2> clip_polygon(const std::vector<Vec2>& poly, double c, double s,
                                      double rho, bool keep_negative) {
    std::vector<Vec2> out;
    out.reserve(poly.size() + 1);
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        const double sp = p.x * c + p.y * s - rho;
        const double sq = q.x * c + q.y * s - rho;
        const bool p_in = keep_negative ? (sp <= 0.0) : (sp >= 0.0);
        const bool q_in = keep_negative ? (sq <= 0.0) : (sq >= 0.0);
        if (p_in) out.push_back(p);
        if (p_in != q_in) {
            const double t = sp / (sp - sq);
            out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
        }
    }
    // drop exact consecutive duplicates (clip can emit the crossing point twice)
    std::vector<Vec2> dedup;
    dedup.reserve(out.size());
    for (const Vec2& v : out) {
        if (dedup.empty() || v.x != dedup.back().x || v.y != dedup.back().y) dedup.push_back(v);
    }
    while (dedup.size() > 1 && dedup.front().x == dedup.back().x &&
           dedup.front().y == dedup.back().y)
        dedup.pop_back();
    return dedup;
}

}  // namespace detail

// The line must be admissible for the region (inside the strict PLD band with
// both pixel children non-empty); otherwise the split is rejected.
inline std::pair<Region, Region> split_region(const Region& region, const QuantizedLine& line,
                                              const AngleGrid& grid) {
    const double c = grid.cos_t[line.theta_index];
    const double s = grid.sin_t[line.theta_index];
    const double rho = line_rho(line, grid);

    double lo = region.vertices.empty() ? 0.0 : region.vertices[0].x * c + region.vertices[0].y * s;
    double hi = lo;
    for (const Vec2& v : region.vertices) {
        const double p = v.x * c + v.y * s;
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    if (!(lo < rho && rho < hi))
        throw std::invalid_argument("split_region: line outside the region's PLD band");

    Region child0, child1;
    for (const PixelPoint& px : region.pixels) {
        const double sv = px.x * c + px.y * s - rho;
        if (sv < 0.0)
            child0.pixels.push_back(px);
        else
            child1.pixels.push_back(px);  // ties go to child 1
    }
    if (child0.pixels.empty() || child1.pixels.empty())
        throw std::invalid_argument("split_region: line is not a valid candidate (empty child)");

    child0.vertices = detail::clip_polygon(region.vertices, c, s, rho, true);
    child1.vertices = detail::clip_polygon(region.vertices, c, s, rho, false);
    return {std::move(child0), std::move(child1)};
}

}  // namespace bspc

#endif  // BSPC_GEOMETRY_HPP
