#ifndef BSPC_FITTING_HPP
#define BSPC_FITTING_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "bspc/geometry.hpp"
#include "bspc/image.hpp"

namespace bspc {

// Running sums over a pixel set; additive under disjoint union, which is what
// lets the split search evaluate every candidate line without rescanning.
struct MomentVector {
    double n = 0.0;
    double sx = 0.0, sy = 0.0;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    double sf = 0.0, sfx = 0.0, sfy = 0.0;
    double sff = 0.0;

    MomentVector& operator+=(const MomentVector& o) {
        n += o.n; sx += o.sx; sy += o.sy;
        sxx += o.sxx; sxy += o.sxy; syy += o.syy;
        sf += o.sf; sfx += o.sfx; sfy += o.sfy; sff += o.sff;
        return *this;
    }
    MomentVector operator+(const MomentVector& o) const { MomentVector r = *this; r += o; return r; }
    MomentVector operator-(const MomentVector& o) const {
        MomentVector r = *this;
        r.n -= o.n; r.sx -= o.sx; r.sy -= o.sy;
        r.sxx -= o.sxx; r.sxy -= o.sxy; r.syy -= o.syy;
        r.sf -= o.sf; r.sfx -= o.sfx; r.sfy -= o.sfy; r.sff -= o.sff;
        return r;
    }

    void add_sample(double x, double y, double f) {
        n += 1.0;
        sx += x; sy += y;
        sxx += x * x; sxy += x * y; syy += y * y;
        sf += f; sfx += f * x; sfy += f * y; sff += f * f;
    }
};

inline MomentVector accumulate_moments(std::span<const PixelPoint> pixels, const TileView& image) {
    MomentVector m;
    for (const PixelPoint& p : pixels) {
        if (!image.in_bounds(p.x, p.y))
            throw std::out_of_range("accumulate_moments: pixel outside the image grid");
        m.add_sample(p.x, p.y, image.at(p.x, p.y));
    }
    return m;
}

// Least-squares Q(x,y) = a*x + b*y + c over one region.
struct PlaneFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double sse = 0.0;
    bool degenerate = false;

    double eval(double x, double y) const { return a * x + b * y + c; }
};

// Normal equations solved in centered (covariance) form: the C row is
// eliminated exactly on the means, then the remaining symmetric 2x2 is solved
// with pivoting. Centering keeps constant regions at exactly sse == 0, which
// the error-threshold stop relies on. Rank-deficient systems fall back to the
// least-norm 2x2 solution and finally to a*x+b*y dropped entirely.
inline PlaneFit fit_plane(const MomentVector& m) {
    if (m.n < 1.0) throw std::invalid_argument("fit_plane: empty region");
    PlaneFit fit;
    const double n = m.n;
    const double mx = m.sx / n, my = m.sy / n, mf = m.sf / n;
    const double cxx = m.sxx - m.sx * m.sx / n;
    const double cxy = m.sxy - m.sx * m.sy / n;
    const double cyy = m.syy - m.sy * m.sy / n;
    const double cfx = m.sfx - m.sx * m.sf / n;
    const double cfy = m.sfy - m.sy * m.sf / n;
    const double cff = m.sff - m.sf * m.sf / n;

    const double scale = std::max({std::fabs(cxx), std::fabs(cyy), std::fabs(cxy)});
    const double det = cxx * cyy - cxy * cxy;
    if (scale > 0.0 && std::fabs(det) > 1e-12 * scale * scale) {
        fit.a = (cfx * cyy - cfy * cxy) / det;
        fit.b = (cfy * cxx - cfx * cxy) / det;
    } else if (scale > 0.0) {
        // singular 2x2: least-norm solution via the pseudo-inverse of the
        // rank-1 covariance, M ~ lambda * u u^T with u the dominant direction
        fit.degenerate = true;
        double ux, uy;
        if (cxx >= cyy) { ux = cxx; uy = cxy; } else { ux = cxy; uy = cyy; }
        const double len2 = ux * ux + uy * uy;
        if (len2 > 0.0) {
            const double lambda = cxx + cyy;  // trace = sole nonzero eigenvalue
            const double g = (cfx * ux + cfy * uy) / (lambda * len2);
            fit.a = g * ux;
            fit.b = g * uy;
        }
    } else {
        fit.degenerate = true;  // all pixels coincide spatially
    }
    fit.c = mf - fit.a * mx - fit.b * my;
    fit.sse = std::max(0.0, cff - fit.a * cfx - fit.b * cfy);
    return fit;
}

struct SplitChoice {
    QuantizedLine line;
    PlaneFit fit0;
    PlaneFit fit1;
    double cost = 0.0;  // fit0.sse + fit1.sse
};

// Minimizes fit0.sse + fit1.sse over the candidate list. Per orientation the
// pixels are sorted once by projection and their moments migrate from the
// child-1 accumulator to child 0 as rho sweeps upward, so evaluating C
// candidates over P pixels costs O(P log P + C) per theta instead of O(P*C).
// Ties are broken lexicographically by (theta_index, rho_index); candidates
// are required to arrive in canonical order.
inline std::optional<SplitChoice> best_split(const Region& region,
                                             std::span<const QuantizedLine> candidates,
                                             const TileView& image, const AngleGrid& grid) {
    if (region.pixel_count() < 2)
        throw std::invalid_argument("best_split: region must have at least 2 pixels");
    if (candidates.empty()) return std::nullopt;

    const MomentVector total = accumulate_moments(region.pixels, image);
    const std::size_t np = region.pixels.size();

    struct ProjEntry {
        double proj;
        std::uint32_t idx;
    };
    std::vector<ProjEntry> entries(np);

    std::optional<SplitChoice> best;

    std::size_t begin = 0;
    while (begin < candidates.size()) {
        const int ti = candidates[begin].theta_index;
        std::size_t end = begin;
        while (end < candidates.size() && candidates[end].theta_index == ti) ++end;

        const double c = grid.cos_t[ti];
        const double s = grid.sin_t[ti];
        const double dr = grid.rho_step_t[ti];
        for (std::size_t j = 0; j < np; ++j) {
            const PixelPoint& p = region.pixels[j];
            entries[j] = {p.x * c + p.y * s, static_cast<std::uint32_t>(j)};
        }
        std::sort(entries.begin(), entries.end(), [](const ProjEntry& l, const ProjEntry& r) {
            return l.proj < r.proj || (l.proj == r.proj && l.idx < r.idx);
        });

        MomentVector m0;
        std::size_t head = 0;
        for (std::size_t ci = begin; ci < end; ++ci) {
            const double rho = candidates[ci].rho_index * dr;
            while (head < np && entries[head].proj < rho) {
                const PixelPoint& p = region.pixels[entries[head].idx];
                m0.add_sample(p.x, p.y, image.at(p.x, p.y));
                ++head;
            }
            const MomentVector m1 = total - m0;
            if (m0.n < 1.0 || m1.n < 1.0) continue;  // not admissible; defensive
            const PlaneFit f0 = fit_plane(m0);
            const PlaneFit f1 = fit_plane(m1);
            const double cost = f0.sse + f1.sse;
            if (!best || cost < best->cost) best = SplitChoice{candidates[ci], f0, f1, cost};
        }
        begin = end;
    }
    return best;
}

}  // namespace bspc

#endif  // BSPC_FITTING_HPP
