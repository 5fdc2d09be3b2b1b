#include "bseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bseg/morphgrad.hpp"

namespace bseg::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// out[q] = min_p (q-p)^2 + f[p], lower envelope of parabolas. Entries of f
// may be +inf (absent parabolas); all-inf input yields all-inf output.
void dt1d(const double* f, double* out, int* v, double* z, int n) {
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k >= 0) {
            double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
            while (k >= 0 && s <= z[k]) {
                --k;
                if (k >= 0)
                    s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
                        (2.0 * q - 2.0 * v[k]);
            }
            ++k;
            v[k] = q;
            z[k] = k == 0 ? -kInf : s;
            z[k + 1] = kInf;
        } else {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
        }
    }
    if (k < 0) {
        std::fill(out, out + n, kInf);
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        out[q] = double(q - v[j]) * (q - v[j]) + f[v[j]];
    }
}

// Exact squared euclidean distance to the nearest 1-pixel of `set`.
std::vector<double> squared_edt(const Map& set) {
    const int h = set.height, w = set.width;
    std::vector<double> g(static_cast<std::size_t>(h) * w, kInf);

    // vertical pass: squared distance to nearest set pixel within each column
    for (int c = 0; c < w; ++c) {
        int d = h + w + 1;
        for (int r = 0; r < h; ++r) {
            d = set.values[set.idx(r, c)] == 1.0 ? 0 : (d < h + w + 1 ? d + 1 : d);
            if (d <= h) g[set.idx(r, c)] = double(d) * d;
        }
        d = h + w + 1;
        for (int r = h - 1; r >= 0; --r) {
            d = set.values[set.idx(r, c)] == 1.0 ? 0 : (d < h + w + 1 ? d + 1 : d);
            if (d <= h) g[set.idx(r, c)] = std::min(g[set.idx(r, c)], double(d) * d);
        }
    }

    // horizontal pass: envelope over columns per row
    std::vector<double> f(w), out(w), z(w + 1);
    std::vector<int> v(w);
    std::vector<double> result(g.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) f[c] = g[static_cast<std::size_t>(r) * w + c];
        dt1d(f.data(), out.data(), v.data(), z.data(), w);
        for (int c = 0; c < w; ++c) result[static_cast<std::size_t>(r) * w + c] = out[c];
    }
    return result;
}

// King-move (chebyshev) distance via min-plus raster sweeps.
std::vector<int> cheb_dt(const Map& set) {
    const int h = set.height, w = set.width;
    const int big = h + w + 2;
    std::vector<int> d(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = set.values[i] == 1.0 ? 0 : big;

    auto at = [&](int r, int c) -> int& { return d[static_cast<std::size_t>(r) * w + c]; };
    bool changed = true;
    int rounds = 0;
    while (changed && rounds < 4) {  // one fwd+bwd round is exact for this metric
        changed = false;
        ++rounds;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                int best = at(r, c);
                if (r > 0) {
                    best = std::min(best, at(r - 1, c) + 1);
                    if (c > 0) best = std::min(best, at(r - 1, c - 1) + 1);
                    if (c < w - 1) best = std::min(best, at(r - 1, c + 1) + 1);
                }
                if (c > 0) best = std::min(best, at(r, c - 1) + 1);
                if (best < at(r, c)) {
                    at(r, c) = best;
                    changed = true;
                }
            }
        for (int r = h - 1; r >= 0; --r)
            for (int c = w - 1; c >= 0; --c) {
                int best = at(r, c);
                if (r < h - 1) {
                    best = std::min(best, at(r + 1, c) + 1);
                    if (c > 0) best = std::min(best, at(r + 1, c - 1) + 1);
                    if (c < w - 1) best = std::min(best, at(r + 1, c + 1) + 1);
                }
                if (c < w - 1) best = std::min(best, at(r, c + 1) + 1);
                if (best < at(r, c)) {
                    at(r, c) = best;
                    changed = true;
                }
            }
    }
    for (int& x : d)
        if (x >= big) x = -1;  // empty-set sentinel
    return d;
}

double safe_ratio(long long num, long long den) { return den == 0 ? 1.0 : double(num) / double(den); }

BoundaryScore combine(long long pred_hits, long long pred_total, long long gt_hits, long long gt_total,
                      double theta_dist, DistMode mode) {
    BoundaryScore s;
    s.theta_dist = theta_dist;
    s.mode = mode;
    s.precision = pred_total > 0 ? double(pred_hits) / double(pred_total) : (gt_total == 0 ? 1.0 : 0.0);
    s.recall = gt_total > 0 ? double(gt_hits) / double(gt_total) : (pred_total == 0 ? 1.0 : 0.0);
    const double pr = s.precision + s.recall;
    s.bf1 = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
    return s;
}

// strict d < theta, compared in the squared domain for euclidean
long long count_within(const std::vector<int>& coords, const std::vector<double>& sq_dt,
                       double theta_sq) {
    long long n = 0;
    for (int idx : coords) n += sq_dt[idx] < theta_sq;
    return n;
}

std::vector<int> boundary_coords(const Map& b) {
    std::vector<int> out;
    for (int i = 0; i < b.size(); ++i)
        if (b.values[i] == 1.0) out.push_back(i);
    return out;
}

constexpr int kBoundaryWindow = 3;  // same boundary notion as the surrogate's theta0 default

}  // namespace

ConfusionCounts confusion(const BinaryMap& pred, const BinaryMap& gt) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("confusion: shape mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const bool p = pred.values[i] == 1.0, g = gt.values[i] == 1.0;
        c.tp += p && g;
        c.fp += p && !g;
        c.fn += !p && g;
        c.tn += !p && !g;
    }
    return c;
}

double iou(const ConfusionCounts& c) { return safe_ratio(c.tp, c.fp + c.tp + c.fn); }

double dice(const ConfusionCounts& c) { return safe_ratio(2 * c.tp, 2 * c.tp + c.fn + c.fp); }

double ss(const ConfusionCounts& c, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("ss: lambda outside [0,1]");
    return lambda * safe_ratio(c.tn, c.tn + c.fp) + (1.0 - lambda) * safe_ratio(c.tp, c.tp + c.fn);
}

DistanceMap distance_transform(const BinaryMap& b, DistMode mode) {
    Map out(b.height, b.width);
    if (mode == DistMode::euclidean) {
        std::vector<double> sq = squared_edt(b);
        for (std::size_t i = 0; i < sq.size(); ++i) out.values[i] = std::sqrt(sq[i]);
    } else {
        std::vector<int> d = cheb_dt(b);
        for (std::size_t i = 0; i < d.size(); ++i) out.values[i] = d[i] < 0 ? kInf : double(d[i]);
    }
    return DistanceMap(std::move(out));
}

BoundaryScore exact_bf1(const BinaryMap& pred, const BinaryMap& gt, double theta_dist, DistMode mode) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("exact_bf1: shape mismatch");
    if (!(theta_dist > 0.0)) throw std::invalid_argument("exact_bf1: theta_dist must be > 0");

    const Map b_pd = morph::boundary_map(pred, kBoundaryWindow);
    const Map b_gt = morph::boundary_map(gt, kBoundaryWindow);
    const std::vector<int> pd = boundary_coords(b_pd);
    const std::vector<int> gtc = boundary_coords(b_gt);

    long long pred_hits = 0, gt_hits = 0;
    if (mode == DistMode::euclidean) {
        const double theta_sq = theta_dist * theta_dist;
        if (!pd.empty() && !gtc.empty()) {
            pred_hits = count_within(pd, squared_edt(b_gt), theta_sq);
            gt_hits = count_within(gtc, squared_edt(b_pd), theta_sq);
        }
    } else {
        if (!pd.empty() && !gtc.empty()) {
            const std::vector<int> dt_gt = cheb_dt(b_gt);
            const std::vector<int> dt_pd = cheb_dt(b_pd);
            for (int i : pd) pred_hits += dt_gt[i] >= 0 && dt_gt[i] < theta_dist;
            for (int i : gtc) gt_hits += dt_pd[i] >= 0 && dt_pd[i] < theta_dist;
        }
    }
    return combine(pred_hits, static_cast<long long>(pd.size()), gt_hits,
                   static_cast<long long>(gtc.size()), theta_dist, mode);
}

BoundaryScore brute_bf1(const BinaryMap& pred, const BinaryMap& gt, double theta_dist, DistMode mode) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("brute_bf1: shape mismatch");
    if (!(theta_dist > 0.0)) throw std::invalid_argument("brute_bf1: theta_dist must be > 0");

    const Map b_pd = morph::boundary_map(pred, kBoundaryWindow);
    const Map b_gt = morph::boundary_map(gt, kBoundaryWindow);
    const std::vector<int> pd = boundary_coords(b_pd);
    const std::vector<int> gtc = boundary_coords(b_gt);
    const int w = pred.width;

    auto min_dist_hits = [&](const std::vector<int>& from, const std::vector<int>& to) {
        long long hits = 0;
        for (int a : from) {
            const int ar = a / w, ac = a % w;
            double best = kInf;
            for (int b2 : to) {
                const int br = b2 / w, bc = b2 % w;
                double d;
                if (mode == DistMode::euclidean) {
                    d = double(ar - br) * (ar - br) + double(ac - bc) * (ac - bc);
                } else {
                    d = std::max(std::abs(ar - br), std::abs(ac - bc));
                }
                best = std::min(best, d);
            }
            const double theta = mode == DistMode::euclidean ? theta_dist * theta_dist : theta_dist;
            hits += best < theta;
        }
        return hits;
    };

    long long pred_hits = 0, gt_hits = 0;
    if (!pd.empty() && !gtc.empty()) {
        pred_hits = min_dist_hits(pd, gtc);
        gt_hits = min_dist_hits(gtc, pd);
    }
    return combine(pred_hits, static_cast<long long>(pd.size()), gt_hits,
                   static_cast<long long>(gtc.size()), theta_dist, mode);
}

}  // namespace bseg::metrics
