#pragma once

#include <cstdint>

#include "bseg/grid.hpp"

namespace bseg::metrics {

struct ConfusionCounts {
    long long tp = 0, fp = 0, tn = 0, fn = 0;
};

enum class DistMode { euclidean, chebyshev };

// Per-pixel distance to the nearest set pixel; +inf everywhere if the set is empty.
struct DistanceMap : Map {
    DistanceMap() = default;
    explicit DistanceMap(Map m) : Map(std::move(m)) {}
};

struct BoundaryScore {
    double precision = 0.0;
    double recall = 0.0;
    double bf1 = 0.0;
    double theta_dist = 0.0;
    DistMode mode = DistMode::euclidean;
};

ConfusionCounts confusion(const BinaryMap& pred, const BinaryMap& gt);

// 0/0 terms score 1 (perfect on an absent class).
double iou(const ConfusionCounts& c);
double dice(const ConfusionCounts& c);
double ss(const ConfusionCounts& c, double lambda);

// Exact distance transform. Euclidean uses the two-pass lower-envelope squared
// transform; chebyshev uses min-plus raster sweeps (king-move distance).
DistanceMap distance_transform(const BinaryMap& b, DistMode mode);

// Boundary F1 under a distance threshold (strict d < theta_dist). Boundaries
// of both maps are extracted with the window-3 inner-boundary operator.
// Empty-boundary conventions: both empty -> P=R=BF1=1; exactly one empty -> BF1=0.
BoundaryScore exact_bf1(const BinaryMap& pred, const BinaryMap& gt, double theta_dist, DistMode mode);

// Same contract as exact_bf1 via all-pairs boundary distances. Quadratic;
// serves as the reference the fast path is checked against.
BoundaryScore brute_bf1(const BinaryMap& pred, const BinaryMap& gt, double theta_dist, DistMode mode);

}  // namespace bseg::metrics
