#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bseg/grid.hpp"

namespace bseg::morph {

// Argmax record of one max-pooling pass. Windows are square (window x window,
// window odd), centered on the output pixel and clipped at image borders.
// Ties break toward the smallest row-major linear index, so caches are
// bit-identical across repeated runs.
struct PoolCache {
    int window = 1;
    int in_height = 0;
    int in_width = 0;
    std::vector<int> argmax;  // per output pixel: linear index of the winning input pixel
};

// output[i,j] = max of m over the clipped window centered at (i,j).
std::pair<Map, PoolCache> maxpool(const Map& m, int window);

// result[k] = sum of upstream over output pixels whose cached argmax is k.
// Gradient flows only to the winning cell of each window.
GradMap maxpool_backward(const GradMap& upstream, const PoolCache& cache, int in_height, int in_width);

enum class Elem { add, sub, mul };

Map elementwise(const Map& a, const Map& b, Elem kind);
double scalar_sum(const Map& m);

// Inner-boundary extraction, pool(1-y, theta0) - (1-y): foreground pixels with
// a background pixel inside the theta0 window. Plain forward (no tape).
Map boundary_map(const Map& y, int theta0);

// Boundary dilation, pool(b, theta). Plain forward.
Map extend_boundary_map(const Map& b, int theta);

// Records a composition of the primitives above and replays it in exact
// reverse order for the backward pass. Map-valued and scalar-valued nodes
// share one topologically ordered sequence. One tape per loss evaluation;
// distinct tapes are independent.
class Tape {
public:
    struct MapId {
        int id = -1;
    };
    struct ScalarId {
        int id = -1;
    };

    // leaves
    MapId input(const Map& m);     // carries gradient
    MapId constant(const Map& m);  // gradient-free (ground truth branch)

    // map -> map
    MapId maxpool(MapId x, int window);
    MapId add(MapId a, MapId b);
    MapId sub(MapId a, MapId b);
    MapId mul(MapId a, MapId b);
    MapId affine(MapId x, double scale, double offset);  // scale*x + offset
    MapId log(MapId x);
    MapId clamp(MapId x, double lo, double hi);

    // map -> scalar, scalar -> scalar
    ScalarId sum(MapId x);
    ScalarId scalar(double c);
    ScalarId add(ScalarId a, ScalarId b);
    ScalarId sub(ScalarId a, ScalarId b);
    ScalarId mul(ScalarId a, ScalarId b);
    ScalarId div(ScalarId a, ScalarId b);

    const Map& map_value(MapId x) const;
    double scalar_value(ScalarId s) const;
    const PoolCache& pool_cache(MapId pool_node) const;

    // Accumulates adjoints of `output` w.r.t. every node; may be called once per tape.
    void backward(ScalarId output);
    GradMap grad(MapId leaf) const;

    // FNV-1a over every pool argmax array; two evaluations with equal digests
    // made identical tie-break decisions (used to exclude tie-ambiguous pixels
    // from finite-difference comparisons).
    std::uint64_t cache_digest() const;

private:
    struct Node;
    int push(Node n);
    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

// Eq-style compositions on a tape.
Tape::MapId boundary(Tape& t, Tape::MapId y, int theta0);
Tape::MapId extend_boundary(Tape& t, Tape::MapId b, int theta);

}  // namespace bseg::morph
