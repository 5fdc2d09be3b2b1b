#include "bseg/morphgrad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bseg::morph {

namespace {

void check_window(const Map& m, int window) {
    if (window < 1 || window % 2 == 0)
        throw std::invalid_argument("maxpool: window must be odd and positive");
    if (window > 2 * std::min(m.height, m.width) - 1)
        throw std::invalid_argument("maxpool: window exceeds 2*min(height,width)-1");
}

}  // namespace

std::pair<Map, PoolCache> maxpool(const Map& m, int window) {
    check_window(m, window);
    const int h = m.height, w = m.width, r = (window - 1) / 2;
    Map out(h, w);
    PoolCache cache;
    cache.window = window;
    cache.in_height = h;
    cache.in_width = w;
    cache.argmax.resize(static_cast<std::size_t>(h) * w);

    for (int i = 0; i < h; ++i) {
        const int r0 = std::max(0, i - r), r1 = std::min(h - 1, i + r);
        for (int j = 0; j < w; ++j) {
            const int c0 = std::max(0, j - r), c1 = std::min(w - 1, j + r);
            double best = -std::numeric_limits<double>::infinity();
            int best_idx = -1;
            for (int y = r0; y <= r1; ++y) {
                const double* row = m.values.data() + static_cast<std::size_t>(y) * w;
                for (int x = c0; x <= c1; ++x) {
                    if (row[x] > best) {  // strict > keeps the smallest linear index on ties
                        best = row[x];
                        best_idx = y * w + x;
                    }
                }
            }
            out.values[out.idx(i, j)] = best;
            cache.argmax[out.idx(i, j)] = best_idx;
        }
    }
    return {std::move(out), std::move(cache)};
}

GradMap maxpool_backward(const GradMap& upstream, const PoolCache& cache, int in_height, int in_width) {
    if (in_height != cache.in_height || in_width != cache.in_width)
        throw std::invalid_argument("maxpool_backward: input shape does not match cache");
    if (upstream.size() != static_cast<int>(cache.argmax.size()))
        throw std::invalid_argument("maxpool_backward: upstream shape does not match cache");
    Map g(in_height, in_width);
    for (std::size_t i = 0; i < cache.argmax.size(); ++i) g.values[cache.argmax[i]] += upstream.values[i];
    return GradMap(std::move(g));
}

Map elementwise(const Map& a, const Map& b, Elem kind) {
    if (!a.same_shape(b)) throw std::invalid_argument("elementwise: shape mismatch");
    Map out(a.height, a.width);
    switch (kind) {
        case Elem::add:
            for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] + b.values[i];
            break;
        case Elem::sub:
            for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] - b.values[i];
            break;
        case Elem::mul:
            for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] * b.values[i];
            break;
    }
    return out;
}

double scalar_sum(const Map& m) {
    double s = 0.0;
    for (double v : m.values) s += v;
    return s;
}

Map boundary_map(const Map& y, int theta0) {
    Map inv(y.height, y.width);
    for (std::size_t i = 0; i < inv.values.size(); ++i) inv.values[i] = 1.0 - y.values[i];
    auto [pooled, cache] = maxpool(inv, theta0);
    (void)cache;
    return elementwise(pooled, inv, Elem::sub);
}

Map extend_boundary_map(const Map& b, int theta) {
    return maxpool(b, theta).first;
}

// ---------------------------------------------------------------------------
// Tape

enum class Op : std::uint8_t {
    leaf_input,
    leaf_const,
    maxpool,
    add,
    sub,
    mul,
    affine,
    log,
    clamp,
    sum,
    s_const,
    s_add,
    s_sub,
    s_mul,
    s_div,
};

struct Tape::Node {
    Op op;
    int a = -1, b = -1;
    double c0 = 0.0, c1 = 0.0;  // affine scale/offset, clamp lo/hi, scalar constant
    bool is_scalar = false;
    bool needs_grad = false;
    PoolCache cache;  // maxpool nodes only
    Map val;
    double sval = 0.0;
    Map adj;  // allocated during backward
    double sadj = 0.0;
};

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tape::MapId Tape::input(const Map& m) {
    Node n;
    n.op = Op::leaf_input;
    n.needs_grad = true;
    n.val = m;
    return {push(std::move(n))};
}

Tape::MapId Tape::constant(const Map& m) {
    Node n;
    n.op = Op::leaf_const;
    n.val = m;
    return {push(std::move(n))};
}

Tape::MapId Tape::maxpool(MapId x, int window) {
    Node n;
    n.op = Op::maxpool;
    n.a = x.id;
    n.needs_grad = nodes_[x.id].needs_grad;
    auto [out, cache] = morph::maxpool(nodes_[x.id].val, window);
    n.val = std::move(out);
    n.cache = std::move(cache);
    return {push(std::move(n))};
}

Tape::MapId Tape::add(MapId a, MapId b) {
    Node n;
    n.op = Op::add;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.val = elementwise(nodes_[a.id].val, nodes_[b.id].val, Elem::add);
    return {push(std::move(n))};
}

Tape::MapId Tape::sub(MapId a, MapId b) {
    Node n;
    n.op = Op::sub;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.val = elementwise(nodes_[a.id].val, nodes_[b.id].val, Elem::sub);
    return {push(std::move(n))};
}

Tape::MapId Tape::mul(MapId a, MapId b) {
    Node n;
    n.op = Op::mul;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.val = elementwise(nodes_[a.id].val, nodes_[b.id].val, Elem::mul);
    return {push(std::move(n))};
}

Tape::MapId Tape::affine(MapId x, double scale, double offset) {
    Node n;
    n.op = Op::affine;
    n.a = x.id;
    n.c0 = scale;
    n.c1 = offset;
    n.needs_grad = nodes_[x.id].needs_grad;
    const Map& in = nodes_[x.id].val;
    n.val = Map(in.height, in.width);
    for (std::size_t i = 0; i < in.values.size(); ++i) n.val.values[i] = scale * in.values[i] + offset;
    return {push(std::move(n))};
}

Tape::MapId Tape::log(MapId x) {
    Node n;
    n.op = Op::log;
    n.a = x.id;
    n.needs_grad = nodes_[x.id].needs_grad;
    const Map& in = nodes_[x.id].val;
    n.val = Map(in.height, in.width);
    for (std::size_t i = 0; i < in.values.size(); ++i) n.val.values[i] = std::log(in.values[i]);
    return {push(std::move(n))};
}

Tape::MapId Tape::clamp(MapId x, double lo, double hi) {
    Node n;
    n.op = Op::clamp;
    n.a = x.id;
    n.c0 = lo;
    n.c1 = hi;
    n.needs_grad = nodes_[x.id].needs_grad;
    const Map& in = nodes_[x.id].val;
    n.val = Map(in.height, in.width);
    for (std::size_t i = 0; i < in.values.size(); ++i)
        n.val.values[i] = std::min(hi, std::max(lo, in.values[i]));
    return {push(std::move(n))};
}

Tape::ScalarId Tape::sum(MapId x) {
    Node n;
    n.op = Op::sum;
    n.a = x.id;
    n.is_scalar = true;
    n.needs_grad = nodes_[x.id].needs_grad;
    n.sval = scalar_sum(nodes_[x.id].val);
    return {push(std::move(n))};
}

Tape::ScalarId Tape::scalar(double c) {
    Node n;
    n.op = Op::s_const;
    n.is_scalar = true;
    n.sval = c;
    return {push(std::move(n))};
}

Tape::ScalarId Tape::add(ScalarId a, ScalarId b) {
    Node n;
    n.op = Op::s_add;
    n.a = a.id;
    n.b = b.id;
    n.is_scalar = true;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.sval = nodes_[a.id].sval + nodes_[b.id].sval;
    return {push(std::move(n))};
}

Tape::ScalarId Tape::sub(ScalarId a, ScalarId b) {
    Node n;
    n.op = Op::s_sub;
    n.a = a.id;
    n.b = b.id;
    n.is_scalar = true;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.sval = nodes_[a.id].sval - nodes_[b.id].sval;
    return {push(std::move(n))};
}

Tape::ScalarId Tape::mul(ScalarId a, ScalarId b) {
    Node n;
    n.op = Op::s_mul;
    n.a = a.id;
    n.b = b.id;
    n.is_scalar = true;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.sval = nodes_[a.id].sval * nodes_[b.id].sval;
    return {push(std::move(n))};
}

Tape::ScalarId Tape::div(ScalarId a, ScalarId b) {
    Node n;
    n.op = Op::s_div;
    n.a = a.id;
    n.b = b.id;
    n.is_scalar = true;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    if (nodes_[b.id].sval == 0.0) throw std::domain_error("Tape::div: zero denominator");
    n.sval = nodes_[a.id].sval / nodes_[b.id].sval;
    return {push(std::move(n))};
}

const Map& Tape::map_value(MapId x) const { return nodes_.at(x.id).val; }

double Tape::scalar_value(ScalarId s) const { return nodes_.at(s.id).sval; }

const PoolCache& Tape::pool_cache(MapId pool_node) const {
    const Node& n = nodes_.at(pool_node.id);
    if (n.op != Op::maxpool) throw std::invalid_argument("pool_cache: node is not a maxpool");
    return n.cache;
}

void Tape::backward(ScalarId output) {
    if (ran_backward_) throw std::logic_error("Tape::backward: already ran on this tape");
    ran_backward_ = true;
    Node& out = nodes_.at(output.id);
    if (!out.is_scalar) throw std::invalid_argument("Tape::backward: output must be scalar");
    out.sadj = 1.0;

    for (int i = output.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad) continue;

        auto adj_of = [&](int k) -> Map& {
            Node& t = nodes_[k];
            if (t.adj.size() == 0) t.adj = Map(t.val.height, t.val.width);
            return t.adj;
        };
        // adjoint of a non-scalar node may be entirely zero-allocated; skip if never touched
        if (!n.is_scalar && n.adj.size() == 0) continue;

        switch (n.op) {
            case Op::leaf_input:
            case Op::leaf_const:
            case Op::s_const:
                break;
            case Op::maxpool: {
                if (!nodes_[n.a].needs_grad) break;
                Map& ga = adj_of(n.a);
                for (std::size_t k = 0; k < n.cache.argmax.size(); ++k)
                    ga.values[n.cache.argmax[k]] += n.adj.values[k];
                break;
            }
            case Op::add: {
                if (nodes_[n.a].needs_grad) {
                    Map& ga = adj_of(n.a);
                    for (std::size_t k = 0; k < ga.values.size(); ++k) ga.values[k] += n.adj.values[k];
                }
                if (nodes_[n.b].needs_grad) {
                    Map& gb = adj_of(n.b);
                    for (std::size_t k = 0; k < gb.values.size(); ++k) gb.values[k] += n.adj.values[k];
                }
                break;
            }
            case Op::sub: {
                if (nodes_[n.a].needs_grad) {
                    Map& ga = adj_of(n.a);
                    for (std::size_t k = 0; k < ga.values.size(); ++k) ga.values[k] += n.adj.values[k];
                }
                if (nodes_[n.b].needs_grad) {
                    Map& gb = adj_of(n.b);
                    for (std::size_t k = 0; k < gb.values.size(); ++k) gb.values[k] -= n.adj.values[k];
                }
                break;
            }
            case Op::mul: {
                if (nodes_[n.a].needs_grad) {
                    Map& ga = adj_of(n.a);
                    const Map& vb = nodes_[n.b].val;
                    for (std::size_t k = 0; k < ga.values.size(); ++k)
                        ga.values[k] += n.adj.values[k] * vb.values[k];
                }
                if (nodes_[n.b].needs_grad) {
                    Map& gb = adj_of(n.b);
                    const Map& va = nodes_[n.a].val;
                    for (std::size_t k = 0; k < gb.values.size(); ++k)
                        gb.values[k] += n.adj.values[k] * va.values[k];
                }
                break;
            }
            case Op::affine: {
                if (!nodes_[n.a].needs_grad) break;
                Map& ga = adj_of(n.a);
                for (std::size_t k = 0; k < ga.values.size(); ++k) ga.values[k] += n.c0 * n.adj.values[k];
                break;
            }
            case Op::log: {
                if (!nodes_[n.a].needs_grad) break;
                Map& ga = adj_of(n.a);
                const Map& va = nodes_[n.a].val;
                for (std::size_t k = 0; k < ga.values.size(); ++k)
                    ga.values[k] += n.adj.values[k] / va.values[k];
                break;
            }
            case Op::clamp: {
                if (!nodes_[n.a].needs_grad) break;
                Map& ga = adj_of(n.a);
                const Map& va = nodes_[n.a].val;
                for (std::size_t k = 0; k < ga.values.size(); ++k)
                    if (va.values[k] >= n.c0 && va.values[k] <= n.c1) ga.values[k] += n.adj.values[k];
                break;
            }
            case Op::sum: {
                if (!nodes_[n.a].needs_grad || n.sadj == 0.0) break;
                Map& ga = adj_of(n.a);
                for (std::size_t k = 0; k < ga.values.size(); ++k) ga.values[k] += n.sadj;
                break;
            }
            case Op::s_add: {
                if (nodes_[n.a].needs_grad) nodes_[n.a].sadj += n.sadj;
                if (nodes_[n.b].needs_grad) nodes_[n.b].sadj += n.sadj;
                break;
            }
            case Op::s_sub: {
                if (nodes_[n.a].needs_grad) nodes_[n.a].sadj += n.sadj;
                if (nodes_[n.b].needs_grad) nodes_[n.b].sadj -= n.sadj;
                break;
            }
            case Op::s_mul: {
                if (nodes_[n.a].needs_grad) nodes_[n.a].sadj += n.sadj * nodes_[n.b].sval;
                if (nodes_[n.b].needs_grad) nodes_[n.b].sadj += n.sadj * nodes_[n.a].sval;
                break;
            }
            case Op::s_div: {
                const double vb = nodes_[n.b].sval;
                if (nodes_[n.a].needs_grad) nodes_[n.a].sadj += n.sadj / vb;
                if (nodes_[n.b].needs_grad) nodes_[n.b].sadj -= n.sadj * nodes_[n.a].sval / (vb * vb);
                break;
            }
        }
    }
}

GradMap Tape::grad(MapId leaf) const {
    if (!ran_backward_) throw std::logic_error("Tape::grad: backward has not run");
    const Node& n = nodes_.at(leaf.id);
    if (n.adj.size() == 0) return GradMap(Map(n.val.height, n.val.width));
    return GradMap(n.adj);
}

std::uint64_t Tape::cache_digest() const {
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
    auto mix = [&h](std::uint64_t v) {
        for (int byte = 0; byte < 8; ++byte) {
            h ^= (v >> (8 * byte)) & 0xFF;
            h *= 0x100000001B3ull;
        }
    };
    for (const Node& n : nodes_) {
        if (n.op != Op::maxpool) continue;
        mix(static_cast<std::uint64_t>(n.cache.window));
        for (int a : n.cache.argmax) mix(static_cast<std::uint64_t>(a));
    }
    return h;
}

Tape::MapId boundary(Tape& t, Tape::MapId y, int theta0) {
    auto inv = t.affine(y, -1.0, 1.0);
    return t.sub(t.maxpool(inv, theta0), inv);
}

Tape::MapId extend_boundary(Tape& t, Tape::MapId b, int theta) {
    return t.maxpool(b, theta);
}

}  // namespace bseg::morph
