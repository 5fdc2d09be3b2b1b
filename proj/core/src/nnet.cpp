#include "bseg/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "bseg/rng.hpp"

namespace bseg::nn {

namespace {

// architecture table: {in_ch, out_ch, k}
constexpr int kLayerSpec[9][3] = {
    {1, 8, 3},    // enc1
    {8, 16, 3},   // enc2
    {16, 16, 3},  // enc3
    {16, 16, 3},  // enc4
    {16, 16, 3},  // dec1
    {16, 16, 3},  // dec2
    {16, 16, 3},  // dec3
    {16, 8, 3},   // dec4
    {8, 1, 1},    // head
};

void check_params(const ModelParams& p) {
    if (p.layers.size() != 9) throw std::invalid_argument("ModelParams: expected 9 layers");
    for (int i = 0; i < 9; ++i) {
        const Conv& L = p.layers[i];
        if (L.in_ch != kLayerSpec[i][0] || L.out_ch != kLayerSpec[i][1] || L.k != kLayerSpec[i][2])
            throw std::invalid_argument("ModelParams: layer shape mismatch");
        if (L.w.size() != std::size_t(L.in_ch) * L.out_ch * L.k * L.k ||
            L.b.size() != std::size_t(L.out_ch))
            throw std::invalid_argument("ModelParams: tensor size mismatch");
    }
}

// zero-padded copy of one plane, 1-pixel border
void pad_plane(const double* src, int h, int w, double* dst) {
    const int pw = w + 2;
    std::fill(dst, dst + pw, 0.0);
    for (int r = 0; r < h; ++r) {
        double* d = dst + std::size_t(r + 1) * pw;
        d[0] = 0.0;
        std::memcpy(d + 1, src + std::size_t(r) * w, sizeof(double) * w);
        d[w + 1] = 0.0;
    }
    std::fill(dst + std::size_t(h + 1) * pw, dst + std::size_t(h + 2) * pw, 0.0);
}

// out[oc] = bias + sum_ic correlate(in[ic], w[oc][ic]); zero padding keeps size
void conv_forward(const Conv& L, const Volume& in, Volume& out) {
    const int H = in.height, W = in.width;
    out = Volume(L.out_ch, H, W);

    if (L.k == 1) {
        for (int oc = 0; oc < L.out_ch; ++oc) {
            double* op = out.data(oc);
            std::fill(op, op + out.plane(), L.b[oc]);
            for (int ic = 0; ic < L.in_ch; ++ic) {
                const double wv = L.w[std::size_t(oc) * L.in_ch + ic];
                const double* ip = in.data(ic);
                for (std::size_t i = 0; i < out.plane(); ++i) op[i] += wv * ip[i];
            }
        }
        return;
    }

    const int pw = W + 2;
    std::vector<double> pad(std::size_t(L.in_ch) * (H + 2) * pw);
    for (int ic = 0; ic < L.in_ch; ++ic)
        pad_plane(in.data(ic), H, W, pad.data() + std::size_t(ic) * (H + 2) * pw);

    for (int oc = 0; oc < L.out_ch; ++oc) {
        double* op = out.data(oc);
        std::fill(op, op + out.plane(), L.b[oc]);
        for (int ic = 0; ic < L.in_ch; ++ic) {
            const double* wp = L.w.data() + (std::size_t(oc) * L.in_ch + ic) * 9;
            const double w00 = wp[0], w01 = wp[1], w02 = wp[2];
            const double w10 = wp[3], w11 = wp[4], w12 = wp[5];
            const double w20 = wp[6], w21 = wp[7], w22 = wp[8];
            const double* pp = pad.data() + std::size_t(ic) * (H + 2) * pw;
            for (int r = 0; r < H; ++r) {
                const double* p0 = pp + std::size_t(r) * pw;
                const double* p1 = p0 + pw;
                const double* p2 = p1 + pw;
                double* orow = op + std::size_t(r) * W;
                for (int c = 0; c < W; ++c) {
                    orow[c] += w00 * p0[c] + w01 * p0[c + 1] + w02 * p0[c + 2] +
                               w10 * p1[c] + w11 * p1[c + 1] + w12 * p1[c + 2] +
                               w20 * p2[c] + w21 * p2[c + 1] + w22 * p2[c + 2];
                }
            }
        }
    }
}

// din, gw, gb from dout (gradient at the conv output, pre-activation)
void conv_backward(const Conv& L, const Volume& in, const Volume& dout, Volume& din, Conv& gw) {
    const int H = in.height, W = in.width;
    din = Volume(L.in_ch, H, W);
    gw.in_ch = L.in_ch;
    gw.out_ch = L.out_ch;
    gw.k = L.k;
    gw.w.assign(L.w.size(), 0.0);
    gw.b.assign(L.b.size(), 0.0);

    for (int oc = 0; oc < L.out_ch; ++oc) {
        const double* dp = dout.data(oc);
        double s = 0.0;
        for (std::size_t i = 0; i < dout.plane(); ++i) s += dp[i];
        gw.b[oc] = s;
    }

    if (L.k == 1) {
        for (int oc = 0; oc < L.out_ch; ++oc) {
            const double* dp = dout.data(oc);
            for (int ic = 0; ic < L.in_ch; ++ic) {
                const double wv = L.w[std::size_t(oc) * L.in_ch + ic];
                const double* ip = in.data(ic);
                double* dip = din.data(ic);
                double acc = 0.0;
                for (std::size_t i = 0; i < din.plane(); ++i) {
                    dip[i] += wv * dp[i];
                    acc += dp[i] * ip[i];
                }
                gw.w[std::size_t(oc) * L.in_ch + ic] = acc;
            }
        }
        return;
    }

    const int pw = W + 2;
    std::vector<double> dpad(std::size_t(L.out_ch) * (H + 2) * pw);
    for (int oc = 0; oc < L.out_ch; ++oc)
        pad_plane(dout.data(oc), H, W, dpad.data() + std::size_t(oc) * (H + 2) * pw);
    std::vector<double> ipad(std::size_t(L.in_ch) * (H + 2) * pw);
    for (int ic = 0; ic < L.in_ch; ++ic)
        pad_plane(in.data(ic), H, W, ipad.data() + std::size_t(ic) * (H + 2) * pw);

    for (int oc = 0; oc < L.out_ch; ++oc) {
        const double* dpp = dpad.data() + std::size_t(oc) * (H + 2) * pw;
        const double* dp = dout.data(oc);
        for (int ic = 0; ic < L.in_ch; ++ic) {
            const double* wp = L.w.data() + (std::size_t(oc) * L.in_ch + ic) * 9;
            double* dip = din.data(ic);
            // input gradient: correlate padded dout with the 180-degree rotated kernel
            const double r00 = wp[8], r01 = wp[7], r02 = wp[6];
            const double r10 = wp[5], r11 = wp[4], r12 = wp[3];
            const double r20 = wp[2], r21 = wp[1], r22 = wp[0];
            for (int r = 0; r < H; ++r) {
                const double* p0 = dpp + std::size_t(r) * pw;
                const double* p1 = p0 + pw;
                const double* p2 = p1 + pw;
                double* drow = dip + std::size_t(r) * W;
                for (int c = 0; c < W; ++c) {
                    drow[c] += r00 * p0[c] + r01 * p0[c + 1] + r02 * p0[c + 2] +
                               r10 * p1[c] + r11 * p1[c + 1] + r12 * p1[c + 2] +
                               r20 * p2[c] + r21 * p2[c + 1] + r22 * p2[c + 2];
                }
            }
            // kernel gradient: nine shifted dot products against the padded input
            const double* ipp = ipad.data() + std::size_t(ic) * (H + 2) * pw;
            double s00 = 0, s01 = 0, s02 = 0, s10 = 0, s11 = 0, s12 = 0, s20 = 0, s21 = 0, s22 = 0;
            for (int r = 0; r < H; ++r) {
                const double* i0 = ipp + std::size_t(r) * pw;
                const double* i1 = i0 + pw;
                const double* i2 = i1 + pw;
                const double* drow = dp + std::size_t(r) * W;
                for (int c = 0; c < W; ++c) {
                    const double d = drow[c];
                    s00 += d * i0[c];
                    s01 += d * i0[c + 1];
                    s02 += d * i0[c + 2];
                    s10 += d * i1[c];
                    s11 += d * i1[c + 1];
                    s12 += d * i1[c + 2];
                    s20 += d * i2[c];
                    s21 += d * i2[c + 1];
                    s22 += d * i2[c + 2];
                }
            }
            double* gwp = gw.w.data() + (std::size_t(oc) * L.in_ch + ic) * 9;
            gwp[0] = s00;
            gwp[1] = s01;
            gwp[2] = s02;
            gwp[3] = s10;
            gwp[4] = s11;
            gwp[5] = s12;
            gwp[6] = s20;
            gwp[7] = s21;
            gwp[8] = s22;
        }
    }
}

void relu_inplace(Volume& v, std::vector<std::uint8_t>& mask) {
    mask.resize(v.v.size());
    for (std::size_t i = 0; i < v.v.size(); ++i) {
        const bool pos = v.v[i] > 0.0;
        mask[i] = pos;
        if (!pos) v.v[i] = 0.0;
    }
}

void relu_backward_inplace(Volume& dv, const std::vector<std::uint8_t>& mask) {
    for (std::size_t i = 0; i < dv.v.size(); ++i)
        if (!mask[i]) dv.v[i] = 0.0;
}

// 2x2 stride-2 max downsampling; ties go to the smallest linear index
Volume down2x(const Volume& in, std::vector<int>& amax) {
    const int H = in.height, W = in.width;
    Volume out(in.ch, H / 2, W / 2);
    amax.resize(out.v.size());
    std::size_t o = 0;
    for (int c = 0; c < in.ch; ++c) {
        const double* ip = in.data(c);
        const std::size_t base = c * in.plane();
        for (int r = 0; r < H; r += 2)
            for (int x = 0; x < W; x += 2) {
                int best_idx = r * W + x;
                double best = ip[best_idx];
                const int cands[3] = {r * W + x + 1, (r + 1) * W + x, (r + 1) * W + x + 1};
                for (int idx : cands)
                    if (ip[idx] > best) {
                        best = ip[idx];
                        best_idx = idx;
                    }
                out.v[o] = best;
                amax[o] = static_cast<int>(base) + best_idx;
                ++o;
            }
    }
    return out;
}

Volume down2x_backward(const Volume& din_shape_ref, const Volume& dout, const std::vector<int>& amax) {
    Volume din(din_shape_ref.ch, din_shape_ref.height, din_shape_ref.width);
    for (std::size_t i = 0; i < dout.v.size(); ++i) din.v[amax[i]] += dout.v[i];
    return din;
}

// nearest-neighbor 2x upsampling
Volume up2x(const Volume& in) {
    Volume out(in.ch, in.height * 2, in.width * 2);
    for (int c = 0; c < in.ch; ++c) {
        const double* ip = in.data(c);
        double* op = out.data(c);
        for (int r = 0; r < in.height; ++r)
            for (int x = 0; x < in.width; ++x) {
                const double v = ip[r * in.width + x];
                double* o0 = op + std::size_t(2 * r) * out.width + 2 * x;
                double* o1 = o0 + out.width;
                o0[0] = o0[1] = o1[0] = o1[1] = v;
            }
    }
    return out;
}

Volume up2x_backward(const Volume& dout) {
    Volume din(dout.ch, dout.height / 2, dout.width / 2);
    for (int c = 0; c < dout.ch; ++c) {
        const double* dp = dout.data(c);
        double* ip = din.data(c);
        for (int r = 0; r < din.height; ++r)
            for (int x = 0; x < din.width; ++x) {
                const double* o0 = dp + std::size_t(2 * r) * dout.width + 2 * x;
                const double* o1 = o0 + dout.width;
                ip[r * din.width + x] = o0[0] + o0[1] + o1[0] + o1[1];
            }
    }
    return din;
}

Volume add_volumes(const Volume& a, const Volume& b) {
    Volume out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

}  // namespace

ModelParams ModelParams::init(std::uint64_t seed) {
    ModelParams p;
    p.layers.resize(9);
    for (int i = 0; i < 9; ++i) {
        Conv& L = p.layers[i];
        L.in_ch = kLayerSpec[i][0];
        L.out_ch = kLayerSpec[i][1];
        L.k = kLayerSpec[i][2];
        L.w.resize(std::size_t(L.in_ch) * L.out_ch * L.k * L.k);
        L.b.assign(L.out_ch, 0.0);
        const double fan_in = double(L.in_ch) * L.k * L.k;
        const double fan_out = double(L.out_ch) * L.k * L.k;
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        SplitMix64 rng(substream_seed(seed, static_cast<std::uint64_t>(i)));
        for (double& w : L.w) w = rng.uniform(-a, a);
    }
    return p;
}

int ModelParams::param_count() const {
    std::size_t n = 0;
    for (const Conv& L : layers) n += L.w.size() + L.b.size();
    return static_cast<int>(n);
}

OptState OptState::zeros_like(const ModelParams& p) {
    OptState s;
    for (const Conv& L : p.layers) {
        s.m_w.emplace_back(L.w.size(), 0.0);
        s.v_w.emplace_back(L.w.size(), 0.0);
        s.m_b.emplace_back(L.b.size(), 0.0);
        s.v_b.emplace_back(L.b.size(), 0.0);
    }
    return s;
}

std::uint64_t ForwardCache::digest() const {
    std::uint64_t h = 0xCBF29CE484222325ull;
    auto mix = [&h](std::uint64_t v) {
        for (int byte = 0; byte < 8; ++byte) {
            h ^= (v >> (8 * byte)) & 0xFF;
            h *= 0x100000001B3ull;
        }
    };
    for (const auto& mask : relu_mask) {
        std::uint64_t acc = 0;
        int bits = 0;
        for (std::uint8_t m : mask) {
            acc = (acc << 1) | m;
            if (++bits == 64) {
                mix(acc);
                acc = 0;
                bits = 0;
            }
        }
        mix(acc);
    }
    for (int a : amax1) mix(static_cast<std::uint64_t>(a));
    for (int a : amax2) mix(static_cast<std::uint64_t>(a));
    return h;
}

ProbMap forward(const ModelParams& params, const Map& image, ForwardCache* cache) {
    check_params(params);
    const int H = image.height, W = image.width;
    if (H % 4 != 0 || W % 4 != 0)
        throw std::invalid_argument("forward: image size must be divisible by 4");

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;

    c.x = Volume(1, H, W);
    c.x.v = image.values;

    conv_forward(params.layers[0], c.x, c.a1);
    relu_inplace(c.a1, c.relu_mask[0]);
    conv_forward(params.layers[1], c.a1, c.a2);
    relu_inplace(c.a2, c.relu_mask[1]);
    c.p1 = down2x(c.a2, c.amax1);
    conv_forward(params.layers[2], c.p1, c.a3);
    relu_inplace(c.a3, c.relu_mask[2]);
    conv_forward(params.layers[3], c.a3, c.a4);
    relu_inplace(c.a4, c.relu_mask[3]);
    c.p2 = down2x(c.a4, c.amax2);

    c.u1 = up2x(c.p2);
    c.m1 = add_volumes(c.u1, c.a4);
    conv_forward(params.layers[4], c.m1, c.d1);
    relu_inplace(c.d1, c.relu_mask[4]);
    conv_forward(params.layers[5], c.d1, c.d2);
    relu_inplace(c.d2, c.relu_mask[5]);
    c.u2 = up2x(c.d2);
    c.m2 = add_volumes(c.u2, c.a2);
    conv_forward(params.layers[6], c.m2, c.d3);
    relu_inplace(c.d3, c.relu_mask[6]);
    conv_forward(params.layers[7], c.d3, c.d4);
    relu_inplace(c.d4, c.relu_mask[7]);
    conv_forward(params.layers[8], c.d4, c.z);

    c.y.resize(c.z.v.size());
    for (std::size_t i = 0; i < c.z.v.size(); ++i) c.y[i] = 1.0 / (1.0 + std::exp(-c.z.v[i]));

    Map out(H, W);
    out.values = c.y;
    return ProbMap(std::move(out));
}

ModelGrads backward(const ModelParams& params, const ForwardCache& cache, const GradMap& upstream) {
    check_params(params);
    if (upstream.height != cache.x.height || upstream.width != cache.x.width)
        throw std::invalid_argument("backward: upstream shape mismatch");
    if (cache.y.empty()) throw std::invalid_argument("backward: cache was not produced by forward");

    ModelGrads g;
    g.layers.resize(9);

    // through the sigmoid
    Volume dz(1, upstream.height, upstream.width);
    for (std::size_t i = 0; i < dz.v.size(); ++i)
        dz.v[i] = upstream.values[i] * cache.y[i] * (1.0 - cache.y[i]);

    Volume dd4;
    conv_backward(params.layers[8], cache.d4, dz, dd4, g.layers[8]);
    relu_backward_inplace(dd4, cache.relu_mask[7]);

    Volume dd3;
    conv_backward(params.layers[7], cache.d3, dd4, dd3, g.layers[7]);
    relu_backward_inplace(dd3, cache.relu_mask[6]);

    Volume dm2;
    conv_backward(params.layers[6], cache.m2, dd3, dm2, g.layers[6]);
    // m2 = up2x(d2) + a2
    Volume dd2 = up2x_backward(dm2);
    relu_backward_inplace(dd2, cache.relu_mask[5]);

    Volume dd1;
    conv_backward(params.layers[5], cache.d1, dd2, dd1, g.layers[5]);
    relu_backward_inplace(dd1, cache.relu_mask[4]);

    Volume dm1;
    conv_backward(params.layers[4], cache.m1, dd1, dm1, g.layers[4]);
    // m1 = up2x(p2) + a4
    Volume dp2 = up2x_backward(dm1);
    Volume da4 = down2x_backward(cache.a4, dp2, cache.amax2);
    for (std::size_t i = 0; i < da4.v.size(); ++i) da4.v[i] += dm1.v[i];  // skip branch
    relu_backward_inplace(da4, cache.relu_mask[3]);

    Volume da3;
    conv_backward(params.layers[3], cache.a3, da4, da3, g.layers[3]);
    relu_backward_inplace(da3, cache.relu_mask[2]);

    Volume dp1;
    conv_backward(params.layers[2], cache.p1, da3, dp1, g.layers[2]);
    Volume da2 = down2x_backward(cache.a2, dp1, cache.amax1);
    for (std::size_t i = 0; i < da2.v.size(); ++i) da2.v[i] += dm2.v[i];  // skip branch
    relu_backward_inplace(da2, cache.relu_mask[1]);

    Volume da1;
    conv_backward(params.layers[1], cache.a1, da2, da1, g.layers[1]);
    relu_backward_inplace(da1, cache.relu_mask[0]);

    Volume dx;
    conv_backward(params.layers[0], cache.x, da1, dx, g.layers[0]);

    return g;
}

void adam_step(ModelParams& params, const ModelGrads& grads, OptState& state, double lr, double beta1,
               double beta2, double eps) {
    check_params(params);
    if (grads.layers.size() != params.layers.size())
        throw std::invalid_argument("adam_step: gradient layer count mismatch");

    for (const Conv& L : grads.layers)
        for (double v : L.w)
            if (!std::isfinite(v)) throw std::domain_error("adam_step: non-finite gradient");

    state.t += 1;
    const double lr_t =
        lr * std::sqrt(1.0 - std::pow(beta2, double(state.t))) / (1.0 - std::pow(beta1, double(state.t)));

    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        auto update = [&](std::vector<double>& p, const std::vector<double>& gr, std::vector<double>& m,
                          std::vector<double>& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * gr[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * gr[i] * gr[i];
                p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
            }
        };
        update(params.layers[li].w, grads.layers[li].w, state.m_w[li], state.v_w[li]);
        update(params.layers[li].b, grads.layers[li].b, state.m_b[li], state.v_b[li]);
    }
}

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

void put_f32(std::ofstream& f, double v) {
    float fv = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &fv, 4);
    put_u32(f, bits);
}

double get_f32(std::ifstream& f) {
    std::uint32_t bits = get_u32(f);
    float fv;
    std::memcpy(&fv, &bits, 4);
    return static_cast<double>(fv);
}

constexpr char kMagic[8] = {'B', 'S', 'E', 'G', 'N', 'E', 'T', '1'};

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 8);
    put_u32(f, static_cast<std::uint32_t>(params.layers.size()));
    for (const Conv& L : params.layers) {
        put_u32(f, static_cast<std::uint32_t>(L.in_ch));
        put_u32(f, static_cast<std::uint32_t>(L.out_ch));
        put_u32(f, static_cast<std::uint32_t>(L.k));
    }
    for (const Conv& L : params.layers) {
        for (double v : L.w) put_f32(f, v);
        for (double v : L.b) put_f32(f, v);
    }
    if (!f) throw std::runtime_error("checkpoint write failure: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    const std::uint32_t n = get_u32(f);
    if (n == 0 || n > 64) throw std::runtime_error("bad checkpoint layer count: " + path);
    ModelParams p;
    p.layers.resize(n);
    for (Conv& L : p.layers) {
        L.in_ch = static_cast<int>(get_u32(f));
        L.out_ch = static_cast<int>(get_u32(f));
        L.k = static_cast<int>(get_u32(f));
        if (L.in_ch < 1 || L.out_ch < 1 || L.k < 1 || L.in_ch > 4096 || L.out_ch > 4096 || L.k > 15)
            throw std::runtime_error("bad checkpoint layer table: " + path);
    }
    for (Conv& L : p.layers) {
        L.w.resize(std::size_t(L.in_ch) * L.out_ch * L.k * L.k);
        L.b.resize(L.out_ch);
        for (double& v : L.w) v = get_f32(f);
        for (double& v : L.b) v = get_f32(f);
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return p;
}

}  // namespace bseg::nn
