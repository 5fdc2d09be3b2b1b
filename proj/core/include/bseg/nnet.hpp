#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bseg/grid.hpp"

namespace bseg::nn {

// Channel stack of H x W planes, plane-major storage.
struct Volume {
    int ch = 0;
    int height = 0;
    int width = 0;
    std::vector<double> v;

    Volume() = default;
    Volume(int c, int h, int w) : ch(c), height(h), width(w), v(std::size_t(c) * h * w, 0.0) {}
    std::size_t plane() const { return std::size_t(height) * width; }
    double* data(int c) { return v.data() + c * plane(); }
    const double* data(int c) const { return v.data() + c * plane(); }
};

struct Conv {
    int in_ch = 0, out_ch = 0, k = 0;  // k x k kernels
    std::vector<double> w;             // [out][in][ky][kx]
    std::vector<double> b;             // [out]
};

// Encoder 1->8->16 (full res) ->16->16 (half res), 2x max downsampling after
// encoder layers 2 and 4; decoder mirrors with nearest-neighbor upsampling
// before decoder layers 1 and 3 and skip additions from the matching encoder
// depth; 1x1 head + logistic sigmoid.
struct ModelParams {
    std::vector<Conv> layers;  // enc1..enc4, dec1..dec4, head

    static ModelParams init(std::uint64_t seed);
    int param_count() const;
};

// Adam moment accumulators, same shapes as the parameters.
struct OptState {
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
    long t = 0;

    static OptState zeros_like(const ModelParams& p);
};

using ModelGrads = ModelParams;  // same container, gradient semantics

// Intermediate activations needed by backward; consumed by exactly one
// backward pass matching its forward.
struct ForwardCache {
    Volume x, a1, a2, p1, a3, a4, p2, u1, m1, d1, d2, u2, m2, d3, d4;
    std::vector<int> amax1, amax2;          // downsampling argmax (volume-linear)
    std::vector<std::uint8_t> relu_mask[8]; // per conv layer, pre-activation > 0
    Volume z;                                // head output (logits)
    std::vector<double> y;                   // sigmoid(z)

    // hash of every relu mask and pooling argmax; equal digests mean identical
    // branch decisions (tie-ambiguity detection for finite differences)
    std::uint64_t digest() const;
};

// image must be single-channel with height and width divisible by 4.
ProbMap forward(const ModelParams& params, const Map& image, ForwardCache* cache = nullptr);

// upstream = d loss / d prediction. Returns exact parameter gradients.
ModelGrads backward(const ModelParams& params, const ForwardCache& cache, const GradMap& upstream);

// Adam with bias correction folded into the step size:
//   lr_t = lr * sqrt(1-beta2^t) / (1-beta1^t);  p -= lr_t * m / (sqrt(v) + eps)
void adam_step(ModelParams& params, const ModelGrads& grads, OptState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7);

// Checkpoint: "BSEGNET1" magic, layer table (in_ch,out_ch,k per layer, u32 LE),
// then per layer weights and biases as little-endian float32.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace bseg::nn
