#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bseg/grid.hpp"

namespace bseg::synth {

enum class ShapeKind { rectangle, rotated_rectangle, l_shape, ellipse };
enum class Texture { none, gradient, value_noise };

const char* shape_name(ShapeKind k);
ShapeKind shape_from_name(const std::string& name);
const char* texture_name(Texture t);
Texture texture_from_name(const std::string& name);

struct SynthConfig {
    int count = 800;
    int size = 64;  // square images
    std::vector<ShapeKind> shapes = {ShapeKind::rectangle, ShapeKind::rotated_rectangle,
                                     ShapeKind::l_shape, ShapeKind::ellipse};
    double min_area_fraction = 0.03;
    double max_area_fraction = 0.30;
    double noise_std = 0.05;
    Texture background = Texture::gradient;
    std::uint64_t seed = 0;
    double edge_touch_fraction = 0.25;  // fraction of samples whose shape meets the border
    void validate() const;
};

// One grayscale image with exactly one 4-connected foreground segment and its
// exact rasterized mask (the mask is never derived from the noisy image).
struct SynthSample {
    ProbMap image;
    BinaryMap mask;
    ShapeKind kind = ShapeKind::rectangle;
    int area = 0;
};

// Sample `index` is drawn from an RNG substream of (seed, index), so any
// sample is reproducible in isolation and generation order does not matter.
SynthSample generate_sample(const SynthConfig& cfg, int index);
std::vector<SynthSample> generate(const SynthConfig& cfg);

// Deterministic split by index order: first floor(n * train_fraction) samples
// train, the rest validation.
std::pair<std::vector<SynthSample>, std::vector<SynthSample>> split(std::vector<SynthSample> samples,
                                                                    double train_fraction);

// Writes image_%05d.pgm / mask_%05d.pgm pairs plus manifest.csv (index,kind,area).
void export_dataset(const std::vector<SynthSample>& samples, const std::string& dir);

// Reads back an exported dataset (images quantized to 8 bits by the export).
struct DatasetPair {
    ProbMap image;
    BinaryMap mask;
};
std::vector<DatasetPair> load_dataset(const std::string& dir);

}  // namespace bseg::synth
