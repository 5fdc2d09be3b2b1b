#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bseg {

// Real-valued H x W grid, row-major, origin at top-left.
struct Map {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    Map() = default;
    Map(int h, int w, double fill = 0.0);
    static Map from_values(int h, int w, std::vector<double> v);

    std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r) * width + c; }
    double at(int r, int c) const { return values[idx(r, c)]; }
    double& at(int r, int c) { return values[idx(r, c)]; }
    int size() const { return height * width; }
    bool same_shape(const Map& o) const { return height == o.height && width == o.width; }
};

// Prediction map y_pd: every value in [0,1].
struct ProbMap : Map {
    ProbMap() = default;
    explicit ProbMap(Map m);
    ProbMap(int h, int w, double fill = 0.0) : ProbMap(Map(h, w, fill)) {}
};

// Hard map y_gt or thresholded prediction: values exactly 0 or 1 (stored as doubles).
struct BinaryMap : Map {
    BinaryMap() = default;
    explicit BinaryMap(Map m);
    BinaryMap(int h, int w, double fill = 0.0) : BinaryMap(Map(h, w, fill)) {}
    int foreground_count() const;
};

// Gradient of a scalar loss w.r.t. every pixel of a ProbMap; all values finite.
struct GradMap : Map {
    GradMap() = default;
    explicit GradMap(Map m);
    GradMap(int h, int w, double fill = 0.0) : GradMap(Map(h, w, fill)) {}
};

// Raster I/O. Formats: 8-bit grayscale PGM (P5) and 8-bit grayscale PNG.
// load_mask sniffs the format from the file's magic bytes and thresholds
// at the byte midpoint: value >= 128 -> 1, else 0.
BinaryMap load_mask(const std::string& path);

// Writes an 8-bit grayscale raster; format chosen by extension (.pgm or .png).
// Values are quantized as round(v * 255), round-half-up. A BinaryMap round-trips
// through save_map/load_mask unchanged.
void save_map(const Map& m, const std::string& path);

// output[i] = 1 iff p[i] >= t; t must lie in (0,1).
BinaryMap threshold(const ProbMap& p, double t);

}  // namespace bseg
