#include "bseg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>

#include "bseg/rng.hpp"

namespace bseg::synth {

const char* shape_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::rectangle: return "rectangle";
        case ShapeKind::rotated_rectangle: return "rotated_rectangle";
        case ShapeKind::l_shape: return "l_shape";
        case ShapeKind::ellipse: return "ellipse";
    }
    return "?";
}

ShapeKind shape_from_name(const std::string& name) {
    if (name == "rectangle") return ShapeKind::rectangle;
    if (name == "rotated_rectangle") return ShapeKind::rotated_rectangle;
    if (name == "l_shape") return ShapeKind::l_shape;
    if (name == "ellipse") return ShapeKind::ellipse;
    throw std::invalid_argument("unknown shape kind: " + name);
}

const char* texture_name(Texture t) {
    switch (t) {
        case Texture::none: return "none";
        case Texture::gradient: return "gradient";
        case Texture::value_noise: return "value_noise";
    }
    return "?";
}

Texture texture_from_name(const std::string& name) {
    if (name == "none") return Texture::none;
    if (name == "gradient") return Texture::gradient;
    if (name == "value_noise") return Texture::value_noise;
    throw std::invalid_argument("unknown background texture: " + name);
}

void SynthConfig::validate() const {
    if (count < 1) throw std::invalid_argument("SynthConfig: count must be >= 1");
    if (size < 8) throw std::invalid_argument("SynthConfig: size must be >= 8");
    if (shapes.empty()) throw std::invalid_argument("SynthConfig: shapes must be non-empty");
    if (!(min_area_fraction > 0.0 && min_area_fraction < max_area_fraction && max_area_fraction < 1.0))
        throw std::invalid_argument("SynthConfig: need 0 < min_area_fraction < max_area_fraction < 1");
    if (noise_std < 0.0) throw std::invalid_argument("SynthConfig: noise_std must be >= 0");
    if (!(edge_touch_fraction >= 0.0 && edge_touch_fraction <= 1.0))
        throw std::invalid_argument("SynthConfig: edge_touch_fraction outside [0,1]");
}

namespace {

// continuous inclusion predicate; pixels are sampled at their centers
using Inside = std::function<bool(double x, double y)>;

struct ShapeDraw {
    Inside inside;
};

// half extents from a target area and random aspect
void area_to_extents(SplitMix64& rng, double target_area, double& hw, double& hh) {
    const double aspect = rng.uniform(0.4, 2.5);
    const double w = std::sqrt(target_area * aspect);
    hw = std::max(1.7, w / 2.0);
    hh = std::max(1.7, target_area / (2.0 * std::max(hw * 2.0, 1e-9)));
}

// center placement: strictly interior or crossing one border
void place_center(SplitMix64& rng, int size, double extent_x, double extent_y, bool edge, double& cx,
                  double& cy) {
    if (!edge) {
        const double lo_x = extent_x + 1.5, hi_x = size - extent_x - 1.5;
        const double lo_y = extent_y + 1.5, hi_y = size - extent_y - 1.5;
        cx = rng.uniform(std::min(lo_x, hi_x), std::max(lo_x, hi_x));
        cy = rng.uniform(std::min(lo_y, hi_y), std::max(lo_y, hi_y));
        return;
    }
    const int side = rng.uniform_int(0, 3);  // 0 left, 1 right, 2 top, 3 bottom
    const double along = rng.uniform(2.0, size - 2.0);
    const double cross = rng.uniform(-0.5 * std::min(extent_x, extent_y), 0.6 * std::min(extent_x, extent_y));
    switch (side) {
        case 0: cx = cross; cy = along; break;
        case 1: cx = size - cross; cy = along; break;
        case 2: cx = along; cy = cross; break;
        default: cx = along; cy = size - cross; break;
    }
}

ShapeDraw draw_shape(SplitMix64& rng, ShapeKind kind, int size, double target_area, bool edge) {
    ShapeDraw s;
    switch (kind) {
        case ShapeKind::rectangle: {
            double hw, hh, cx, cy;
            area_to_extents(rng, target_area, hw, hh);
            place_center(rng, size, hw, hh, edge, cx, cy);
            s.inside = [=](double x, double y) {
                return std::abs(x - cx) <= hw && std::abs(y - cy) <= hh;
            };
            break;
        }
        case ShapeKind::rotated_rectangle: {
            double hw, hh, cx, cy;
            area_to_extents(rng, target_area, hw, hh);
            const double phi = rng.uniform(0.0, 3.14159265358979323846);
            const double ex = std::abs(hw * std::cos(phi)) + std::abs(hh * std::sin(phi));
            const double ey = std::abs(hw * std::sin(phi)) + std::abs(hh * std::cos(phi));
            place_center(rng, size, ex, ey, edge, cx, cy);
            const double cphi = std::cos(phi), sphi = std::sin(phi);
            s.inside = [=](double x, double y) {
                const double u = cphi * (x - cx) + sphi * (y - cy);
                const double v = -sphi * (x - cx) + cphi * (y - cy);
                return std::abs(u) <= hw && std::abs(v) <= hh;
            };
            break;
        }
        case ShapeKind::l_shape: {
            // outer rectangle minus one corner notch
            double hw, hh, cx, cy;
            const double notch_fx = rng.uniform(0.35, 0.6);
            const double notch_fy = rng.uniform(0.35, 0.6);
            area_to_extents(rng, target_area / (1.0 - notch_fx * notch_fy), hw, hh);
            place_center(rng, size, hw, hh, edge, cx, cy);
            const int corner = rng.uniform_int(0, 3);
            const double nx = hw * 2.0 * notch_fx, ny = hh * 2.0 * notch_fy;
            s.inside = [=](double x, double y) {
                const double u = x - cx, v = y - cy;
                if (std::abs(u) > hw || std::abs(v) > hh) return false;
                const double du = corner % 2 == 0 ? hw - u : u + hw;   // distance from notch x-edge
                const double dv = corner / 2 == 0 ? hh - v : v + hh;   // distance from notch y-edge
                return !(du < nx && dv < ny);
            };
            break;
        }
        case ShapeKind::ellipse: {
            const double aspect = rng.uniform(0.5, 2.0);
            double a = std::sqrt(target_area * aspect / 3.14159265358979323846);
            double b = target_area / (3.14159265358979323846 * a);
            a = std::max(a, 1.8);
            b = std::max(b, 1.8);
            const double phi = rng.uniform(0.0, 3.14159265358979323846);
            const double cphi = std::cos(phi), sphi = std::sin(phi);
            const double ex = std::sqrt(a * a * cphi * cphi + b * b * sphi * sphi);
            const double ey = std::sqrt(a * a * sphi * sphi + b * b * cphi * cphi);
            double cx, cy;
            place_center(rng, size, ex, ey, edge, cx, cy);
            s.inside = [=](double x, double y) {
                const double u = (cphi * (x - cx) + sphi * (y - cy)) / a;
                const double v = (-sphi * (x - cx) + cphi * (y - cy)) / b;
                return u * u + v * v <= 1.0;
            };
            break;
        }
    }
    return s;
}

int rasterize(const Inside& inside, int size, Map& mask) {
    int area = 0;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const bool in = inside(c + 0.5, r + 0.5);
            mask.at(r, c) = in ? 1.0 : 0.0;
            area += in;
        }
    return area;
}

bool touches_border(const Map& mask) {
    const int h = mask.height, w = mask.width;
    for (int c = 0; c < w; ++c)
        if (mask.at(0, c) == 1.0 || mask.at(h - 1, c) == 1.0) return true;
    for (int r = 0; r < h; ++r)
        if (mask.at(r, 0) == 1.0 || mask.at(r, w - 1) == 1.0) return true;
    return false;
}

// 4-connected component count via flood fill
int component_count(const Map& mask) {
    const int h = mask.height, w = mask.width;
    std::vector<std::uint8_t> seen(mask.values.size(), 0);
    std::vector<int> stack;
    int components = 0;
    for (int i = 0; i < mask.size(); ++i) {
        if (mask.values[i] != 1.0 || seen[i]) continue;
        ++components;
        stack.push_back(i);
        seen[i] = 1;
        while (!stack.empty()) {
            const int cur = stack.back();
            stack.pop_back();
            const int r = cur / w, c = cur % w;
            const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (auto& n : nbr) {
                if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
                const int j = n[0] * w + n[1];
                if (mask.values[j] == 1.0 && !seen[j]) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
    }
    return components;
}

Map render_background(SplitMix64& rng, Texture texture, int size) {
    Map bg(size, size);
    switch (texture) {
        case Texture::none: {
            const double level = rng.uniform(0.08, 0.42);
            std::fill(bg.values.begin(), bg.values.end(), level);
            break;
        }
        case Texture::gradient: {
            const double c00 = rng.uniform(0.05, 0.45), c01 = rng.uniform(0.05, 0.45);
            const double c10 = rng.uniform(0.05, 0.45), c11 = rng.uniform(0.05, 0.45);
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c) {
                    const double fy = size == 1 ? 0.0 : double(r) / (size - 1);
                    const double fx = size == 1 ? 0.0 : double(c) / (size - 1);
                    bg.at(r, c) = (1 - fy) * ((1 - fx) * c00 + fx * c01) + fy * ((1 - fx) * c10 + fx * c11);
                }
            break;
        }
        case Texture::value_noise: {
            const int n = 5;  // coarse lattice, bilinear upsample
            std::vector<double> lattice(n * n);
            for (double& v : lattice) v = rng.uniform(0.05, 0.45);
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c) {
                    const double gy = double(r) / (size - 1) * (n - 1);
                    const double gx = double(c) / (size - 1) * (n - 1);
                    const int y0 = std::min(int(gy), n - 2), x0 = std::min(int(gx), n - 2);
                    const double fy = gy - y0, fx = gx - x0;
                    bg.at(r, c) = (1 - fy) * ((1 - fx) * lattice[y0 * n + x0] + fx * lattice[y0 * n + x0 + 1]) +
                                  fy * ((1 - fx) * lattice[(y0 + 1) * n + x0] + fx * lattice[(y0 + 1) * n + x0 + 1]);
                }
            break;
        }
    }
    return bg;
}

constexpr int kMaxAttempts = 1000;

}  // namespace

SynthSample generate_sample(const SynthConfig& cfg, int index) {
    cfg.validate();
    SplitMix64 rng(substream_seed(cfg.seed, static_cast<std::uint64_t>(index)));
    const bool edge = rng.bernoulli(cfg.edge_touch_fraction);

    const double min_area = cfg.min_area_fraction * cfg.size * cfg.size;
    const double max_area = cfg.max_area_fraction * cfg.size * cfg.size;

    Map mask(cfg.size, cfg.size);
    ShapeKind kind = cfg.shapes.front();
    int area = 0;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
        kind = cfg.shapes[rng.uniform_int(0, static_cast<int>(cfg.shapes.size()) - 1)];
        double target = rng.uniform(min_area, max_area);
        if (edge) target = std::min(target * 1.5, max_area * 1.8);  // offset clipping losses
        const ShapeDraw shape = draw_shape(rng, kind, cfg.size, target, edge);
        area = rasterize(shape.inside, cfg.size, mask);
        ok = area >= min_area && area <= max_area && touches_border(mask) == edge &&
             component_count(mask) == 1;
    }
    if (!ok)
        throw std::runtime_error("synthgen: constraints unsatisfiable for sample " + std::to_string(index));

    Map image = render_background(rng, cfg.background, cfg.size);
    const double fg = rng.uniform(0.58, 0.92);
    for (int i = 0; i < mask.size(); ++i)
        if (mask.values[i] == 1.0) image.values[i] = fg;
    if (cfg.noise_std > 0.0) {
        for (double& v : image.values) {
            v += rng.gaussian(cfg.noise_std);
            v = std::min(1.0, std::max(0.0, v));
        }
    }

    SynthSample s;
    s.image = ProbMap(std::move(image));
    s.mask = BinaryMap(std::move(mask));
    s.kind = kind;
    s.area = area;
    return s;
}

std::vector<SynthSample> generate(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<SynthSample> out;
    out.reserve(cfg.count);
    for (int i = 0; i < cfg.count; ++i) out.push_back(generate_sample(cfg, i));
    return out;
}

std::pair<std::vector<SynthSample>, std::vector<SynthSample>> split(std::vector<SynthSample> samples,
                                                                    double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must lie in (0,1)");
    const std::size_t n_train = static_cast<std::size_t>(std::floor(samples.size() * train_fraction));
    std::vector<SynthSample> val(std::make_move_iterator(samples.begin() + n_train),
                                 std::make_move_iterator(samples.end()));
    samples.resize(n_train);
    return {std::move(samples), std::move(val)};
}

void export_dataset(const std::vector<SynthSample>& samples, const std::string& dir) {
    std::filesystem::create_directories(dir);
    char name[64];
    std::ofstream manifest(dir + "/manifest.csv");
    if (!manifest) throw std::runtime_error("cannot write manifest: " + dir);
    manifest << "index,kind,area\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(name, sizeof name, "/image_%05zu.pgm", i);
        save_map(samples[i].image, dir + name);
        std::snprintf(name, sizeof name, "/mask_%05zu.pgm", i);
        save_map(samples[i].mask, dir + name);
        manifest << i << ',' << shape_name(samples[i].kind) << ',' << samples[i].area << '\n';
    }
    if (!manifest) throw std::runtime_error("manifest write failure: " + dir);
}

std::vector<DatasetPair> load_dataset(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.csv");
    if (!manifest) throw std::runtime_error("cannot open manifest: " + dir + "/manifest.csv");
    std::string line;
    std::getline(manifest, line);  // header
    std::vector<DatasetPair> out;
    char name[64];
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const std::size_t i = out.size();
        std::snprintf(name, sizeof name, "/image_%05zu.pgm", i);
        DatasetPair pair;
        pair.image = load_gray(dir + name);
        std::snprintf(name, sizeof name, "/mask_%05zu.pgm", i);
        pair.mask = load_mask(dir + name);
        out.push_back(std::move(pair));
    }
    if (out.empty()) throw std::runtime_error("empty dataset: " + dir);
    return out;
}

}  // namespace bseg::synth
