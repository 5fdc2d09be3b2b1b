#include "bseg/grid.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace bseg {

Map::Map(int h, int w, double fill) {
    if (h < 1 || w < 1) throw std::invalid_argument("Map: height and width must be >= 1");
    height = h;
    width = w;
    values.assign(static_cast<std::size_t>(h) * w, fill);
}

Map Map::from_values(int h, int w, std::vector<double> v) {
    if (h < 1 || w < 1) throw std::invalid_argument("Map: height and width must be >= 1");
    if (v.size() != static_cast<std::size_t>(h) * w)
        throw std::invalid_argument("Map: values length does not match height*width");
    Map m;
    m.height = h;
    m.width = w;
    m.values = std::move(v);
    return m;
}

ProbMap::ProbMap(Map m) : Map(std::move(m)) {
    if (height < 1 || width < 1) throw std::invalid_argument("ProbMap: empty map");
    for (double v : values)
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("ProbMap: value outside [0,1]");
}

BinaryMap::BinaryMap(Map m) : Map(std::move(m)) {
    if (height < 1 || width < 1) throw std::invalid_argument("BinaryMap: empty map");
    for (double v : values)
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("BinaryMap: value not in {0,1}");
}

int BinaryMap::foreground_count() const {
    int n = 0;
    for (double v : values) n += (v == 1.0);
    return n;
}

GradMap::GradMap(Map m) : Map(std::move(m)) {
    if (height < 1 || width < 1) throw std::invalid_argument("GradMap: empty map");
    for (double v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("GradMap: non-finite value");
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// ---- PGM (P5, maxval <= 255) ----

int pgm_read_token(std::FILE* f) {
    // skips whitespace and '#' comments, returns next non-negative integer
    int c = std::fgetc(f);
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = std::fgetc(f);
        } else if (!std::isspace(c)) {
            break;
        }
        c = std::fgetc(f);
    }
    if (c == EOF || !std::isdigit(c)) throw std::runtime_error("PGM: malformed header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1 << 20) throw std::runtime_error("PGM: header value out of range");
        c = std::fgetc(f);
    }
    return v;
}

std::vector<unsigned char> read_pgm(const std::string& path, int& w, int& h) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open file: " + path);
    char magic[2];
    if (std::fread(magic, 1, 2, f.get()) != 2 || magic[0] != 'P' || magic[1] != '5')
        throw std::runtime_error("PGM: not a P5 file: " + path);
    w = pgm_read_token(f.get());
    h = pgm_read_token(f.get());
    int maxval = pgm_read_token(f.get());
    if (w < 1 || h < 1) throw std::runtime_error("PGM: zero-size image: " + path);
    if (maxval < 1 || maxval > 255) throw std::runtime_error("PGM: unsupported bit depth: " + path);
    std::vector<unsigned char> data(static_cast<std::size_t>(w) * h);
    if (std::fread(data.data(), 1, data.size(), f.get()) != data.size())
        throw std::runtime_error("PGM: truncated pixel data: " + path);
    return data;
}

void write_pgm(const std::string& path, const unsigned char* data, int w, int h) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open file for writing: " + path);
    if (std::fprintf(f.get(), "P5\n%d %d\n255\n", w, h) < 0)
        throw std::runtime_error("PGM: write failure: " + path);
    std::size_t n = static_cast<std::size_t>(w) * h;
    if (std::fwrite(data, 1, n, f.get()) != n)
        throw std::runtime_error("PGM: write failure: " + path);
}

// ---- PNG (8-bit grayscale only) ----

std::vector<unsigned char> read_png(const std::string& path, int& w, int& h) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("PNG: init failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("PNG: init failure");
    }
    std::vector<unsigned char> data;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("PNG: read failure: " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);
    if (w < 1 || h < 1) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("PNG: zero-size image: " + path);
    }
    if (depth != 8 || color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("PNG: unsupported bit depth or color type (need 8-bit grayscale): " + path);
    }

    data.resize(static_cast<std::size_t>(w) * h);
    std::vector<png_bytep> rows(h);
    for (int r = 0; r < h; ++r) rows[r] = data.data() + static_cast<std::size_t>(r) * w;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return data;
}

void write_png(const std::string& path, const unsigned char* data, int w, int h) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open file for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("PNG: init failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("PNG: init failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG: write failure: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(h);
    for (int r = 0; r < h; ++r)
        rows[r] = const_cast<png_bytep>(data + static_cast<std::size_t>(r) * w);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

BinaryMap load_mask(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw std::runtime_error("cannot open file: " + path);
    unsigned char magic[2] = {0, 0};
    probe.read(reinterpret_cast<char*>(magic), 2);
    probe.close();

    int w = 0, h = 0;
    std::vector<unsigned char> data;
    if (magic[0] == 'P' && magic[1] == '5') {
        data = read_pgm(path, w, h);
    } else if (magic[0] == 0x89 && magic[1] == 'P') {
        data = read_png(path, w, h);
    } else {
        throw std::runtime_error("unsupported raster format (need P5 PGM or PNG): " + path);
    }

    Map m(h, w);
    for (std::size_t i = 0; i < data.size(); ++i) m.values[i] = data[i] >= 128 ? 1.0 : 0.0;
    return BinaryMap(std::move(m));
}

void save_map(const Map& m, const std::string& path) {
    if (m.height < 1 || m.width < 1) throw std::invalid_argument("save_map: empty map");
    std::vector<unsigned char> bytes(m.values.size());
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        double v = m.values[i];
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        bytes[i] = static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
    }
    if (has_suffix(path, ".pgm")) {
        write_pgm(path, bytes.data(), m.width, m.height);
    } else if (has_suffix(path, ".png")) {
        write_png(path, bytes.data(), m.width, m.height);
    } else {
        throw std::runtime_error("save_map: unknown extension (use .pgm or .png): " + path);
    }
}

BinaryMap threshold(const ProbMap& p, double t) {
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("threshold: t must lie in (0,1)");
    Map out(p.height, p.width);
    for (std::size_t i = 0; i < p.values.size(); ++i) out.values[i] = p.values[i] >= t ? 1.0 : 0.0;
    return BinaryMap(std::move(out));
}

}  // namespace bseg
