#pragma once
// Grayscale heatmaps as binary PGM (P5, maxval 255).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fans/error.hpp"
#include "fans/vector.hpp"

namespace fans {

struct GrayImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

/// round(255 (s - min) / (max - min)); a constant mask maps to all zeros.
inline GrayImage mask_to_image(std::span<const double> s, std::size_t h, std::size_t w) {
    if (h * w != s.size())
        throw ShapeError("heatmap shape " + std::to_string(h) + "x" + std::to_string(w) + " does not match " +
                         std::to_string(s.size()) + " mask entries");
    if (!all_finite(s)) throw NumericError("heatmap: mask has non-finite entries");
    GrayImage img{h, w, std::vector<std::uint8_t>(s.size(), 0)};
    if (s.empty()) return img;
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    const double range = *hi - *lo;
    if (range > 0.0)
        for (std::size_t i = 0; i < s.size(); ++i)
            img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (s[i] - *lo) / range));
    return img;
}

inline std::string encode_pgm(const GrayImage& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(img.pixels.begin(), img.pixels.end());
    return out;
}

inline void write_pgm(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    const std::string bytes = encode_pgm(img);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline GrayImage decode_pgm(const std::string& bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw ParseError("pgm: truncated header");
        return bytes.substr(start, pos - start);
    };
    if (token() != "P5") throw MagicMismatchError("pgm: expected magic P5");
    GrayImage img;
    try {
        img.width = std::stoul(token());
        img.height = std::stoul(token());
        if (std::stoul(token()) != 255) throw ParseError("pgm: only maxval 255 is supported");
    } catch (const std::logic_error&) {
        throw ParseError("pgm: malformed header");
    }
    ++pos;  // single whitespace before the raster
    const std::size_t n = img.width * img.height;
    if (bytes.size() < pos + n) throw ParseError("pgm: truncated raster");
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    return img;
}

inline GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_pgm(buf.str());
}

}  // namespace fans
