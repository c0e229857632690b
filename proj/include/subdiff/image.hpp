#pragma once

#include "subdiff/errors.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace subdiff {

/// 8-bit RGB raster, row 0 at the top.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image(int w, int h, std::array<std::uint8_t, 3> fill = {255, 255, 255})
        : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
        if (w < 1 || h < 1) throw ContractViolation("Image: empty raster");
        for (std::size_t i = 0; i < rgb.size(); i += 3) std::copy(fill.begin(), fill.end(), rgb.begin() + i);
    }

    void set(int x, int y, std::array<std::uint8_t, 3> c) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
        rgb[o] = c[0];
        rgb[o + 1] = c[1];
        rgb[o + 2] = c[2];
    }

    [[nodiscard]] std::array<std::uint8_t, 3> at(int x, int y) const {
        const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
        return {rgb[o], rgb[o + 1], rgb[o + 2]};
    }
};

namespace png_detail {

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace png_detail

inline std::vector<std::uint8_t> encode_png(const Image& img) {
    using namespace png_detail;
    std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(img.width));
    put_be32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB, no interlace
    chunk(out, "IHDR", ihdr);

    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), img.rgb.begin() + y * stride, img.rgb.begin() + (y + 1) * stride);
    }
    uLongf len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> z(len);
    if (compress2(z.data(), &len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw FormatError("encode_png: zlib compression failed");
    z.resize(len);
    chunk(out, "IDAT", z);
    chunk(out, "IEND", {});
    return out;
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::vector<std::uint8_t> bytes = encode_png(img);
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw FormatError("cannot write '" + path.string() + "'");
}

enum class Colormap { Sequential, Diverging };

/// t in [0, 1] -> RGB. Sequential is a viridis-like ramp, Diverging runs blue-white-red.
inline std::array<std::uint8_t, 3> colormap(double t, Colormap map) {
    static constexpr std::array<std::array<double, 3>, 5> seq{
        {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    static constexpr std::array<std::array<double, 3>, 3> div{{{33, 102, 172}, {247, 247, 247}, {178, 24, 43}}};
    if (!std::isfinite(t)) return {0, 0, 0};
    t = std::clamp(t, 0.0, 1.0);
    auto lerp = [t](const auto& stops) {
        const double pos = t * static_cast<double>(stops.size() - 1);
        const auto i = std::min(static_cast<std::size_t>(pos), stops.size() - 2);
        const double f = pos - static_cast<double>(i);
        std::array<std::uint8_t, 3> c{};
        for (int k = 0; k < 3; ++k) c[k] = static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
        return c;
    };
    return map == Colormap::Sequential ? lerp(seq) : lerp(div);
}

/**
 * values[i + nx * j] at column i, row j (j = 0 is the bottom edge). Each cell
 * becomes a `scale` x `scale` block. Diverging maps are centred on zero.
 */
inline Image heatmap(const std::vector<double>& values, int nx, int ny, Colormap map = Colormap::Sequential, int scale = 4) {
    if (nx < 1 || ny < 1 || values.size() != static_cast<std::size_t>(nx) * ny)
        throw ContractViolation("heatmap: value count does not match nx * ny");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : values)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (map == Colormap::Diverging) {
        const double m = std::max(std::abs(lo), std::abs(hi));
        lo = -m;
        hi = m;
    }
    const double span = hi > lo ? hi - lo : 1.0;
    Image img(nx * scale, ny * scale);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const auto c = colormap((values[static_cast<std::size_t>(i + nx * j)] - lo) / span, map);
            for (int a = 0; a < scale; ++a)
                for (int b = 0; b < scale; ++b) img.set(i * scale + a, (ny - 1 - j) * scale + b, c);
        }
    return img;
}

/// Curves on a log10 y axis against their index; light rules mark each decade.
inline Image loss_plot(const std::vector<std::vector<double>>& series, int width = 640, int height = 400) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 5> palette{
        {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189}}};
    Image img(width, height);
    const int margin = 20;
    std::size_t n = 0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : series) {
        n = std::max(n, s.size());
        for (double v : s)
            if (v > 0 && std::isfinite(v)) {
                lo = std::min(lo, std::log10(v));
                hi = std::max(hi, std::log10(v));
            }
    }
    if (n < 2 || !(hi >= lo)) return img;
    lo = std::floor(lo);
    hi = std::max(std::ceil(hi), lo + 1);
    const int pw = width - 2 * margin, ph = height - 2 * margin;
    auto ypix = [&](double lv) { return margin + static_cast<int>(std::lround((hi - lv) / (hi - lo) * ph)); };
    for (double d = lo; d <= hi; d += 1.0)
        for (int x = margin; x <= margin + pw; ++x) img.set(x, ypix(d), {220, 220, 220});
    for (int x = margin; x <= margin + pw; ++x) img.set(x, margin + ph, {0, 0, 0});
    for (int y = margin; y <= margin + ph; ++y) img.set(margin, y, {0, 0, 0});

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const auto color = palette[k % palette.size()];
        int px = -1, py = -1;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!(s[i] > 0 && std::isfinite(s[i]))) {
                px = -1;
                continue;
            }
            const int x = margin + static_cast<int>(std::lround(static_cast<double>(i) / static_cast<double>(n - 1) * pw));
            const int y = ypix(std::log10(s[i]));
            if (px >= 0) {
                const int steps = std::max(std::abs(x - px), std::abs(y - py));
                for (int t = 0; t <= steps; ++t) {
                    const double f = steps ? static_cast<double>(t) / steps : 0.0;
                    img.set(static_cast<int>(std::lround(px + f * (x - px))), static_cast<int>(std::lround(py + f * (y - py))), color);
                }
            } else {
                img.set(x, y, color);
            }
            px = x;
            py = y;
        }
    }
    return img;
}

}  // namespace subdiff
