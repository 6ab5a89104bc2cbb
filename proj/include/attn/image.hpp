#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attn {

// 8-bit RGB raster, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // 3 bytes per pixel

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t* px(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* px(int x, int y) const {
        return &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
    }
    void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b);
    void fill_rect(int x, int y, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

// Minimal PNG I/O (8-bit RGB/RGBA, non-interlaced; RGBA alpha is dropped on
// read). Deflate via zlib.
void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

}  // namespace attn
