#pragma once

#include <string>
#include <vector>

namespace mbsmith::cli {

// Square RGB float image, rows stored top to bottom.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;

    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.0f) {}
    float* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const float* pixel(int x, int y) const { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
};

// "PF\n<w> <h>\n-1.0\n" then little-endian floats, bottom row first.
std::string encode_pfm(const Image& img);
// Binary P6, values clamped to [0, 1] and gamma 2.2 encoded.
std::string encode_ppm(const Image& img);

// Picks PPM for a ".ppm" suffix and PFM otherwise. Throws IoError.
void write_image(const std::string& path, const Image& img);

}  // namespace mbsmith::cli
