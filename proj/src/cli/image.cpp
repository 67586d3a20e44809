#include "image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "config.hpp"

namespace mbsmith::cli {

std::string encode_pfm(const Image& img) {
    std::string out = "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
    const std::size_t header = out.size();
    out.resize(header + img.rgb.size() * 4);
    char* dst = out.data() + header;
    for (int y = img.height - 1; y >= 0; --y) {
        const float* row = img.pixel(0, y);
        for (int i = 0; i < img.width * 3; ++i) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(row[i]);
            if constexpr (std::endian::native == std::endian::big)
                bits = (bits >> 24) | ((bits >> 8) & 0xff00u) | ((bits << 8) & 0xff0000u) | (bits << 24);
            std::memcpy(dst, &bits, 4);
            dst += 4;
        }
    }
    return out;
}

std::string encode_ppm(const Image& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.rgb.size());
    for (const float v : img.rgb) {
        const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::pow(c, 1.0 / 2.2)))));
    }
    return out;
}

void write_image(const std::string& path, const Image& img) {
    const bool ppm = path.size() >= 4 && path.compare(path.size() - 4, 4, ".ppm") == 0;
    const std::string bytes = ppm ? encode_ppm(img) : encode_pfm(img);
    std::ofstream f(path, std::ios::binary);
    if (!f || !f.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
        throw IoError("cannot write " + path);
}

}  // namespace mbsmith::cli
