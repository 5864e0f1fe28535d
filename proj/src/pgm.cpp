#include "occbench/pgm.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "occbench/error.hpp"

namespace occbench::pgm {

std::vector<std::uint8_t> encode(const GrayImage& img) {
    if (img.pixels.size() != img.width * img.height) {
        throw Error(ErrorCode::ShapeMismatch, "pixel count does not match width*height");
    }
    const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

GrayImage decode(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&] {
        skip_space();
        std::size_t v = 0;
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
        }
        if (pos == start) {
            throw Error(ErrorCode::IoError, "malformed PGM header");
        }
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw Error(ErrorCode::IoError, "not a binary PGM (P5) image");
    }
    pos = 2;
    GrayImage img;
    img.width = number();
    img.height = number();
    if (number() != 255) {
        throw Error(ErrorCode::IoError, "only maxval 255 is supported");
    }
    ++pos; // single whitespace before the raster
    if (bytes.size() < pos + img.width * img.height) {
        throw Error(ErrorCode::IoError, "PGM raster truncated");
    }
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + img.width * img.height));
    return img;
}

void write(const std::filesystem::path& path, const GrayImage& img) {
    const auto bytes = encode(img);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
}

GrayImage read(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

GrayImage hstack(std::span<const GrayImage> images, std::size_t gap, std::uint8_t gap_value) {
    GrayImage out;
    if (images.empty()) {
        return out;
    }
    out.height = images.front().height;
    for (const auto& im : images) {
        if (im.height != out.height) {
            throw Error(ErrorCode::ShapeMismatch, "hstack needs equal heights");
        }
        out.width += im.width;
    }
    out.width += gap * (images.size() - 1);
    out.pixels.assign(out.width * out.height, gap_value);
    std::size_t x0 = 0;
    for (const auto& im : images) {
        for (std::size_t r = 0; r < im.height; ++r) {
            std::copy_n(im.pixels.begin() + static_cast<std::ptrdiff_t>(r * im.width), im.width,
                        out.pixels.begin() + static_cast<std::ptrdiff_t>(r * out.width + x0));
        }
        x0 += im.width + gap;
    }
    return out;
}

} // namespace occbench::pgm
