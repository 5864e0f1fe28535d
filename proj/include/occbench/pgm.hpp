#pragma once

// Binary greyscale PGM ("P5", maxval 255).

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace occbench::pgm {

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels; // row-major, width*height

    bool operator==(const GrayImage&) const = default;
};

std::vector<std::uint8_t> encode(const GrayImage& img);
/// Throws IoError on malformed input.
GrayImage decode(std::span<const std::uint8_t> bytes);

void write(const std::filesystem::path& path, const GrayImage& img);
GrayImage read(const std::filesystem::path& path);

/// Places images side by side separated by `gap` columns of `gap_value`.
GrayImage hstack(std::span<const GrayImage> images, std::size_t gap = 2, std::uint8_t gap_value = 128);

} // namespace occbench::pgm
