#pragma once

// MNIST ingestion. File layout (all integers big-endian):
//
//   images: 0x00000803 | count | rows | cols | count*rows*cols bytes
//   labels: 0x00000801 | count | count bytes
//
// Pixels are row-major, 0 = background, 255 = foreground.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "occbench/tensor.hpp"

namespace occbench::data {

inline constexpr std::uint32_t kImageMagic = 0x00000803; // 2051
inline constexpr std::uint32_t kLabelMagic = 0x00000801; // 2049

inline constexpr double kDefaultShift = 0.1307;
inline constexpr double kDefaultScale = 0.3081;

struct ByteGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels; // rows*cols, row-major

    std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
    bool operator==(const ByteGrid&) const = default;
};

struct RawDataset {
    std::vector<ByteGrid> images;
    std::vector<std::uint8_t> labels;

    std::size_t size() const { return labels.size(); }
    /// Throws ShapeMismatch / LabelOutOfRange when the invariants are broken.
    void validate() const;
};

struct DatasetStats {
    double mean = 0.0;                 // global scalar mean over every pixel
    std::vector<double> per_pixel_mean; // rows*cols grid
};

struct Example {
    Tensor<float> x; // [rows, cols]
    int label = 0;
};

/// Normalized examples stored contiguously; immutable after construction.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t rows, std::size_t cols, std::vector<float> pixels, std::vector<int> labels);

    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t features() const { return rows_ * cols_; }

    std::span<const float> image(std::size_t i) const {
        return {pixels_.data() + i * features(), features()};
    }
    int label(std::size_t i) const { return labels_[i]; }
    Example example(std::size_t i) const;

    std::span<const float> pixels() const { return pixels_; }
    std::span<const int> labels() const { return labels_; }
    const DatasetStats& stats() const { return stats_; }

    /// First `n` examples (or all, when n >= size()). Stats are recomputed.
    Dataset head(std::size_t n) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> pixels_;
    std::vector<int> labels_;
    DatasetStats stats_;
};

std::vector<ByteGrid> parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize_idx_images(std::span<const ByteGrid> images);
std::vector<std::uint8_t> serialize_idx_labels(std::span<const std::uint8_t> labels);

/// Reads a whole file; gzip-compressed files are inflated transparently.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Locates `name` or `name.gz` under `dir`; throws IoError naming the path.
std::filesystem::path find_idx_file(const std::filesystem::path& dir, const std::string& name);

enum class Split { Train, Test };
RawDataset load_raw(const std::filesystem::path& dir, Split split);

RawDataset filter_digits(const RawDataset& raw, const std::set<int>& keep);

Dataset normalize(const RawDataset& raw, double shift = kDefaultShift, double scale = kDefaultScale);

DatasetStats dataset_stats(const Dataset& ds);
DatasetStats dataset_stats(std::size_t rows, std::size_t cols, std::span<const float> pixels);

} // namespace occbench::data
