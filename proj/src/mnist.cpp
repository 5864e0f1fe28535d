#include "occbench/mnist.hpp"

#include <zlib.h>

#include <array>
#include <memory>

namespace occbench::data {

namespace {

std::uint32_t read_be_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    if (bytes.size() < offset + 4) {
        throw Error(ErrorCode::TruncatedFile, "header ends at byte " + std::to_string(bytes.size()));
    }
    return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
           (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

void write_be_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

void check_magic(std::uint32_t got, std::uint32_t want) {
    if (got != want) {
        throw Error(ErrorCode::WrongMagic,
                    "expected magic " + std::to_string(want) + ", found " + std::to_string(got));
    }
}

} // namespace

void RawDataset::validate() const {
    if (images.size() != labels.size()) {
        throw Error(ErrorCode::ShapeMismatch, std::to_string(images.size()) + " images but " +
                                                  std::to_string(labels.size()) + " labels");
    }
    for (auto l : labels) {
        if (l > 9) {
            throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(l));
        }
    }
}

std::vector<ByteGrid> parse_idx_images(std::span<const std::uint8_t> bytes) {
    check_magic(read_be_u32(bytes, 0), kImageMagic);
    const std::size_t count = read_be_u32(bytes, 4);
    const std::size_t rows = read_be_u32(bytes, 8);
    const std::size_t cols = read_be_u32(bytes, 12);
    const std::size_t grid = rows * cols;
    const std::size_t payload = bytes.size() - 16;
    if (payload < count * grid) {
        throw Error(ErrorCode::TruncatedFile, "header promises " + std::to_string(count * grid) +
                                                  " pixel bytes, file holds " + std::to_string(payload));
    }
    std::vector<ByteGrid> out(count);
    auto it = bytes.begin() + 16;
    for (auto& g : out) {
        g.rows = rows;
        g.cols = cols;
        g.pixels.assign(it, it + static_cast<std::ptrdiff_t>(grid));
        it += static_cast<std::ptrdiff_t>(grid);
    }
    return out;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
    check_magic(read_be_u32(bytes, 0), kLabelMagic);
    const std::size_t count = read_be_u32(bytes, 4);
    if (bytes.size() - 8 < count) {
        throw Error(ErrorCode::TruncatedFile, "header promises " + std::to_string(count) +
                                                  " labels, file holds " + std::to_string(bytes.size() - 8));
    }
    std::vector<std::uint8_t> out(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] > 9) {
            throw Error(ErrorCode::LabelOutOfRange,
                        "label " + std::to_string(out[i]) + " at index " + std::to_string(i));
        }
    }
    return out;
}

std::vector<std::uint8_t> serialize_idx_images(std::span<const ByteGrid> images) {
    const std::size_t rows = images.empty() ? 0 : images.front().rows;
    const std::size_t cols = images.empty() ? 0 : images.front().cols;
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.size() * rows * cols);
    write_be_u32(out, kImageMagic);
    write_be_u32(out, static_cast<std::uint32_t>(images.size()));
    write_be_u32(out, static_cast<std::uint32_t>(rows));
    write_be_u32(out, static_cast<std::uint32_t>(cols));
    for (const auto& g : images) {
        if (g.rows != rows || g.cols != cols) {
            throw Error(ErrorCode::ShapeMismatch, "images of differing shapes");
        }
        out.insert(out.end(), g.pixels.begin(), g.pixels.end());
    }
    return out;
}

std::vector<std::uint8_t> serialize_idx_labels(std::span<const std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.size());
    write_be_u32(out, kLabelMagic);
    write_be_u32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    // gzread passes uncompressed files through unchanged.
    std::unique_ptr<gzFile_s, decltype(&gzclose)> f(gzopen(path.c_str(), "rb"), &gzclose);
    if (!f) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> out;
    std::array<std::uint8_t, 1 << 16> buf{};
    for (;;) {
        const int n = gzread(f.get(), buf.data(), static_cast<unsigned>(buf.size()));
        if (n < 0) {
            throw Error(ErrorCode::IoError, "read failed for " + path.string());
        }
        if (n == 0) {
            break;
        }
        out.insert(out.end(), buf.begin(), buf.begin() + n);
    }
    return out;
}

std::filesystem::path find_idx_file(const std::filesystem::path& dir, const std::string& name) {
    for (const auto& candidate : {dir / name, dir / (name + ".gz")}) {
        if (std::filesystem::is_regular_file(candidate)) {
            return candidate;
        }
    }
    throw Error(ErrorCode::IoError, "missing IDX file " + (dir / name).string() + " (or .gz)");
}

RawDataset load_raw(const std::filesystem::path& dir, Split split) {
    const std::string prefix = split == Split::Train ? "train" : "t10k";
    RawDataset raw;
    raw.images = parse_idx_images(read_file_bytes(find_idx_file(dir, prefix + "-images-idx3-ubyte")));
    raw.labels = parse_idx_labels(read_file_bytes(find_idx_file(dir, prefix + "-labels-idx1-ubyte")));
    raw.validate();
    return raw;
}

RawDataset filter_digits(const RawDataset& raw, const std::set<int>& keep) {
    if (keep.empty()) {
        throw Error(ErrorCode::InvalidConfig, "filter_digits needs a nonempty digit set");
    }
    RawDataset out;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (keep.contains(raw.labels[i])) {
            out.images.push_back(raw.images[i]);
            out.labels.push_back(raw.labels[i]);
        }
    }
    if (out.labels.empty()) {
        throw Error(ErrorCode::EmptyResult, "no example carries one of the requested digits");
    }
    return out;
}

Dataset normalize(const RawDataset& raw, double shift, double scale) {
    if (!(scale > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "normalization scale must be positive");
    }
    raw.validate();
    const std::size_t rows = raw.images.empty() ? 0 : raw.images.front().rows;
    const std::size_t cols = raw.images.empty() ? 0 : raw.images.front().cols;

    // One lookup per byte value keeps every occurrence bitwise identical.
    std::array<float, 256> lut{};
    for (int v = 0; v < 256; ++v) {
        lut[v] = static_cast<float>((v / 255.0 - shift) / scale);
    }

    std::vector<float> pixels;
    pixels.reserve(raw.size() * rows * cols);
    std::vector<int> labels;
    labels.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto& g = raw.images[i];
        if (g.rows != rows || g.cols != cols) {
            throw Error(ErrorCode::ShapeMismatch, "image " + std::to_string(i) + " has a different shape");
        }
        for (auto p : g.pixels) {
            pixels.push_back(lut[p]);
        }
        labels.push_back(raw.labels[i]);
    }
    return Dataset(rows, cols, std::move(pixels), std::move(labels));
}

DatasetStats dataset_stats(std::size_t rows, std::size_t cols, std::span<const float> pixels) {
    const std::size_t features = rows * cols;
    if (features == 0 || pixels.empty() || pixels.size() % features != 0) {
        throw Error(ErrorCode::EmptyInput, "dataset_stats needs at least one example");
    }
    const std::size_t n = pixels.size() / features;
    DatasetStats stats;
    stats.per_pixel_mean.assign(features, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < features; ++j) {
            stats.per_pixel_mean[j] += pixels[i * features + j];
        }
    }
    double total = 0.0;
    for (auto& m : stats.per_pixel_mean) {
        total += m;
        m /= static_cast<double>(n);
    }
    stats.mean = total / static_cast<double>(pixels.size());
    return stats;
}

DatasetStats dataset_stats(const Dataset& ds) {
    return dataset_stats(ds.rows(), ds.cols(), ds.pixels());
}

Dataset::Dataset(std::size_t rows, std::size_t cols, std::vector<float> pixels, std::vector<int> labels)
    : rows_(rows), cols_(cols), pixels_(std::move(pixels)), labels_(std::move(labels)) {
    if (pixels_.size() != labels_.size() * rows_ * cols_) {
        throw Error(ErrorCode::ShapeMismatch, "pixel buffer does not match label count");
    }
    if (!labels_.empty()) {
        stats_ = dataset_stats(rows_, cols_, pixels_);
    }
}

Example Dataset::example(std::size_t i) const {
    auto img = image(i);
    return Example{Tensor<float>({rows_, cols_}, std::vector<float>(img.begin(), img.end())), labels_[i]};
}

Dataset Dataset::head(std::size_t n) const {
    n = std::min(n, size());
    std::vector<float> px(pixels_.begin(), pixels_.begin() + static_cast<std::ptrdiff_t>(n * features()));
    std::vector<int> lb(labels_.begin(), labels_.begin() + static_cast<std::ptrdiff_t>(n));
    return Dataset(rows_, cols_, std::move(px), std::move(lb));
}

} // namespace occbench::data
