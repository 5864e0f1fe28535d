#pragma once

#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "occbench/mnist.hpp"

namespace testing {

/// MNIST directory from $OCCBENCH_DATA or the configured default, if the files are there.
inline std::optional<std::filesystem::path> mnist_dir() {
    std::filesystem::path dir;
    if (const char* env = std::getenv("OCCBENCH_DATA"); env != nullptr && *env != '\0') {
        dir = env;
    } else {
        dir = OCCBENCH_TEST_DATA_DIR;
    }
    try {
        occbench::data::find_idx_file(dir, "train-images-idx3-ubyte");
        occbench::data::find_idx_file(dir, "t10k-labels-idx1-ubyte");
        return dir;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("occbench-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::vector<std::uint8_t> be32(std::uint32_t v) {
    return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
            static_cast<std::uint8_t>(v)};
}

/// Writes a small synthetic MNIST-like dataset (IDX files, train + t10k) where
/// the digit is encoded by a bright stroke: vertical bar for 1, ring for 0,
/// diagonal for the rest. Returns the directory.
inline std::filesystem::path write_synthetic_mnist(const std::filesystem::path& dir, std::size_t n_train,
                                                   std::size_t n_test, std::uint64_t seed) {
    using occbench::data::ByteGrid;
    std::mt19937_64 rng(seed);
    auto make = [&](std::size_t n, const std::string& prefix) {
        std::vector<ByteGrid> images;
        std::vector<std::uint8_t> labels;
        for (std::size_t i = 0; i < n; ++i) {
            const int label = static_cast<int>(rng() % 10);
            ByteGrid g{28, 28, std::vector<std::uint8_t>(784, 0)};
            const int jitter = static_cast<int>(rng() % 5) - 2;
            for (int r = 4; r < 24; ++r) {
                for (int c = 4; c < 24; ++c) {
                    bool on = false;
                    if (label == 1) {
                        on = c >= 13 + jitter && c <= 15 + jitter;
                    } else if (label == 0) {
                        const int dr = r - 14, dc = c - 14 - jitter;
                        const int d2 = dr * dr + dc * dc;
                        on = d2 >= 36 && d2 <= 64;
                    } else {
                        on = std::abs((r - 4) * (label % 3 + 1) / 2 - (c - 4) + jitter) <= 1 + label % 2;
                    }
                    if (on) {
                        g.pixels[static_cast<std::size_t>(r * 28 + c)] = static_cast<std::uint8_t>(180 + rng() % 76);
                    }
                }
            }
            images.push_back(std::move(g));
            labels.push_back(static_cast<std::uint8_t>(label));
        }
        auto write = [&](const std::string& name, const std::vector<std::uint8_t>& bytes) {
            std::ofstream f(dir / name, std::ios::binary);
            f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        };
        write(prefix + "-images-idx3-ubyte", occbench::data::serialize_idx_images(images));
        write(prefix + "-labels-idx1-ubyte", occbench::data::serialize_idx_labels(labels));
    };
    std::filesystem::create_directories(dir);
    make(n_train, "train");
    make(n_test, "t10k");
    return dir;
}

} // namespace testing
