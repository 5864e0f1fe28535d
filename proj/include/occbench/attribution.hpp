#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "occbench/model.hpp"
#include "occbench/pgm.hpp"
#include "occbench/tensor.hpp"

namespace occbench::attr {

enum class Method { GradOrig, AbsGrad, GradInp, Random };

inline constexpr std::array<Method, 4> kAllMethods = {Method::Random, Method::AbsGrad, Method::GradOrig,
                                                      Method::GradInp};

std::string_view method_name(Method m) noexcept;
/// Accepts grad_orig, abs_grad, grad_inp, random. Throws InvalidConfig.
Method parse_method(std::string_view name);

enum class SortOrder { Ascending, Descending };

/// Which end of the score range ranks highest. Signed methods put the most
/// negative loss-gradient first: lowering the loss is what the model relies on.
constexpr SortOrder rank_order(Method m) noexcept {
    switch (m) {
    case Method::GradOrig: return SortOrder::Ascending;
    case Method::GradInp: return SortOrder::Ascending;
    case Method::AbsGrad: return SortOrder::Descending;
    case Method::Random: return SortOrder::Descending;
    }
    return SortOrder::Descending;
}

struct AttributionMap {
    Method method = Method::GradOrig;
    Tensor<float> scores;              // same shape as the input
    std::optional<std::uint64_t> seed; // Random only
};

/// Permutation of feature indices; position 0 is the highest ranked feature.
struct RankOrder {
    std::vector<std::uint32_t> order;
};

/// dL(D(x), t)/dx for one [rows, cols] input, eval mode, 32-bit.
Tensor<float> loss_gradient(const model::GradModel& model, const Tensor<float>& x, int label);
/// Same in 64-bit.
Tensor<double> loss_gradient_f64(const model::GradModel& model, const Tensor<float>& x, int label);

/// Per-example loss-gradients for N images (N*784 floats), computed in batches.
/// Summing independent per-example losses keeps each example's gradient its own.
std::vector<float> loss_gradients(const model::GradModel& model, std::span<const float> images,
                                  std::span<const int> labels, std::size_t batch = 128);

/// Throws ShapeMismatch when x and g differ in shape.
AttributionMap attribute(Method method, const Tensor<float>& x, const Tensor<float>& g, std::uint64_t seed = 0);

/// Span form used by the harness: writes scores for one flattened input.
void attribute_into(Method method, std::span<const float> x, std::span<const float> g, std::uint64_t seed,
                    std::span<float> out);

RankOrder rank(const AttributionMap& map);
RankOrder rank(Method method, std::span<const float> scores);

/// Seed for the random baseline of one example under one global seed.
std::uint64_t example_seed(std::uint64_t global_seed, std::size_t example_index) noexcept;

/// Min-max scaled to 0..255 (a constant map renders as all zeros).
pgm::GrayImage to_image(const AttributionMap& map);

} // namespace occbench::attr
