#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "occbench/attribution.hpp"
#include "occbench/mnist.hpp"
#include "occbench/tensor.hpp"

namespace occbench::occ {

enum class Direction { Highest, Lowest };

std::string_view direction_name(Direction d) noexcept;
Direction parse_direction(std::string_view name);

enum class ReplacementKind { DatasetMean, InputMin, InputMax, Constant };

struct ReplacementStrategy {
    ReplacementKind kind = ReplacementKind::DatasetMean;
    double value = 0.0; // used only by Constant

    static ReplacementStrategy constant(double v);
    /// Throws InvalidConfig for a non-finite constant.
    void validate() const;
    bool operator==(const ReplacementStrategy&) const = default;
};

/// dataset_mean, input_min, input_max, or constant:<value>.
std::string strategy_name(const ReplacementStrategy& s);
ReplacementStrategy parse_strategy(std::string_view name);

struct Fraction {
    double value = 0.0;
};
struct Count {
    std::size_t value = 0;
};

struct OcclusionPlan {
    std::variant<Fraction, Count> amount = Fraction{0.0};
    Direction direction = Direction::Lowest;
    ReplacementStrategy strategy;

    /// Number of features to occlude out of `n`. Throws CountTooLarge / InvalidConfig.
    std::size_t count(std::size_t n) const;
};

/// k = round(p * n), halves rounded up. Throws InvalidConfig outside [0,1].
std::size_t resolve_count(double fraction, std::size_t n);

/// Highest: the first k entries of the order. Lowest: the last k. Throws CountTooLarge.
std::vector<std::uint32_t> select_indices(const attr::RankOrder& order, std::size_t k, Direction direction);
std::span<const std::uint32_t> select_span(std::span<const std::uint32_t> order, std::size_t k, Direction direction);

/// Throws EmptyInput for an empty x.
float replacement_value(const ReplacementStrategy& strategy, std::span<const float> x,
                        const data::DatasetStats& stats);

Tensor<float> occlude(const Tensor<float>& x, std::span<const std::uint32_t> indices, float value);
/// In-place form: out must already hold a copy of the input.
void occlude_inplace(std::span<float> out, std::span<const std::uint32_t> indices, float value);

} // namespace occbench::occ
