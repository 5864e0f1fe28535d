#include "occbench/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace occbench::occ {

std::string_view direction_name(Direction d) noexcept {
    return d == Direction::Highest ? "highest" : "lowest";
}

Direction parse_direction(std::string_view name) {
    if (name == "highest") {
        return Direction::Highest;
    }
    if (name == "lowest") {
        return Direction::Lowest;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown direction '" + std::string(name) + "'");
}

ReplacementStrategy ReplacementStrategy::constant(double v) {
    ReplacementStrategy s{ReplacementKind::Constant, v};
    s.validate();
    return s;
}

void ReplacementStrategy::validate() const {
    if (kind == ReplacementKind::Constant && !std::isfinite(value)) {
        throw Error(ErrorCode::InvalidConfig, "constant replacement needs a finite value");
    }
}

std::string strategy_name(const ReplacementStrategy& s) {
    switch (s.kind) {
    case ReplacementKind::DatasetMean: return "dataset_mean";
    case ReplacementKind::InputMin: return "input_min";
    case ReplacementKind::InputMax: return "input_max";
    case ReplacementKind::Constant: {
        std::ostringstream os;
        os << "constant:" << s.value;
        return os.str();
    }
    }
    return "unknown";
}

ReplacementStrategy parse_strategy(std::string_view name) {
    if (name == "dataset_mean" || name == "mean") {
        return {ReplacementKind::DatasetMean, 0.0};
    }
    if (name == "input_min" || name == "min") {
        return {ReplacementKind::InputMin, 0.0};
    }
    if (name == "input_max" || name == "max") {
        return {ReplacementKind::InputMax, 0.0};
    }
    constexpr std::string_view prefix = "constant:";
    if (name.starts_with(prefix)) {
        const std::string num(name.substr(prefix.size()));
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(num, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != num.size()) {
            throw Error(ErrorCode::InvalidConfig, "malformed constant in '" + std::string(name) + "'");
        }
        return ReplacementStrategy::constant(v);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown replacement strategy '" + std::string(name) + "'");
}

std::size_t resolve_count(double fraction, std::size_t n) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "occlusion fraction must lie in [0,1]");
    }
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
    return std::min(k, n);
}

std::size_t OcclusionPlan::count(std::size_t n) const {
    strategy.validate();
    if (const auto* f = std::get_if<Fraction>(&amount)) {
        return resolve_count(f->value, n);
    }
    const std::size_t k = std::get<Count>(amount).value;
    if (k > n) {
        throw Error(ErrorCode::CountTooLarge, std::to_string(k) + " of " + std::to_string(n) + " features");
    }
    return k;
}

std::span<const std::uint32_t> select_span(std::span<const std::uint32_t> order, std::size_t k, Direction direction) {
    if (k > order.size()) {
        throw Error(ErrorCode::CountTooLarge,
                    "cannot select " + std::to_string(k) + " of " + std::to_string(order.size()) + " features");
    }
    return direction == Direction::Highest ? order.first(k) : order.last(k);
}

std::vector<std::uint32_t> select_indices(const attr::RankOrder& order, std::size_t k, Direction direction) {
    const auto s = select_span(order.order, k, direction);
    return {s.begin(), s.end()};
}

float replacement_value(const ReplacementStrategy& strategy, std::span<const float> x,
                        const data::DatasetStats& stats) {
    if (x.empty()) {
        throw Error(ErrorCode::EmptyInput, "replacement value of an empty input");
    }
    switch (strategy.kind) {
    case ReplacementKind::DatasetMean: return static_cast<float>(stats.mean);
    case ReplacementKind::InputMin: return *std::min_element(x.begin(), x.end());
    case ReplacementKind::InputMax: return *std::max_element(x.begin(), x.end());
    case ReplacementKind::Constant: strategy.validate(); return static_cast<float>(strategy.value);
    }
    return 0.0f;
}

void occlude_inplace(std::span<float> out, std::span<const std::uint32_t> indices, float value) {
    for (auto i : indices) {
        if (i >= out.size()) {
            throw Error(ErrorCode::CountTooLarge, "feature index " + std::to_string(i) + " out of range");
        }
        out[i] = value;
    }
}

Tensor<float> occlude(const Tensor<float>& x, std::span<const std::uint32_t> indices, float value) {
    Tensor<float> out = x;
    occlude_inplace(out.data(), indices, value);
    return out;
}

} // namespace occbench::occ
