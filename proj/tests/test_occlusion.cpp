#include <doctest.h>

#include <algorithm>
#include <random>

#include "occbench/attribution.hpp"
#include "occbench/error.hpp"
#include "occbench/occlusion.hpp"

using namespace occbench;
using namespace occbench::occ;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an occbench::Error");
    return ErrorCode::IoError;
}

data::DatasetStats stats_with_mean(double mean) {
    data::DatasetStats s;
    s.mean = mean;
    return s;
}

attr::RankOrder random_order(std::size_t n, std::mt19937_64& rng) {
    std::vector<float> scores(n);
    for (auto& v : scores) {
        v = static_cast<float>(ag::uniform01(rng));
    }
    return attr::rank(attr::Method::AbsGrad, scores);
}

Tensor<float> random_input(std::size_t n, std::mt19937_64& rng) {
    Tensor<float> x({n});
    for (auto& v : x.data()) {
        v = static_cast<float>(ag::uniform01(rng) * 3.0 - 0.4);
    }
    return x;
}

} // namespace

TEST_CASE("fractions resolve to rounded counts") {
    CHECK(resolve_count(0.9971, 784) == 782);
    CHECK(resolve_count(0.91, 10000) == 9100);
    CHECK(resolve_count(0.0, 784) == 0);
    CHECK(resolve_count(1.0, 784) == 784);
    CHECK(resolve_count(0.5, 3) == 2); // 1.5 rounds up
    CHECK(code_of([] { resolve_count(1.5, 10); }) == ErrorCode::InvalidConfig);
    OcclusionPlan plan{Count{800}, Direction::Highest, {}};
    CHECK(code_of([&] { plan.count(784); }) == ErrorCode::CountTooLarge);
    plan.amount = Count{4};
    CHECK(plan.count(784) == 4);
}

TEST_CASE("select takes either end of the ranking") {
    const attr::RankOrder order{{4, 2, 0, 1, 3}};
    CHECK(select_indices(order, 2, Direction::Highest) == std::vector<std::uint32_t>{4, 2});
    CHECK(select_indices(order, 2, Direction::Lowest) == std::vector<std::uint32_t>{1, 3});
    CHECK(select_indices(order, 0, Direction::Lowest).empty());
    CHECK(code_of([&] { select_indices(order, 6, Direction::Highest); }) == ErrorCode::CountTooLarge);
}

TEST_CASE("replacement values") {
    const std::vector<float> x = {0.5f, -1.0f, 2.0f};
    const auto stats = stats_with_mean(-0.25);
    CHECK(replacement_value({ReplacementKind::DatasetMean, 0.0}, x, stats) == -0.25f);
    CHECK(replacement_value({ReplacementKind::InputMin, 0.0}, x, stats) == -1.0f);
    CHECK(replacement_value({ReplacementKind::InputMax, 0.0}, x, stats) == 2.0f);
    CHECK(replacement_value(ReplacementStrategy::constant(3.5), x, stats) == 3.5f);
    CHECK(code_of([&] { replacement_value({}, std::span<const float>{}, stats); }) == ErrorCode::EmptyInput);
}

TEST_CASE("occlude writes only the selected indices") {
    const Tensor<float> x({4}, {1.0f, 2.0f, 3.0f, 4.0f});
    const std::vector<std::uint32_t> idx = {1, 3};
    CHECK(occlude(x, idx, 0.0f).vec() == std::vector<float>{1.0f, 0.0f, 3.0f, 0.0f});
    CHECK(occlude(x, {}, 9.0f) == x);
}

TEST_CASE("occlusion properties over random inputs") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 784;
        const auto x = random_input(n, rng);
        const auto order = random_order(n, rng);
        const std::size_t k = rng() % (n + 1);
        const float v = static_cast<float>(ag::uniform01(rng) - 0.5);

        const auto hi = select_indices(order, k, Direction::Highest);
        const auto once = occlude(x, hi, v);
        CHECK(occlude(once, hi, v) == once); // idempotent

        std::size_t changed = 0;
        std::vector<bool> selected(n, false);
        for (auto i : hi) {
            selected[i] = true;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!selected[i]) {
                CHECK(std::bit_cast<std::uint32_t>(once[i]) == std::bit_cast<std::uint32_t>(x[i]));
            }
            changed += once[i] != x[i];
        }
        CHECK(changed <= k);
        // Exactly k entries differ when no selected entry already equals v.
        std::size_t already = 0;
        for (auto i : hi) {
            already += x[i] == v;
        }
        CHECK(changed == k - already);

        // Disjoint complementary selections cover the whole input.
        const auto lo = select_indices(order, n - k, Direction::Lowest);
        const auto both = occlude(once, lo, v);
        CHECK(both.vec() == std::vector<float>(n, v));
    }
}

TEST_CASE("highest and lowest selections are disjoint when 2k <= n") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto order = random_order(100, rng);
        const std::size_t k = rng() % 51;
        auto a = select_indices(order, k, Direction::Highest);
        auto b = select_indices(order, k, Direction::Lowest);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<std::uint32_t> common;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
        CHECK(common.empty());
    }
}

TEST_CASE("strategy names round-trip") {
    for (const auto& s : {ReplacementStrategy{ReplacementKind::DatasetMean, 0.0},
                          ReplacementStrategy{ReplacementKind::InputMin, 0.0},
                          ReplacementStrategy{ReplacementKind::InputMax, 0.0}, ReplacementStrategy::constant(-0.5)}) {
        CHECK(parse_strategy(strategy_name(s)) == s);
    }
    CHECK(parse_strategy("dataset_mean").kind == ReplacementKind::DatasetMean);
    CHECK(parse_strategy("constant:2").value == 2.0);
    CHECK(code_of([] { parse_strategy("blur"); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { parse_strategy("constant:nan"); }) == ErrorCode::InvalidConfig);
    CHECK(parse_direction(direction_name(Direction::Lowest)) == Direction::Lowest);
}
