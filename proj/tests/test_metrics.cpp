#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "occbench/error.hpp"
#include "occbench/metrics.hpp"

using namespace occbench;
using namespace occbench::metrics;

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

/// Reference AUROC: probability that a random positive outscores a random
/// negative, ties counting one half.
double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) {
            continue;
        }
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) {
                continue;
            }
            pairs += 1.0;
            wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    }
    return wins / pairs;
}

} // namespace

TEST_CASE("accuracy") {
    const std::vector<EvalRecord> recs = {{0.9, 1, 1}, {0.2, 0, 1}, {0.1, 0, 0}};
    CHECK(accuracy(recs) == doctest::Approx(2.0 / 3.0));
    CHECK(code_of([] { accuracy(std::span<const EvalRecord>{}); }) == ErrorCode::EmptyInput);
}

TEST_CASE("auroc examples") {
    CHECK(auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == doctest::Approx(0.75));
    CHECK(auroc(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1}) == 1.0);
    CHECK(auroc(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 1}) == 0.0);
    CHECK(auroc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
    CHECK(auroc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{0, 1, 1, 0}) == 0.5);
    CHECK(auroc(std::vector<double>{0.2, 0.6, 0.4, 0.8}, std::vector<int>{1, 0, 1, 0}) == 0.0);
    CHECK(code_of([] { auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); }) == ErrorCode::SingleClass);
    CHECK(code_of([] { auroc(std::vector<double>{0.1}, std::vector<int>{0}); }) == ErrorCode::SingleClass);
}

TEST_CASE("auroc is invariant to monotone transforms and complements under label flips") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 40;
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 10) / 10.0;
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 0;
        y[1] = 1;
        std::vector<double> t(n);
        std::vector<int> flipped(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = std::exp(3.0 * s[i]) - 7.0;
            flipped[i] = 1 - y[i];
        }
        CHECK(auroc(t, y) == doctest::Approx(auroc(s, y)).epsilon(1e-12));
        CHECK(auroc(s, y) + auroc(s, flipped) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("auroc matches the pairwise reference on random instances") {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng() % 60;
        std::vector<double> s(n);
        std::vector<int> y(n);
        const bool coarse = rng() % 2 == 0; // coarse scores force ties
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = coarse ? static_cast<double>(rng() % 5) : static_cast<double>(rng() >> 11) * 0x1.0p-53;
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 0; // both classes present
        y[n - 1] = 1;
        worst = std::max(worst, std::abs(auroc(s, y) - pairwise_auroc(s, y)));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("record-based auroc uses the positive-class score") {
    const std::vector<EvalRecord> recs = {{0.2, 0, 0}, {0.7, 1, 1}, {0.6, 1, 0}, {0.9, 1, 1}};
    CHECK(auroc(recs) == doctest::Approx(1.0));
}
