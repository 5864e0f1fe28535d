#include "occbench/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "occbench/error.hpp"

namespace occbench::metrics {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels, std::size_t& pos, std::size_t& neg) {
    if (scores.size() != labels.size()) {
        throw Error(ErrorCode::ShapeMismatch, std::to_string(scores.size()) + " scores vs " +
                                                  std::to_string(labels.size()) + " labels");
    }
    pos = 0;
    neg = 0;
    for (auto l : labels) {
        if (l == 1) {
            ++pos;
        } else if (l == 0) {
            ++neg;
        } else {
            throw Error(ErrorCode::InvalidLabel, "AUROC labels must be 0 or 1");
        }
    }
    if (pos == 0 || neg == 0) {
        throw Error(ErrorCode::SingleClass, "AUROC needs both a positive and a negative example");
    }
}

} // namespace

double accuracy(std::span<const EvalRecord> records) {
    if (records.empty()) {
        throw Error(ErrorCode::EmptyInput, "accuracy of zero records");
    }
    const auto correct = std::count_if(records.begin(), records.end(),
                                       [](const EvalRecord& r) { return r.predicted == r.truth; });
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
    std::size_t pos = 0, neg = 0;
    check_inputs(scores, labels, pos, neg);

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of (doubled) midranks of positives; doubling keeps everything integral.
    std::uint64_t rank_sum2 = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const std::uint64_t midrank2 = (i + 1) + j; // 2 * mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                rank_sum2 += midrank2;
            }
        }
        i = j;
    }
    const std::uint64_t u2 = rank_sum2 - static_cast<std::uint64_t>(pos) * (pos + 1);
    return static_cast<double>(u2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double auroc_bruteforce(std::span<const double> scores, std::span<const int> labels) {
    std::size_t pos = 0, neg = 0;
    check_inputs(scores, labels, pos, neg);
    std::uint64_t wins2 = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) {
            continue;
        }
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) {
                continue;
            }
            if (scores[i] > scores[j]) {
                wins2 += 2;
            } else if (scores[i] == scores[j]) {
                wins2 += 1;
            }
        }
    }
    return static_cast<double>(wins2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double auroc(std::span<const EvalRecord> records) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(records.size());
    labels.reserve(records.size());
    for (const auto& r : records) {
        scores.push_back(r.score);
        labels.push_back(r.truth);
    }
    return auroc(scores, labels);
}

} // namespace occbench::metrics
