#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace occbench::metrics {

struct EvalRecord {
    double score = 0.0; // positive-class score for binary models, max probability otherwise
    int predicted = 0;
    int truth = 0;
};

/// Fraction of records with predicted == truth. Throws EmptyInput.
double accuracy(std::span<const EvalRecord> records);

/// Mann-Whitney AUROC with midranks: (R_pos - P(P+1)/2) / (P*N).
/// `labels` are 0/1. Throws SingleClass when either class is absent.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Pairwise reference: counts wins + ties/2 over every positive-negative pair.
double auroc_bruteforce(std::span<const double> scores, std::span<const int> labels);

double auroc(std::span<const EvalRecord> records);

} // namespace occbench::metrics
