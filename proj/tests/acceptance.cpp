// End-to-end acceptance run on the real MNIST files.
//
// Prints one PASS/FAIL line per criterion on stdout; progress goes to stderr.
// Checkpoints (with their timing reports) are cached in the work directory so
// a rerun only repeats the sweeps and checks.
//
// usage: occbench_acceptance [work-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "occbench/autograd.hpp"
#include "occbench/error.hpp"
#include "occbench/metrics.hpp"
#include "occbench/model.hpp"
#include "occbench/sweep.hpp"

using namespace occbench;
using sweep::SweepConfig;
using sweep::SweepResult;

namespace {

// ---- tolerances ----------------------------------------------------------------

constexpr double kBaselineAccuracy = 0.999;
constexpr double kTrainBudgetSeconds = 15 * 60;

constexpr double kLowestRemovedMin = 0.995;
constexpr double kCleanSlack = 0.001;
constexpr double kGradOrigHighestMax = 0.55;
constexpr double kGradInpHighestMax = 0.35;
constexpr double kAbsLowestMin = 0.99;
constexpr double kAbsHighestLo = 0.45;
constexpr double kAbsHighestHi = 0.65;
constexpr double kRandomLo = 0.88;
constexpr double kRandomHi = 0.99;

constexpr double kTwoPixelMeanMin = 0.95;
constexpr double kTwoPixelMinDrop = 0.10;

constexpr double kTenClassGradInpMin = 0.95;
constexpr double kTenClassRandomMax = 0.30;

constexpr double kFiniteDiffMax = 1e-4;
constexpr std::size_t kFiniteDiffInputs = 20;
constexpr double kIdentityMax = 1e-10;
constexpr double kAurocMax = 1e-12;
constexpr int kAurocInstances = 1000;

// 10-class models are trained on the full 60k set; the sanity check uses a
// smaller seed/epoch budget than the binary study.
const std::vector<std::uint32_t> kTenClassSeeds = {0, 1, 2};
constexpr int kTenClassEpochs = 2;

// ---- reporting -----------------------------------------------------------------

struct Line {
    int id = 0;
    bool pass = false;
    std::string text;
};

class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ok_ = ok_ && ok;
        parts_.push_back(std::string(ok ? "" : "!") + what);
    }
    bool ok() const { return ok_; }
    std::string text() const {
        std::string out;
        for (const auto& p : parts_) {
            out += (out.empty() ? "" : "; ") + p;
        }
        return out;
    }

private:
    bool ok_ = true;
    std::vector<std::string> parts_;
};

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

std::string csv_of(const SweepResult& r) {
    std::ostringstream os;
    sweep::write_csv(os, r.records);
    return os.str();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

// ---- models ------------------------------------------------------------------------

struct Baseline {
    double mean_accuracy = 0.0;
    double train_seconds = 0.0;
    std::vector<double> accuracies;
};

/// Trains any seed without a cached checkpoint + report; measures accuracy on the loaded models.
Baseline ensure_models(const SweepConfig& config, const sweep::TaskData& data) {
    Baseline b;
    for (auto seed : config.seeds) {
        auto report = sweep::read_train_report(config.checkpoint_path(seed));
        if (!report) {
            progress("training " + std::string(sweep::task_name(config.task)) + " seed " + std::to_string(seed));
            auto one = config;
            one.seeds = {seed};
            report = sweep::train_all(one, data, progress).front();
        }
        b.train_seconds += report->seconds;
        const auto m = model::load_checkpoint(config.checkpoint_path(seed));
        b.accuracies.push_back(model::test_accuracy(m, data.test));
    }
    b.mean_accuracy = std::accumulate(b.accuracies.begin(), b.accuracies.end(), 0.0) /
                      static_cast<double>(b.accuracies.size());
    return b;
}

SweepConfig base_config(sweep::Task task, const std::filesystem::path& data_dir, const std::filesystem::path& work) {
    SweepConfig c;
    c.task = task;
    c.data_dir = data_dir;
    c.out_dir = work / "out";
    c.checkpoint_dir = work / "checkpoints";
    return c;
}

// ---- oracles -------------------------------------------------------------------------

/// Probability that a random positive outscores a random negative, ties counting half.
double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1.0;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    return wins / pairs;
}

/// Largest deviation between the tape gradient of NLL(logsoftmax(z)) and softmax(z) - onehot.
double logsoftmax_identity_error(int trials, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        const std::size_t K = trial % 2 == 0 ? 2 : 10;
        std::vector<double> z(K);
        for (auto& v : z) {
            v = ag::uniform01(rng) * 40.0 - 20.0;
        }
        const int t = static_cast<int>(rng() % K);
        ag::Tape<double> tape;
        auto zv = tape.leaf(Tensor<double>({1, K}, z), true);
        const int labels[1] = {t};
        auto L = ag::nll_loss(tape, ag::logsoftmax(tape, zv), labels, ag::Reduction::Sum);
        const auto g = ag::grad_wrt_input(tape, L, zv);
        const double zmax = *std::max_element(z.begin(), z.end());
        double denom = 0.0;
        for (double v : z) {
            denom += std::exp(v - zmax);
        }
        for (std::size_t k = 0; k < K; ++k) {
            const double expect = std::exp(z[k] - zmax) / denom - (static_cast<int>(k) == t ? 1.0 : 0.0);
            worst = std::max(worst, std::abs(g[k] - expect));
        }
    }
    return worst;
}

// ---- criteria ------------------------------------------------------------------------

Line criterion_baseline(const Baseline& ls, const Baseline& sig) {
    Checks c;
    c.expect(ls.mean_accuracy >= kBaselineAccuracy, "logsoftmax mean acc " + fmt(ls.mean_accuracy, 5) + " >= 0.999");
    c.expect(sig.mean_accuracy >= kBaselineAccuracy, "sigmoid mean acc " + fmt(sig.mean_accuracy, 5) + " >= 0.999");
    c.expect(ls.train_seconds <= kTrainBudgetSeconds,
             "logsoftmax 5-seed training " + fmt(ls.train_seconds, 0) + " s <= 900 s");
    c.expect(sig.train_seconds <= kTrainBudgetSeconds,
             "sigmoid 5-seed training " + fmt(sig.train_seconds, 0) + " s <= 900 s");
    return {1, c.ok(), "baseline training: " + c.text()};
}

Line criterion_table(const SweepResult& r) {
    Checks c;
    const double clean = r.mean("none", "none", 0.0, "none");
    double worst_low = 1.0;
    for (double f : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        worst_low = std::min(worst_low, r.mean("grad_orig", "lowest", f, "dataset_mean"));
    }
    c.expect(worst_low >= kLowestRemovedMin && worst_low >= clean - kCleanSlack,
             "grad_orig lowest 0.1-0.9 min " + fmt(worst_low) + " (clean " + fmt(clean) + ")");
    const double go_hi5 = r.mean("grad_orig", "highest", 0.5, "dataset_mean");
    c.expect(go_hi5 <= kGradOrigHighestMax, "grad_orig highest@0.5 " + fmt(go_hi5) + " <= 0.55");
    const double gi_hi5 = r.mean("grad_inp", "highest", 0.5, "dataset_mean");
    c.expect(gi_hi5 <= go_hi5 && gi_hi5 <= kGradInpHighestMax,
             "grad_inp highest@0.5 " + fmt(gi_hi5) + " <= min(grad_orig, 0.35)");
    const double abs_lo9 = r.mean("abs_grad", "lowest", 0.9, "dataset_mean");
    c.expect(abs_lo9 >= kAbsLowestMin, "abs_grad lowest@0.9 " + fmt(abs_lo9) + " >= 0.99");
    const double abs_hi9 = r.mean("abs_grad", "highest", 0.9, "dataset_mean");
    c.expect(abs_hi9 >= kAbsHighestLo && abs_hi9 <= kAbsHighestHi,
             "abs_grad highest@0.9 " + fmt(abs_hi9) + " in [0.45,0.65]");
    const double rnd9 = r.mean("random", "any", 0.9, "dataset_mean");
    const double go_lo9 = r.mean("grad_orig", "lowest", 0.9, "dataset_mean");
    const double go_hi9 = r.mean("grad_orig", "highest", 0.9, "dataset_mean");
    c.expect(rnd9 >= kRandomLo && rnd9 <= kRandomHi && rnd9 >= std::min(go_lo9, go_hi9) &&
                 rnd9 <= std::max(go_lo9, go_hi9),
             "random@0.9 " + fmt(rnd9) + " in [0.88,0.99] and between " + fmt(go_hi9) + " and " + fmt(go_lo9));
    return {2, c.ok(), "occlusion table: " + c.text()};
}

Line criterion_two_pixel(const SweepResult& main, const SweepResult& alt) {
    Checks c;
    c.expect(occ::resolve_count(0.9971, 784) == 782, "0.9971 of 784 -> 782 occluded");
    const double mean_acc = main.mean("grad_orig", "lowest", 0.9971, "dataset_mean");
    const double min_acc = alt.mean("grad_orig", "lowest", 0.9971, "input_min");
    c.expect(mean_acc >= kTwoPixelMeanMin, "dataset_mean " + fmt(mean_acc) + " >= 0.95");
    c.expect(min_acc <= mean_acc - kTwoPixelMinDrop, "input_min " + fmt(min_acc) + " lower by >= 0.10");
    return {3, c.ok(), "two-pixel case: " + c.text()};
}

Line criterion_inversion(const SweepResult& main, const SweepResult& alt) {
    Checks c;
    const double max_hi = alt.mean("grad_orig", "highest", 0.5, "input_max");
    const double max_lo = alt.mean("grad_orig", "lowest", 0.5, "input_max");
    const double mean_hi = main.mean("grad_orig", "highest", 0.5, "dataset_mean");
    const double mean_lo = main.mean("grad_orig", "lowest", 0.5, "dataset_mean");
    c.expect(max_hi > max_lo, "input_max highest " + fmt(max_hi) + " > lowest " + fmt(max_lo));
    c.expect(mean_hi < mean_lo, "dataset_mean highest " + fmt(mean_hi) + " < lowest " + fmt(mean_lo));
    return {4, c.ok(), "replacement inversion: " + c.text()};
}

Line criterion_ten_class(const SweepResult& r, const Baseline& b) {
    Checks c;
    const double gi_lo9 = r.mean("grad_inp", "lowest", 0.9, "dataset_mean");
    const double rnd9 = r.mean("random", "any", 0.9, "dataset_mean");
    const double go_lo5 = r.mean("grad_orig", "lowest", 0.5, "dataset_mean");
    const double go_hi5 = r.mean("grad_orig", "highest", 0.5, "dataset_mean");
    c.expect(gi_lo9 >= kTenClassGradInpMin, "grad_inp lowest@0.9 " + fmt(gi_lo9) + " >= 0.95");
    c.expect(rnd9 <= kTenClassRandomMax, "random@0.9 " + fmt(rnd9) + " <= 0.30");
    c.expect(go_lo5 >= go_hi5, "grad_orig lowest@0.5 " + fmt(go_lo5) + " >= highest " + fmt(go_hi5));
    return {5, c.ok(),
            "10-class sanity (" + std::to_string(kTenClassSeeds.size()) + " seeds, " +
                std::to_string(kTenClassEpochs) + " epochs, clean " + fmt(b.mean_accuracy) + "): " + c.text()};
}

Line criterion_gradients(const model::GradModel& m, const data::Dataset& test) {
    Checks c;
    std::mt19937_64 rng(2024);
    std::vector<std::size_t> picks(test.size());
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    for (std::size_t i = 0; i < kFiniteDiffInputs; ++i) {
        std::swap(picks[i], picks[i + rng() % (picks.size() - i)]);
    }
    double worst = 0.0;
    std::size_t compared = 0;
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < kFiniteDiffInputs; ++i) {
        const auto r = model::finite_diff_check(m, test.image(picks[i]), test.label(picks[i]));
        worst = std::max(worst, r.max_rel_error);
        compared += r.compared;
        excluded += r.excluded;
    }
    c.expect(worst < kFiniteDiffMax, "FD max rel err " + sci(worst) + " over " +
                                         std::to_string(kFiniteDiffInputs) + " inputs (" + std::to_string(compared) +
                                         " coords, " + std::to_string(excluded) + " at kinks skipped) < 1e-4");
    const double ident = logsoftmax_identity_error(1000, 7);
    c.expect(ident <= kIdentityMax, "logsoftmax+NLL identity err " + sci(ident) + " <= 1e-10");
    return {6, c.ok(), "gradient correctness: " + c.text()};
}

Line criterion_auroc() {
    std::mt19937_64 rng(77);
    double worst = 0.0;
    std::size_t with_ties = 0;
    for (int trial = 0; trial < kAurocInstances; ++trial) {
        const std::size_t n = 2 + rng() % 200;
        std::vector<double> s(n);
        std::vector<int> y(n);
        const std::uint64_t levels = trial % 3 == 0 ? 0 : 2 + rng() % 10; // 0 = continuous scores
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = levels == 0 ? ag::uniform01(rng) : static_cast<double>(rng() % levels);
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 0;
        y[n - 1] = 1;
        auto sorted = s;
        std::sort(sorted.begin(), sorted.end());
        with_ties += std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
        worst = std::max(worst, std::abs(metrics::auroc(s, y) - pairwise_auroc(s, y)));
    }
    Checks c;
    c.expect(worst <= kAurocMax, "max |rank - pairwise| " + sci(worst) + " over " +
                                     std::to_string(kAurocInstances) + " instances (" + std::to_string(with_ties) +
                                     " with ties)");
    return {7, c.ok(), "AUROC oracle: " + c.text()};
}

Line criterion_determinism(const SweepResult& first, const SweepResult& second, const std::filesystem::path& dir) {
    const auto a = dir / "determinism_run1.csv";
    const auto b = dir / "determinism_run2.csv";
    sweep::export_csv(first, a);
    sweep::export_csv(second, b);
    const auto ba = slurp(a);
    const auto bb = slurp(b);
    Checks c;
    c.expect(!ba.empty() && ba == bb && csv_of(first) == csv_of(second),
             std::to_string(first.records.size()) + " records, " + std::to_string(ba.size()) + " bytes identical");
    return {8, c.ok(), "determinism: " + c.text()};
}

Line criterion_properties(const model::GradModel& m, const data::Dataset& test, const std::filesystem::path& data_dir,
                          const std::filesystem::path& work) {
    Checks c;
    const std::size_t n = std::min<std::size_t>(64, test.size());
    const std::size_t F = test.features();
    std::vector<int> labels(test.labels().begin(), test.labels().begin() + static_cast<std::ptrdiff_t>(n));
    const auto grads = attr::loss_gradients(m, test.pixels().first(n * F), labels);

    bool idempotent = true;
    bool sign_flip = true;
    std::vector<float> neg(F);
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const float> g(grads.data() + i * F, F);
        const auto order = attr::rank(attr::Method::GradOrig, g);
        std::transform(g.begin(), g.end(), neg.begin(), [](float v) { return -v; });
        const auto flipped = attr::rank(attr::Method::GradOrig, neg);
        // Negating the scores reverses the ranking (tied scores may permute among themselves).
        for (std::size_t j = 0; j < F; ++j) {
            sign_flip = sign_flip && g[order.order[j]] == -neg[flipped.order[F - 1 - j]];
        }
        const Tensor<float> x({28, 28}, std::vector<float>(test.image(i).begin(), test.image(i).end()));
        for (double f : {0.1, 0.5, 0.9971}) {
            for (auto dir : {occ::Direction::Highest, occ::Direction::Lowest}) {
                const auto idx = occ::select_indices(order, occ::resolve_count(f, F), dir);
                const float v = static_cast<float>(test.stats().mean);
                const auto once = occ::occlude(x, idx, v);
                idempotent = idempotent && occ::occlude(once, idx, v) == once;
            }
        }
    }
    c.expect(idempotent, "occlusion idempotence on " + std::to_string(n) + " test inputs");
    c.expect(sign_flip, "grad_orig sign-flip reverses the ranking");

    bool idx_ok = true;
    for (const char* name : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                             "t10k-labels-idx1-ubyte"}) {
        const auto bytes = data::read_file_bytes(data::find_idx_file(data_dir, name));
        const bool images = std::string_view(name).find("images") != std::string_view::npos;
        const auto again = images ? data::serialize_idx_images(data::parse_idx_images(bytes))
                                  : data::serialize_idx_labels(data::parse_idx_labels(bytes));
        idx_ok = idx_ok && again == bytes;
    }
    c.expect(idx_ok, "IDX round-trip of all four MNIST files");

    const auto path = work / "roundtrip.ckpt";
    model::save_checkpoint(path, m, 0, 0.5);
    const auto decoded = model::decode_checkpoint(model::encode_checkpoint(model::make_checkpoint(m, 0, 0.5)));
    c.expect(model::load_checkpoint(path) == m && model::model_from_checkpoint(decoded) == m,
             "checkpoint round-trip of a trained model");
    std::filesystem::remove(path);
    return {9, c.ok(), "property suites: " + c.text()};
}

} // namespace

int main(int argc, char** argv) {
    const std::filesystem::path work = argc > 1 ? argv[1] : "acceptance";
    std::filesystem::path data_dir = OCCBENCH_TEST_DATA_DIR;
    if (const char* env = std::getenv("OCCBENCH_DATA"); env != nullptr && *env != '\0') {
        data_dir = env;
    }
    std::filesystem::create_directories(work);

    std::vector<Line> lines;
    try {
        const auto t0 = std::chrono::steady_clock::now();

        // Binary logsoftmax study: baseline, main grid, alternative replacements, rerun.
        auto ls_cfg = base_config(sweep::Task::Mnist2LogSoftmax, data_dir, work);
        const auto ls_data = sweep::load_task_data(ls_cfg);
        const auto ls_base = ensure_models(ls_cfg, ls_data);

        auto sig_cfg = base_config(sweep::Task::Mnist2Sigmoid, data_dir, work);
        const auto sig_data = sweep::load_task_data(sig_cfg);
        const auto sig_base = ensure_models(sig_cfg, sig_data);
        lines.push_back(criterion_baseline(ls_base, sig_base));

        progress("main grid");
        const auto main = sweep::run_sweep(ls_cfg, ls_data, progress);
        sweep::export_csv(main, work / "out" / "mnist-2-logsoftmax_results.csv");
        sweep::export_summary_csv(main, work / "out" / "mnist-2-logsoftmax_summary.csv");
        sweep::write_manifest(ls_cfg, main, work / "out" / "mnist-2-logsoftmax_manifest.json");

        auto alt_cfg = ls_cfg;
        alt_cfg.methods = {attr::Method::GradOrig};
        alt_cfg.fractions = {0.5, 0.9971};
        alt_cfg.strategies = {{occ::ReplacementKind::InputMin, 0.0}, {occ::ReplacementKind::InputMax, 0.0}};
        progress("replacement strategies");
        const auto alt = sweep::run_sweep(alt_cfg, ls_data, progress);
        sweep::export_summary_csv(alt, work / "out" / "mnist-2-logsoftmax_strategies_summary.csv");

        lines.push_back(criterion_table(main));
        lines.push_back(criterion_two_pixel(main, alt));
        lines.push_back(criterion_inversion(main, alt));

        // 10-class sanity grid.
        auto ten_cfg = base_config(sweep::Task::Mnist10, data_dir, work);
        ten_cfg.seeds = kTenClassSeeds;
        ten_cfg.train.epochs = kTenClassEpochs;
        ten_cfg.methods = {attr::Method::Random, attr::Method::GradOrig, attr::Method::GradInp};
        ten_cfg.fractions = {0.5, 0.9};
        const auto ten_data = sweep::load_task_data(ten_cfg);
        const auto ten_base = ensure_models(ten_cfg, ten_data);
        progress("10-class grid");
        const auto ten = sweep::run_sweep(ten_cfg, ten_data, progress);
        sweep::export_summary_csv(ten, work / "out" / "mnist-10_summary.csv");
        lines.push_back(criterion_ten_class(ten, ten_base));

        progress("gradient checks");
        const auto m0 = model::load_checkpoint(ls_cfg.checkpoint_path(ls_cfg.seeds.front()));
        lines.push_back(criterion_gradients(m0, ls_data.test));
        lines.push_back(criterion_auroc());

        progress("determinism rerun");
        const auto rerun = sweep::run_sweep(ls_cfg, ls_data, progress);
        lines.push_back(criterion_determinism(main, rerun, work / "out"));

        lines.push_back(criterion_properties(m0, ls_data.test, data_dir, work));

        progress("finished in " +
                 fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 0) + " s");
    } catch (const Error& e) {
        std::cerr << "acceptance aborted: " << e.what() << '\n';
        for (const auto& l : lines) {
            std::cout << "criterion " << l.id << ": " << (l.pass ? "PASS" : "FAIL") << "  " << l.text << '\n';
        }
        return e.code() == ErrorCode::IoError ? 2 : 1;
    }

    std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
    bool all = true;
    for (const auto& l : lines) {
        std::cout << "criterion " << l.id << ": " << (l.pass ? "PASS" : "FAIL") << "  " << l.text << '\n';
        all = all && l.pass;
    }
    return all ? 0 : 1;
}
