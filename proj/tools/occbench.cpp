// occbench: train models, run occlusion sweeps, render panels and verify
// gradients/metrics from the command line.
//
// Exit codes: 0 success, 1 a check failed, 2 environment or input error.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "occbench/attribution.hpp"
#include "occbench/autograd.hpp"
#include "occbench/error.hpp"
#include "occbench/metrics.hpp"
#include "occbench/mnist.hpp"
#include "occbench/model.hpp"
#include "occbench/occlusion.hpp"
#include "occbench/sweep.hpp"

using namespace occbench;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitInputError = 2;

struct CommonOptions {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    std::string seeds;
    std::string task;
    std::string methods;
    std::string fractions;
    std::string strategies;
    std::string direction;
};

struct Failure {
    std::string check;
    std::string detail;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_path, "JSON configuration file");
    cmd->add_option("--data-dir", o.data_dir, "Directory with the MNIST IDX files (fallback: $OCCBENCH_DATA)");
    cmd->add_option("--out-dir", o.out_dir, "Output directory");
    cmd->add_option("--seeds", o.seeds, "Seed count N (seeds 0..N-1) or a comma list");
    cmd->add_option("--task", o.task, "mnist-2-logsoftmax | mnist-2-sigmoid | mnist-10");
    cmd->add_option("--methods", o.methods, "Comma list of random,abs_grad,grad_orig,grad_inp");
    cmd->add_option("--fractions", o.fractions, "Comma list of occlusion fractions in [0,1]");
    cmd->add_option("--strategies", o.strategies, "Comma list of dataset_mean,input_min,input_max,constant:<v>");
    cmd->add_option("--direction", o.direction, "highest | lowest | both")
        ->check(CLI::IsMember({"highest", "lowest", "both"}));
    cmd->allow_extras();
}

json parse_scalar(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return text;
    }
}

/// Applies `--a.b.c=value` overrides to a JSON object.
void apply_dotted(json& j, const std::vector<std::string>& extras) {
    for (std::size_t i = 0; i < extras.size(); ++i) {
        std::string arg = extras[i];
        if (!arg.starts_with("--")) {
            throw Error(ErrorCode::InvalidConfig, "unexpected argument '" + arg + "'");
        }
        arg = arg.substr(2);
        std::string key;
        std::string value;
        if (const auto eq = arg.find('='); eq != std::string::npos) {
            key = arg.substr(0, eq);
            value = arg.substr(eq + 1);
        } else if (i + 1 < extras.size()) {
            key = arg;
            value = extras[++i];
        } else {
            throw Error(ErrorCode::InvalidConfig, "override --" + arg + " needs a value");
        }
        std::vector<std::string> parts;
        std::stringstream ks(key);
        std::string part;
        while (std::getline(ks, part, '.')) {
            parts.push_back(part);
        }
        // Every addressable key exists in the defaults, so a missing one is a typo.
        json* node = &j;
        for (const auto& p : parts) {
            if (!node->is_object() || !node->contains(p)) {
                throw Error(ErrorCode::InvalidConfig, "unknown option --" + key);
            }
            if (&p != &parts.back()) {
                node = &(*node)[p];
            }
        }
        (*node)[parts.back()] = parse_scalar(value);
    }
}

sweep::SweepConfig build_config(const CommonOptions& o, const std::vector<std::string>& extras) {
    json j = json::object();
    if (!o.config_path.empty()) {
        std::ifstream f(o.config_path);
        if (!f) {
            throw Error(ErrorCode::IoError, "cannot open config " + o.config_path);
        }
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, o.config_path + ": " + e.what());
        }
    }
    // Start from the defaults so dotted overrides can address every key.
    json merged = sweep::SweepConfig{}.to_json();
    merged.merge_patch(j);
    if (!j.contains("data") || !j["data"].contains("dir")) {
        merged["data"]["dir"] = "";
    }

    if (!o.task.empty()) {
        merged["task"] = o.task;
    }
    if (!o.seeds.empty()) {
        const auto items = split_list(o.seeds);
        if (items.size() == 1 && o.seeds.find(',') == std::string::npos) {
            merged["seeds"] = parse_scalar(items.front());
        } else {
            json list = json::array();
            for (const auto& s : items) {
                list.push_back(parse_scalar(s));
            }
            merged["seeds"] = list;
        }
    }
    if (!o.methods.empty()) {
        merged["methods"] = split_list(o.methods);
    }
    if (!o.fractions.empty()) {
        json list = json::array();
        for (const auto& s : split_list(o.fractions)) {
            list.push_back(parse_scalar(s));
        }
        merged["fractions"] = list;
    }
    if (!o.strategies.empty()) {
        merged["strategies"] = split_list(o.strategies);
    }
    if (!o.direction.empty()) {
        merged["directions"] = o.direction == "both" ? std::vector<std::string>{"lowest", "highest"}
                                                     : std::vector<std::string>{o.direction};
    }
    if (!o.out_dir.empty()) {
        merged["output"]["dir"] = o.out_dir;
    }
    apply_dotted(merged, extras);

    auto config = sweep::SweepConfig::from_json(merged);
    if (!o.data_dir.empty()) {
        config.data_dir = o.data_dir;
    }
    if (config.data_dir.empty()) {
        const char* env = std::getenv("OCCBENCH_DATA");
        config.data_dir = env != nullptr && *env != '\0' ? env : "data/mnist";
    }
    return config;
}

void print_failures(const std::vector<Failure>& failures) {
    json list = json::array();
    for (const auto& f : failures) {
        list.push_back({{"check", f.check}, {"detail", f.detail}});
    }
    std::cerr << json{{"failures", list}}.dump() << '\n';
}

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::IoError:
    case ErrorCode::WrongMagic:
    case ErrorCode::TruncatedFile:
    case ErrorCode::LabelOutOfRange:
    case ErrorCode::MissingCheckpoint:
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnknownArchitecture:
    case ErrorCode::VersionMismatch:
    case ErrorCode::CorruptPayload:
        return kExitInputError;
    default:
        return kExitCheckFailed;
    }
}

void log_stderr(const std::string& msg) {
    std::cerr << msg << '\n';
}

// ---- verbs -----------------------------------------------------------------

int cmd_train(const sweep::SweepConfig& config) {
    const auto data = sweep::load_task_data(config);
    std::cout << "task " << sweep::task_name(config.task) << ", " << data.train.size() << " train / "
              << data.test.size() << " test examples\n";
    const auto reports = sweep::train_all(config, data, log_stderr);
    double sum = 0.0;
    for (const auto& r : reports) {
        std::cout << "seed " << r.seed << "  test_accuracy " << std::fixed << std::setprecision(5) << r.test_accuracy
                  << "  " << std::setprecision(1) << r.seconds << " s  " << r.checkpoint.string() << '\n';
        sum += r.test_accuracy;
    }
    std::cout << "mean test_accuracy " << std::fixed << std::setprecision(5)
              << sum / static_cast<double>(reports.size()) << '\n';
    return kExitOk;
}

int cmd_sweep(const sweep::SweepConfig& config) {
    const auto result = sweep::run_sweep(config, log_stderr);
    const std::string stem(sweep::task_name(config.task));
    const auto csv = config.out_dir / (stem + "_results.csv");
    sweep::export_csv(result, csv);
    sweep::export_summary_csv(result, config.out_dir / (stem + "_summary.csv"));
    sweep::write_manifest(config, result, config.out_dir / (stem + "_manifest.json"));
    sweep::write_summary_csv(std::cout, result.summary);
    std::cerr << "wrote " << csv.string() << '\n';
    return kExitOk;
}

int cmd_render(const sweep::SweepConfig& config) {
    const auto data = sweep::load_task_data(config);
    const auto seed = config.seeds.front();
    const auto model = sweep::obtain_model(config, data, seed, log_stderr);
    const auto dir = config.out_dir / "render" / std::string(sweep::task_name(config.task));
    const auto files =
        sweep::export_images(model, data.test, data.train.stats(), config.render, config.shift, config.scale, seed, dir);
    for (const auto& f : files) {
        std::cout << f.string() << '\n';
    }
    return kExitOk;
}

int cmd_gradcheck(const sweep::SweepConfig& config, std::size_t count, double tolerance) {
    const auto data = sweep::load_task_data(config);
    const auto seed = config.seeds.front();
    const auto path = config.checkpoint_path(seed);
    const bool trained = std::filesystem::exists(path);
    const auto model = trained ? model::load_checkpoint(path)
                               : model::build_model(config.arch, sweep::task_classes(config.task), seed);
    std::cout << (trained ? "checkpoint " + path.string() : std::string("untrained model (no checkpoint)")) << '\n';

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(data.test.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(count, idx.size()));

    std::vector<Failure> failures;
    double worst = 0.0;
    for (auto i : idx) {
        const auto r = model::finite_diff_check(model, data.test.image(i), data.test.label(i));
        worst = std::max(worst, r.max_rel_error);
        std::cout << "example " << i << "  max_rel_error " << std::scientific << std::setprecision(3)
                  << r.max_rel_error << "  compared " << r.compared << "  excluded " << r.excluded << '\n';
        if (!(r.max_rel_error < tolerance)) {
            failures.push_back({"gradcheck", "example " + std::to_string(i) + " rel error " +
                                                 std::to_string(r.max_rel_error)});
        }
    }
    std::cout << "worst max_rel_error " << std::scientific << worst << " (tolerance " << tolerance << ")\n";
    if (!failures.empty()) {
        print_failures(failures);
        return kExitCheckFailed;
    }
    return kExitOk;
}

// ---- selftest ----------------------------------------------------------------

std::vector<Failure> selftest() {
    std::vector<Failure> failures;
    auto check = [&](const std::string& name, bool ok, const std::string& detail = {}) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : "  " + detail) << '\n';
        if (!ok) {
            failures.push_back({name, detail});
        }
    };
    std::mt19937_64 rng(20240601);

    // Rank-based AUROC against the pairwise definition, with heavy ties.
    {
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t n = 2 + rng() % 60;
            std::vector<double> scores(n);
            std::vector<int> labels(n);
            const int levels = 1 + static_cast<int>(rng() % 8);
            for (std::size_t i = 0; i < n; ++i) {
                scores[i] = static_cast<double>(rng() % static_cast<std::uint64_t>(levels));
                labels[i] = static_cast<int>(rng() % 2);
            }
            labels[0] = 0;
            labels[1] = 1;
            worst = std::max(worst, std::abs(metrics::auroc(scores, labels) - metrics::auroc_bruteforce(scores, labels)));
        }
        check("auroc_oracle", worst <= 1e-12, "max diff " + std::to_string(worst));
    }

    // logsoftmax + NLL gradient equals softmax - onehot.
    {
        double worst = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t k = 2 + rng() % 9;
            std::vector<double> z(k);
            for (auto& v : z) {
                v = (ag::uniform01(rng) - 0.5) * 20.0;
            }
            const int label = static_cast<int>(rng() % k);
            ag::Tape<double> tape;
            auto zv = tape.leaf(Tensor<double>({1, k}, z), true);
            auto lp = ag::logsoftmax(tape, zv);
            const int labels[1] = {label};
            auto L = ag::nll_loss(tape, lp, labels, ag::Reduction::Sum);
            tape.backward(L);
            const auto g = tape.grad(zv);
            const double zmax = *std::max_element(z.begin(), z.end());
            double denom = 0.0;
            for (double v : z) {
                denom += std::exp(v - zmax);
            }
            for (std::size_t j = 0; j < k; ++j) {
                const double expect = std::exp(z[j] - zmax) / denom - (static_cast<int>(j) == label ? 1.0 : 0.0);
                worst = std::max(worst, std::abs(g[j] - expect));
            }
        }
        check("logsoftmax_nll_identity", worst <= 1e-10, "max diff " + std::to_string(worst));
    }

    // Occlusion: idempotent, highest and lowest sets are disjoint, sign flip reverses signed rankings.
    {
        const std::size_t F = 784;
        data::DatasetStats stats;
        stats.mean = -0.25;
        bool idem = true;
        bool disjoint = true;
        bool reversal = true;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<float> x(F);
            std::vector<float> g(F);
            for (std::size_t i = 0; i < F; ++i) {
                x[i] = static_cast<float>(ag::uniform01(rng) * 3.0 - 0.5);
                g[i] = static_cast<float>(ag::uniform01(rng) - 0.5);
            }
            const auto order = attr::rank(attr::Method::GradOrig, g);
            std::vector<float> neg(F);
            std::transform(g.begin(), g.end(), neg.begin(), [](float v) { return -v; });
            const auto flipped = attr::rank(attr::Method::GradOrig, neg);
            reversal = reversal && std::equal(order.order.begin(), order.order.end(), flipped.order.rbegin());

            const std::size_t k = occ::resolve_count(0.4, F);
            const auto hi = occ::select_span(order.order, k, occ::Direction::Highest);
            const auto lo = occ::select_span(order.order, k, occ::Direction::Lowest);
            std::vector<bool> seen(F, false);
            for (auto i : hi) {
                seen[i] = true;
            }
            for (auto i : lo) {
                disjoint = disjoint && !seen[i];
            }
            const float v = occ::replacement_value(occ::ReplacementStrategy{}, x, stats);
            Tensor<float> xt({28, 28}, x);
            const auto once = occ::occlude(xt, hi, v);
            const auto twice = occ::occlude(once, hi, v);
            idem = idem && once == twice;
        }
        check("occlusion_idempotent", idem);
        check("occlusion_disjoint_directions", disjoint);
        check("rank_sign_flip_reversal", reversal);
    }

    // IDX and checkpoint round trips.
    {
        std::vector<data::ByteGrid> grids(3, data::ByteGrid{28, 28, std::vector<std::uint8_t>(784)});
        for (auto& gr : grids) {
            for (auto& p : gr.pixels) {
                p = static_cast<std::uint8_t>(rng());
            }
        }
        const auto parsed = data::parse_idx_images(data::serialize_idx_images(grids));
        check("idx_round_trip", parsed == grids);

        const auto m = model::build_model(model::Arch::MlpSmall, 2, 7);
        const auto back = model::model_from_checkpoint(
            model::decode_checkpoint(model::encode_checkpoint(model::make_checkpoint(m, 7, 0.5))));
        check("checkpoint_round_trip", back == m);
    }
    return failures;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"occbench: loss-gradient attribution and occlusion benchmarks on MNIST"};
    app.require_subcommand(1);

    CommonOptions opts;
    auto* train = app.add_subcommand("train", "Train one model per seed and write checkpoints");
    auto* sweep_cmd = app.add_subcommand("sweep", "Run the occlusion grid and write CSV + manifest");
    auto* render = app.add_subcommand("render", "Write PGM panels of occluded examples");
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of input gradients");
    auto* selftest_cmd = app.add_subcommand("selftest", "Metric oracle and invariant checks");
    for (auto* cmd : {train, sweep_cmd, render, gradcheck}) {
        add_common(cmd, opts);
    }
    std::size_t gc_count = 20;
    double gc_tol = 1e-4;
    gradcheck->add_option("--count", gc_count, "Number of test inputs")->capture_default_str();
    gradcheck->add_option("--tolerance", gc_tol, "Maximum relative error")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInputError;
    }

    try {
        if (selftest_cmd->parsed()) {
            const auto failures = selftest();
            if (!failures.empty()) {
                print_failures(failures);
                return kExitCheckFailed;
            }
            return kExitOk;
        }
        CLI::App* active = app.get_subcommands().front();
        const auto config = build_config(opts, active->remaining());
        if (train->parsed()) {
            return cmd_train(config);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep(config);
        }
        if (render->parsed()) {
            return cmd_render(config);
        }
        return cmd_gradcheck(config, gc_count, gc_tol);
    } catch (const Error& e) {
        print_failures({{std::string(to_string(e.code())), e.what()}});
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        print_failures({{"internal", e.what()}});
        return kExitCheckFailed;
    }
}
