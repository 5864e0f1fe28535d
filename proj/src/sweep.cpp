#include "occbench/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "occbench/error.hpp"
#include "occbench/pgm.hpp"

namespace occbench::sweep {

using nlohmann::json;

namespace {

constexpr std::string_view kCleanLabel = "none";
constexpr std::string_view kAnyDirection = "any";

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v, int digits = 16) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(static_cast<std::size_t>(digits), '0');
    for (int i = digits - 1; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kHex[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::string_view optimizer_name(model::Optimizer o) {
    return o == model::Optimizer::Sgd ? "sgd" : "sgd_momentum";
}

model::Optimizer parse_optimizer(std::string_view name) {
    if (name == "sgd") {
        return model::Optimizer::Sgd;
    }
    if (name == "sgd_momentum" || name == "momentum") {
        return model::Optimizer::SgdMomentum;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown optimizer '" + std::string(name) + "'");
}

json train_json(const model::TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"lr_decay", t.lr_decay},
            {"optimizer", optimizer_name(t.optimizer)},
            {"momentum", t.momentum}};
}

template <typename T, typename Parse>
std::vector<T> parse_list(const json& j, const char* key, Parse parse) {
    if (!j.is_array()) {
        throw Error(ErrorCode::InvalidConfig, std::string("'") + key + "' must be a list");
    }
    std::vector<T> out;
    for (const auto& item : j) {
        out.push_back(parse(item.get<std::string>()));
    }
    return out;
}

std::vector<std::string> names_of(const std::vector<attr::Method>& ms) {
    std::vector<std::string> out;
    for (auto m : ms) {
        out.emplace_back(attr::method_name(m));
    }
    return out;
}

std::vector<std::string> names_of(const std::vector<occ::ReplacementStrategy>& ss) {
    std::vector<std::string> out;
    for (const auto& s : ss) {
        out.push_back(occ::strategy_name(s));
    }
    return out;
}

std::string file_safe(std::string s) {
    std::replace(s.begin(), s.end(), ':', '_');
    return s;
}

template <typename Fn>
void write_text(const std::filesystem::path& path, Fn fn) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    fn(f);
    if (!f) {
        throw Error(ErrorCode::IoError, "failed writing " + path.string());
    }
}

void log_line(const LogFn& log, const std::string& msg) {
    if (log) {
        log(msg);
    }
}

} // namespace

// ---- tasks ---------------------------------------------------------------

std::string_view task_name(Task t) noexcept {
    switch (t) {
    case Task::Mnist2LogSoftmax: return "mnist-2-logsoftmax";
    case Task::Mnist2Sigmoid: return "mnist-2-sigmoid";
    case Task::Mnist10: return "mnist-10";
    }
    return "unknown";
}

Task parse_task(std::string_view name) {
    for (auto t : {Task::Mnist2LogSoftmax, Task::Mnist2Sigmoid, Task::Mnist10}) {
        if (task_name(t) == name) {
            return t;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown task '" + std::string(name) + "'");
}

int task_classes(Task t) noexcept {
    switch (t) {
    case Task::Mnist2LogSoftmax: return 2;
    case Task::Mnist2Sigmoid: return 1;
    case Task::Mnist10: return 10;
    }
    return 0;
}

std::set<int> task_digits(Task t) {
    if (t == Task::Mnist10) {
        return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    }
    return {0, 1};
}

// ---- config --------------------------------------------------------------

void SweepConfig::validate() const {
    if (seeds.empty()) {
        throw Error(ErrorCode::InvalidConfig, "at least one seed is required");
    }
    if (methods.empty() || directions.empty() || fractions.empty() || strategies.empty()) {
        throw Error(ErrorCode::InvalidConfig, "methods, directions, fractions and strategies must be nonempty");
    }
    for (double f : fractions) {
        occ::resolve_count(f, 1); // range check
    }
    for (const auto& s : strategies) {
        s.validate();
    }
    if (!(scale > 0.0) || !std::isfinite(shift)) {
        throw Error(ErrorCode::InvalidConfig, "normalization needs a finite shift and a positive scale");
    }
    if (train.epochs < 1 || train.batch_size == 0 || !(train.learning_rate > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "training needs epochs >= 1, batch_size >= 1 and learning_rate > 0");
    }
    occ::resolve_count(render.fraction, 1);
}

std::filesystem::path SweepConfig::checkpoint_path(std::uint32_t seed) const {
    const auto dir = checkpoint_dir.empty() ? out_dir / "checkpoints" : checkpoint_dir;
    // Everything that changes the trained weights goes into the file name, so a
    // changed training setup never silently reuses an old checkpoint.
    const json key = {{"task", task_name(task)},
                      {"arch", model::arch_id(arch)},
                      {"train", train_json(train)},
                      {"shift", shift},
                      {"scale", scale},
                      {"max_train", max_train_examples}};
    const std::string name = std::string(task_name(task)) + "_" + std::string(model::arch_id(arch)) + "_seed" +
                             std::to_string(seed) + "_" + hex64(fnv1a(key.dump()), 8) + ".ckpt";
    return dir / name;
}

json SweepConfig::to_json() const {
    json j;
    j["task"] = task_name(task);
    j["arch"] = model::arch_id(arch);
    j["seeds"] = seeds;
    j["methods"] = names_of(methods);
    std::vector<std::string> dirs;
    for (auto d : directions) {
        dirs.emplace_back(occ::direction_name(d));
    }
    j["directions"] = dirs;
    j["fractions"] = fractions;
    j["strategies"] = names_of(strategies);
    j["train"] = train_json(train);
    j["data"] = {{"dir", data_dir.string()},
                 {"shift", shift},
                 {"scale", scale},
                 {"max_train", max_train_examples},
                 {"max_test", max_test_examples}};
    j["output"] = {{"dir", out_dir.string()}, {"checkpoint_dir", checkpoint_dir.string()}};
    j["train_on_demand"] = train_on_demand;
    j["render"] = {{"examples", render.examples},
                   {"fraction", render.fraction},
                   {"methods", names_of(render.methods)},
                   {"strategies", names_of(render.strategies)}};
    return j;
}

SweepConfig SweepConfig::from_json(const json& j) {
    SweepConfig c;
    if (!j.is_object()) {
        throw Error(ErrorCode::InvalidConfig, "configuration must be a JSON object");
    }
    try {
        if (j.contains("task")) {
            c.task = parse_task(j["task"].get<std::string>());
        }
        if (j.contains("arch")) {
            try {
                c.arch = model::parse_arch(j["arch"].get<std::string>());
            } catch (const Error& e) {
                throw Error(ErrorCode::InvalidConfig, e.what());
            }
        }
        if (j.contains("seeds")) {
            const auto& s = j["seeds"];
            if (s.is_number_integer()) {
                // "seeds": N means 0..N-1
                const auto n = s.get<std::int64_t>();
                if (n < 1) {
                    throw Error(ErrorCode::InvalidConfig, "seed count must be positive");
                }
                c.seeds.clear();
                for (std::int64_t i = 0; i < n; ++i) {
                    c.seeds.push_back(static_cast<std::uint32_t>(i));
                }
            } else {
                c.seeds = s.get<std::vector<std::uint32_t>>();
            }
        }
        if (j.contains("methods")) {
            c.methods = parse_list<attr::Method>(j["methods"], "methods", attr::parse_method);
        }
        if (j.contains("directions")) {
            c.directions = parse_list<occ::Direction>(j["directions"], "directions", occ::parse_direction);
        }
        if (j.contains("fractions")) {
            c.fractions = j["fractions"].get<std::vector<double>>();
        }
        if (j.contains("strategies")) {
            c.strategies = parse_list<occ::ReplacementStrategy>(j["strategies"], "strategies", occ::parse_strategy);
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            c.train.epochs = t.value("epochs", c.train.epochs);
            c.train.batch_size = t.value("batch_size", c.train.batch_size);
            c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
            c.train.lr_decay = t.value("lr_decay", c.train.lr_decay);
            c.train.momentum = t.value("momentum", c.train.momentum);
            if (t.contains("optimizer")) {
                c.train.optimizer = parse_optimizer(t["optimizer"].get<std::string>());
            }
        }
        if (j.contains("data")) {
            const auto& d = j["data"];
            c.data_dir = d.value("dir", c.data_dir.string());
            c.shift = d.value("shift", c.shift);
            c.scale = d.value("scale", c.scale);
            c.max_train_examples = d.value("max_train", c.max_train_examples);
            c.max_test_examples = d.value("max_test", c.max_test_examples);
        }
        if (j.contains("output")) {
            const auto& o = j["output"];
            c.out_dir = o.value("dir", c.out_dir.string());
            c.checkpoint_dir = o.value("checkpoint_dir", c.checkpoint_dir.string());
        }
        c.train_on_demand = j.value("train_on_demand", c.train_on_demand);
        if (j.contains("render")) {
            const auto& r = j["render"];
            if (r.contains("examples")) {
                c.render.examples = r["examples"].get<std::vector<std::size_t>>();
            }
            c.render.fraction = r.value("fraction", c.render.fraction);
            if (r.contains("methods")) {
                c.render.methods = parse_list<attr::Method>(r["methods"], "render.methods", attr::parse_method);
            }
            if (r.contains("strategies")) {
                c.render.strategies =
                    parse_list<occ::ReplacementStrategy>(r["strategies"], "render.strategies", occ::parse_strategy);
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
    c.validate();
    return c;
}

// ---- results ---------------------------------------------------------------

double SweepResult::mean(std::string_view method, std::string_view direction, double fraction,
                         std::string_view strategy, std::string_view metric) const {
    for (const auto& s : summary) {
        if (s.method == method && s.direction == direction && s.fraction == fraction && s.strategy == strategy &&
            s.metric == metric) {
            return s.mean;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "no cell " + std::string(method) + "/" + std::string(direction) + "/" +
                                              format_number(fraction) + "/" + std::string(strategy) + "/" +
                                              std::string(metric));
}

// ---- data ----------------------------------------------------------------------

TaskData load_task_data(const SweepConfig& config) {
    const auto digits = task_digits(config.task);
    auto load = [&](data::Split split, std::size_t limit) {
        auto raw = data::load_raw(config.data_dir, split);
        if (config.task != Task::Mnist10) {
            raw = data::filter_digits(raw, digits);
        }
        auto ds = data::normalize(raw, config.shift, config.scale);
        return limit > 0 && limit < ds.size() ? ds.head(limit) : ds;
    };
    return {load(data::Split::Train, config.max_train_examples), load(data::Split::Test, config.max_test_examples)};
}

// ---- cell evaluation -------------------------------------------------------

CellEvaluator::CellEvaluator(const model::GradModel& model, const data::Dataset& test,
                             const data::DatasetStats& stats, std::uint64_t seed)
    : model_(model), test_(test), stats_(stats), seed_(seed) {
    if (test.empty()) {
        throw Error(ErrorCode::EmptyInput, "cannot evaluate on an empty test set");
    }
    // One gradient per example, always with respect to the true label.
    gradients_ = attr::loss_gradients(model, test.pixels(), test.labels());
}

const std::vector<std::uint32_t>& CellEvaluator::ranks(attr::Method method) {
    auto it = ranks_.find(method);
    if (it != ranks_.end()) {
        return it->second;
    }
    const std::size_t F = test_.features();
    std::vector<std::uint32_t> all(test_.size() * F);
    std::vector<float> scores(F);
    for (std::size_t i = 0; i < test_.size(); ++i) {
        const std::span<const float> g(gradients_.data() + i * F, F);
        attr::attribute_into(method, test_.image(i), g, attr::example_seed(seed_, i), scores);
        const auto r = attr::rank(method, scores);
        std::copy(r.order.begin(), r.order.end(), all.begin() + static_cast<std::ptrdiff_t>(i * F));
    }
    return ranks_.emplace(method, std::move(all)).first->second;
}

std::vector<float> CellEvaluator::occluded_images(const CellSpec& cell) {
    const std::size_t F = test_.features();
    const std::size_t k = occ::resolve_count(cell.fraction, F);
    const auto& order = ranks(cell.method);
    std::vector<float> out(test_.pixels().begin(), test_.pixels().end());
    for (std::size_t i = 0; i < test_.size(); ++i) {
        const std::span<const std::uint32_t> oi(order.data() + i * F, F);
        const float value = occ::replacement_value(cell.strategy, test_.image(i), stats_);
        occ::occlude_inplace(std::span<float>(out.data() + i * F, F), occ::select_span(oi, k, cell.direction), value);
    }
    return out;
}

CellMetrics CellEvaluator::score(std::span<const float> images) const {
    const auto records = model::evaluate(model_, images, test_.labels());
    CellMetrics m;
    m.accuracy = metrics::accuracy(records);
    if (model_.classes() <= 2) {
        m.auroc = metrics::auroc(records);
    }
    return m;
}

CellMetrics CellEvaluator::run(const CellSpec& cell) {
    return score(occluded_images(cell));
}

CellMetrics CellEvaluator::clean() const {
    return score(test_.pixels());
}

CellMetrics run_cell(const model::GradModel& model, const data::Dataset& test, const data::DatasetStats& stats,
                     const CellSpec& cell, std::uint64_t seed) {
    CellEvaluator ev(model, test, stats, seed);
    return ev.run(cell);
}

// ---- models ----------------------------------------------------------------------

namespace {

TrainReport train_one(const SweepConfig& config, const TaskData& data, std::uint32_t seed, const LogFn& log,
                      std::optional<model::GradModel>* trained) {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = config.train;
    cfg.seed = seed;
    auto init = model::build_model(config.arch, task_classes(config.task), seed);
    auto result = model::train(std::move(init), data.train, cfg, nullptr, [&](const model::EpochStats& s) {
        std::ostringstream os;
        os << task_name(config.task) << " seed " << seed << " epoch " << s.epoch << " loss " << s.mean_loss
           << " train_acc " << s.train_accuracy;
        log_line(log, os.str());
    });
    TrainReport r;
    r.seed = seed;
    r.checkpoint = config.checkpoint_path(seed);
    r.test_accuracy = model::test_accuracy(result.model, data.test);
    model::save_checkpoint(r.checkpoint, result.model, seed, r.test_accuracy);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(train_report_path(r.checkpoint), [&](std::ostream& os) {
        os << json{{"seed", r.seed}, {"test_accuracy", r.test_accuracy}, {"seconds", r.seconds}}.dump(2) << '\n';
    });
    if (trained != nullptr) {
        *trained = std::move(result.model);
    }
    return r;
}

} // namespace

model::GradModel obtain_model(const SweepConfig& config, const TaskData& data, std::uint32_t seed, const LogFn& log) {
    const auto path = config.checkpoint_path(seed);
    if (std::filesystem::exists(path)) {
        auto m = model::load_checkpoint(path);
        if (m.arch() != config.arch || m.classes() != task_classes(config.task)) {
            throw Error(ErrorCode::InvalidConfig, path.string() + " does not match the configured task/arch");
        }
        return m;
    }
    if (!config.train_on_demand) {
        throw Error(ErrorCode::MissingCheckpoint,
                    "no checkpoint at " + path.string() + " (run `train` first or enable train_on_demand)");
    }
    log_line(log, "training " + path.filename().string());
    std::optional<model::GradModel> m;
    train_one(config, data, seed, log, &m);
    return std::move(*m);
}

std::vector<TrainReport> train_all(const SweepConfig& config, const TaskData& data, const LogFn& log) {
    config.validate();
    std::vector<TrainReport> out;
    for (auto seed : config.seeds) {
        out.push_back(train_one(config, data, seed, log, nullptr));
    }
    return out;
}

std::filesystem::path train_report_path(const std::filesystem::path& checkpoint) {
    auto p = checkpoint;
    p += ".json";
    return p;
}

std::optional<TrainReport> read_train_report(const std::filesystem::path& checkpoint) {
    std::ifstream f(train_report_path(checkpoint));
    if (!f || !std::filesystem::exists(checkpoint)) {
        return std::nullopt;
    }
    try {
        const auto j = json::parse(f);
        TrainReport r;
        r.seed = j.at("seed").get<std::uint32_t>();
        r.test_accuracy = j.at("test_accuracy").get<double>();
        r.seconds = j.at("seconds").get<double>();
        r.checkpoint = checkpoint;
        return r;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

// ---- sweep -------------------------------------------------------------------------

SweepResult run_sweep(const SweepConfig& config, const TaskData& data, const LogFn& log) {
    config.validate();
    const std::string task(task_name(config.task));
    SweepResult result;
    auto emit = [&](std::uint32_t seed, std::string_view method, std::string_view direction, double fraction,
                    std::string_view strategy, const CellMetrics& m) {
        result.records.push_back({task, seed, std::string(method), std::string(direction), fraction,
                                  std::string(strategy), "accuracy", m.accuracy});
        if (m.auroc) {
            result.records.push_back({task, seed, std::string(method), std::string(direction), fraction,
                                      std::string(strategy), "auroc", *m.auroc});
        }
    };

    for (auto seed : config.seeds) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto model = obtain_model(config, data, seed, log);
        CellEvaluator ev(model, data.test, data.train.stats(), seed);
        emit(seed, kCleanLabel, kCleanLabel, 0.0, kCleanLabel, ev.clean());
        for (auto method : config.methods) {
            // The random baseline has no meaningful end of the ranking, so its
            // directions collapse into a single cell.
            const bool random = method == attr::Method::Random;
            const std::vector<occ::Direction> dirs =
                random ? std::vector<occ::Direction>{occ::Direction::Highest} : config.directions;
            for (auto dir : dirs) {
                for (double f : config.fractions) {
                    for (const auto& s : config.strategies) {
                        const auto m = ev.run({method, dir, f, s});
                        emit(seed, attr::method_name(method), random ? kAnyDirection : occ::direction_name(dir), f,
                             occ::strategy_name(s), m);
                    }
                }
            }
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream os;
        os << task << " seed " << seed << " swept in " << secs << " s";
        log_line(log, os.str());
    }
    result.summary = aggregate(result.records);
    return result;
}

SweepResult run_sweep(const SweepConfig& config, const LogFn& log) {
    config.validate();
    const auto data = load_task_data(config);
    return run_sweep(config, data, log);
}

std::vector<CellSummary> aggregate(std::span<const Record> records) {
    using Key = std::tuple<std::string, std::string, std::string, double, std::string, std::string>;
    // Key order of first appearance keeps the summary in grid order.
    std::vector<Key> order;
    std::map<Key, std::vector<std::pair<std::uint32_t, double>>> groups;
    for (const auto& r : records) {
        Key k{r.task, r.method, r.direction, r.fraction, r.strategy, r.metric};
        auto [it, inserted] = groups.try_emplace(k);
        if (inserted) {
            order.push_back(k);
        }
        it->second.emplace_back(r.seed, r.value);
    }
    std::vector<CellSummary> out;
    out.reserve(order.size());
    for (const auto& k : order) {
        auto vals = groups[k];
        std::sort(vals.begin(), vals.end());
        double sum = 0.0;
        for (const auto& [seed, v] : vals) {
            sum += v;
        }
        const double n = static_cast<double>(vals.size());
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& [seed, v] : vals) {
            ss += (v - mean) * (v - mean);
        }
        CellSummary s;
        std::tie(s.task, s.method, s.direction, s.fraction, s.strategy, s.metric) = k;
        s.mean = mean;
        s.stddev = vals.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        s.seeds = vals.size();
        out.push_back(std::move(s));
    }
    return out;
}

// ---- export ----------------------------------------------------------------------

void write_csv(std::ostream& os, std::span<const Record> records) {
    os << "task,seed,method,direction,fraction,strategy,metric,value\n";
    for (const auto& r : records) {
        os << r.task << ',' << r.seed << ',' << r.method << ',' << r.direction << ',' << format_number(r.fraction)
           << ',' << r.strategy << ',' << r.metric << ',' << format_number(r.value) << '\n';
    }
}

void write_summary_csv(std::ostream& os, std::span<const CellSummary> summary) {
    os << "task,method,direction,fraction,strategy,metric,mean,std,seeds\n";
    for (const auto& s : summary) {
        os << s.task << ',' << s.method << ',' << s.direction << ',' << format_number(s.fraction) << ','
           << s.strategy << ',' << s.metric << ',' << format_number(s.mean) << ',' << format_number(s.stddev) << ','
           << s.seeds << '\n';
    }
}

void export_csv(const SweepResult& result, const std::filesystem::path& path) {
    write_text(path, [&](std::ostream& os) { write_csv(os, result.records); });
}

void export_summary_csv(const SweepResult& result, const std::filesystem::path& path) {
    write_text(path, [&](std::ostream& os) { write_summary_csv(os, result.summary); });
}

std::string config_hash(const SweepConfig& config) {
    return hex64(fnv1a(config.to_json().dump()));
}

void write_manifest(const SweepConfig& config, const SweepResult& result, const std::filesystem::path& path) {
    json m;
    m["version"] = kLibraryVersion;
    m["config"] = config.to_json();
    m["config_hash"] = config_hash(config);
    m["seeds"] = config.seeds;
    m["records"] = result.records.size();
    m["cells"] = result.summary.size();
    write_text(path, [&](std::ostream& os) { os << m.dump(2) << '\n'; });
}

pgm::GrayImage to_gray(std::span<const float> x, std::size_t rows, std::size_t cols, double shift, double scale) {
    if (x.size() != rows * cols) {
        throw Error(ErrorCode::ShapeMismatch, "image buffer does not match rows*cols");
    }
    pgm::GrayImage img{cols, rows, std::vector<std::uint8_t>(x.size())};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = std::clamp(static_cast<double>(x[i]) * scale + shift, 0.0, 1.0);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

std::vector<std::filesystem::path> export_images(const model::GradModel& model, const data::Dataset& test,
                                                 const data::DatasetStats& stats, const RenderConfig& render,
                                                 double shift, double scale, std::uint64_t seed,
                                                 const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> written;
    const std::size_t rows = test.rows();
    const std::size_t cols = test.cols();
    const std::size_t F = test.features();
    const std::size_t k = occ::resolve_count(render.fraction, F);
    const std::string pct = "p" + format_number(render.fraction);
    for (auto idx : render.examples) {
        if (idx >= test.size()) {
            throw Error(ErrorCode::InvalidConfig,
                        "example " + std::to_string(idx) + " outside a test set of " + std::to_string(test.size()));
        }
        const auto ex = test.example(idx);
        const auto g = attr::loss_gradient(model, ex.x, ex.label);
        const std::string stem = "ex" + std::to_string(idx);
        const auto original = to_gray(ex.x.data(), rows, cols, shift, scale);
        for (auto method : render.methods) {
            const auto map = attr::attribute(method, ex.x, g, attr::example_seed(seed, idx));
            const auto order = attr::rank(map);
            const std::string mname(attr::method_name(method));

            const auto map_path = dir / (stem + "_" + mname + "_map.pgm");
            pgm::write(map_path, attr::to_image(map));
            written.push_back(map_path);

            for (const auto& s : render.strategies) {
                const float value = occ::replacement_value(s, ex.x.data(), stats);
                const auto low = occ::occlude(ex.x, occ::select_span(order.order, k, occ::Direction::Lowest), value);
                const auto high = occ::occlude(ex.x, occ::select_span(order.order, k, occ::Direction::Highest), value);
                const std::vector<pgm::GrayImage> panels = {original, to_gray(low.data(), rows, cols, shift, scale),
                                                            to_gray(high.data(), rows, cols, shift, scale)};
                const auto path = dir / (stem + "_" + mname + "_" + file_safe(occ::strategy_name(s)) + "_" + pct + ".pgm");
                pgm::write(path, pgm::hstack(panels));
                written.push_back(path);
            }
        }
    }
    return written;
}

} // namespace occbench::sweep
