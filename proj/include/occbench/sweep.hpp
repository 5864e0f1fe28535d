#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "occbench/attribution.hpp"
#include "occbench/mnist.hpp"
#include "occbench/model.hpp"
#include "occbench/occlusion.hpp"
#include "occbench/pgm.hpp"

namespace occbench::sweep {

inline constexpr std::string_view kLibraryVersion = "0.3.0";

enum class Task { Mnist2LogSoftmax, Mnist2Sigmoid, Mnist10 };

std::string_view task_name(Task t) noexcept;
Task parse_task(std::string_view name);
/// Output width of the model for a task: 2, 1 or 10.
int task_classes(Task t) noexcept;
std::set<int> task_digits(Task t);

struct RenderConfig {
    std::vector<std::size_t> examples = {0, 1, 2, 3};
    double fraction = 0.9971;
    std::vector<attr::Method> methods = {attr::Method::AbsGrad, attr::Method::GradOrig, attr::Method::GradInp};
    std::vector<occ::ReplacementStrategy> strategies = {{occ::ReplacementKind::DatasetMean, 0.0}};
};

struct SweepConfig {
    Task task = Task::Mnist2LogSoftmax;
    model::Arch arch = model::Arch::CnnRef;
    std::vector<std::uint32_t> seeds = {0, 1, 2, 3, 4};
    std::vector<attr::Method> methods = {attr::kAllMethods.begin(), attr::kAllMethods.end()};
    std::vector<occ::Direction> directions = {occ::Direction::Lowest, occ::Direction::Highest};
    std::vector<double> fractions = {0.1, 0.3, 0.5, 0.7, 0.9, 0.9971};
    std::vector<occ::ReplacementStrategy> strategies = {{occ::ReplacementKind::DatasetMean, 0.0}};

    model::TrainConfig train; // seed is replaced per model
    double shift = data::kDefaultShift;
    double scale = data::kDefaultScale;
    std::size_t max_train_examples = 0; // 0 = all
    std::size_t max_test_examples = 0;  // 0 = all

    std::filesystem::path data_dir;
    std::filesystem::path out_dir = "out";
    std::filesystem::path checkpoint_dir; // defaults to out_dir/checkpoints
    bool train_on_demand = false;

    RenderConfig render;

    /// Throws InvalidConfig on empty grids or out-of-range fractions.
    void validate() const;
    std::filesystem::path checkpoint_path(std::uint32_t seed) const;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults. Throws InvalidConfig on unknown names.
    static SweepConfig from_json(const nlohmann::json& j);
};

struct Record {
    std::string task;
    std::uint32_t seed = 0;
    std::string method;
    std::string direction; // highest | lowest | any (random baseline)
    double fraction = 0.0;
    std::string strategy;
    std::string metric; // accuracy | auroc
    double value = 0.0;
};

struct CellSummary {
    std::string task;
    std::string method;
    std::string direction;
    double fraction = 0.0;
    std::string strategy;
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation, 0 for a single seed
    std::size_t seeds = 0;
};

struct SweepResult {
    std::vector<Record> records;
    std::vector<CellSummary> summary;

    /// Mean of one cell; throws InvalidConfig when absent.
    double mean(std::string_view method, std::string_view direction, double fraction, std::string_view strategy,
                std::string_view metric = "accuracy") const;
};

struct TaskData {
    data::Dataset train;
    data::Dataset test;
};

/// Loads, filters and normalizes the train/test splits for a task. Throws IoError on missing files.
TaskData load_task_data(const SweepConfig& config);

struct CellSpec {
    attr::Method method = attr::Method::GradOrig;
    occ::Direction direction = occ::Direction::Lowest;
    double fraction = 0.0;
    occ::ReplacementStrategy strategy;
};

struct CellMetrics {
    double accuracy = 0.0;
    std::optional<double> auroc; // binary tasks only
};

/// Loss-gradients and rankings for one model over one test set, reused across cells.
class CellEvaluator {
public:
    CellEvaluator(const model::GradModel& model, const data::Dataset& test, const data::DatasetStats& stats,
                  std::uint64_t seed);

    /// attribute -> rank -> select -> occlude -> evaluate, for every test example.
    CellMetrics run(const CellSpec& cell);
    CellMetrics clean() const;

    const std::vector<float>& gradients() const { return gradients_; }
    /// Flattened rank orders (N * features) for a method, computed once.
    const std::vector<std::uint32_t>& ranks(attr::Method method);
    /// Occluded copies of every test image for one cell.
    std::vector<float> occluded_images(const CellSpec& cell);

private:
    CellMetrics score(std::span<const float> images) const;

    const model::GradModel& model_;
    const data::Dataset& test_;
    const data::DatasetStats& stats_;
    std::uint64_t seed_;
    std::vector<float> gradients_;
    std::map<attr::Method, std::vector<std::uint32_t>> ranks_;
};

/// One-off cell evaluation (recomputes gradients).
CellMetrics run_cell(const model::GradModel& model, const data::Dataset& test, const data::DatasetStats& stats,
                     const CellSpec& cell, std::uint64_t seed);

using LogFn = std::function<void(const std::string&)>;

/// Loads the checkpoint for `seed`, or trains and saves one when train_on_demand is set.
/// Throws MissingCheckpoint otherwise.
model::GradModel obtain_model(const SweepConfig& config, const TaskData& data, std::uint32_t seed,
                              const LogFn& log = {});

struct TrainReport {
    std::uint32_t seed = 0;
    double test_accuracy = 0.0;
    double seconds = 0.0;
    std::filesystem::path checkpoint;
};

/// Training writes `<checkpoint>.json` with the seed, test accuracy and wall time.
std::filesystem::path train_report_path(const std::filesystem::path& checkpoint);
/// Report stored next to a checkpoint; nullopt when either file is missing or unreadable.
std::optional<TrainReport> read_train_report(const std::filesystem::path& checkpoint);

/// Trains one model per configured seed and writes checkpoints.
std::vector<TrainReport> train_all(const SweepConfig& config, const TaskData& data, const LogFn& log = {});

/// Records for every (seed, method, direction, fraction, strategy, metric). Random
/// collapses directions into one "any" cell.
SweepResult run_sweep(const SweepConfig& config, const TaskData& data, const LogFn& log = {});
SweepResult run_sweep(const SweepConfig& config, const LogFn& log = {});

/// Groups records by cell; sums run over ascending seed so the order of input
/// records cannot change the result.
std::vector<CellSummary> aggregate(std::span<const Record> records);

void write_csv(std::ostream& os, std::span<const Record> records);
void write_summary_csv(std::ostream& os, std::span<const CellSummary> summary);
void export_csv(const SweepResult& result, const std::filesystem::path& path);
void export_summary_csv(const SweepResult& result, const std::filesystem::path& path);

/// Writes a JSON manifest: config, config hash, seeds, library version.
void write_manifest(const SweepConfig& config, const SweepResult& result, const std::filesystem::path& path);
std::string config_hash(const SweepConfig& config);

/// Normalized value -> byte, inverting the normalization.
pgm::GrayImage to_gray(std::span<const float> x, std::size_t rows, std::size_t cols, double shift, double scale);

/// For each example and method: original | lowest-occluded | highest-occluded
/// triptych plus the attribution map. Returns the written files.
std::vector<std::filesystem::path> export_images(const model::GradModel& model, const data::Dataset& test,
                                                 const data::DatasetStats& stats, const RenderConfig& render,
                                                 double shift, double scale, std::uint64_t seed,
                                                 const std::filesystem::path& dir);

} // namespace occbench::sweep
