#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "occbench/autograd.hpp"
#include "occbench/metrics.hpp"
#include "occbench/mnist.hpp"
#include "occbench/tensor.hpp"

namespace occbench::model {

/// cnn-ref: conv32 -> conv64 -> maxpool -> fc128 -> fcK (with dropout 0.25 / 0.5).
/// mlp-small: 784 -> 256 -> K.
enum class Arch { CnnRef, MlpSmall };
enum class Head { LogSoftmax, Sigmoid };
enum class LossKind { Nll, Bce };

std::string_view arch_id(Arch arch) noexcept;
/// Throws UnknownArchitecture.
Arch parse_arch(std::string_view id);

inline constexpr std::size_t kImageSide = 28;

class GradModel {
public:
    GradModel(Arch arch, int classes, std::vector<Tensor<float>> params);

    Arch arch() const noexcept { return arch_; }
    /// 1 for the sigmoid head, K for a K-way logsoftmax head.
    int classes() const noexcept { return classes_; }
    Head head() const noexcept { return classes_ == 1 ? Head::Sigmoid : Head::LogSoftmax; }
    LossKind loss_kind() const noexcept { return head() == Head::Sigmoid ? LossKind::Bce : LossKind::Nll; }

    std::span<const Tensor<float>> params() const noexcept { return params_; }
    std::span<Tensor<float>> params() noexcept { return params_; }
    std::size_t param_count() const noexcept;

    /// Parameter shapes fixed by (arch, classes).
    static std::vector<Shape> param_shapes(Arch arch, int classes);

    bool operator==(const GradModel&) const = default;

private:
    Arch arch_;
    int classes_;
    std::vector<Tensor<float>> params_;
};

/// Deterministic initialisation: every tensor ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
GradModel build_model(Arch arch, int classes, std::uint64_t seed);

template <typename T>
struct ForwardPass {
    ag::Var logits;                 // [N,K] or [N,1]
    ag::Var output;                 // log-probabilities [N,K] or probabilities [N,1]
    std::vector<ag::Var> relu_inputs;
    std::vector<ag::Var> pool_inputs;
};

/// Puts the model's parameters on the tape (cast to T).
template <typename T>
std::vector<ag::Var> bind_params(ag::Tape<T>& tape, const GradModel& model, bool requires_grad);

/// `x` is [N,1,28,28]. `rng` is required only in Train mode.
template <typename T>
ForwardPass<T> forward(ag::Tape<T>& tape, const GradModel& model, std::span<const ag::Var> params, ag::Var x,
                       ag::Mode mode, std::mt19937_64* rng = nullptr);

/// NLL on the logsoftmax output, or logit-domain BCE for the sigmoid head.
template <typename T>
ag::Var loss_node(ag::Tape<T>& tape, const GradModel& model, const ForwardPass<T>& fwd, std::span<const int> labels,
                  ag::Reduction red);

/// NLL of one example given its log-probabilities. Throws InvalidLabel.
double nll_value(std::span<const double> logprobs, int label);
/// Clamped binary cross entropy of one probability. Throws InvalidLabel.
double bce_value(double p, int label);

/// Loss of a single example in eval mode (64-bit).
double loss(const GradModel& model, std::span<const float> x, int label);

/// Sigmoid head: {p}. Logsoftmax head: class probabilities.
std::vector<double> predict_score(const GradModel& model, std::span<const float> x);

/// Eval-mode logits [N, classes] for N images (N*784 floats) computed without
/// a tape. Agrees with forward() up to float rounding.
std::vector<float> infer_logits(const GradModel& model, std::span<const float> images, std::size_t batch = 64);

/// Eval-mode scoring of many images (N*784 floats). Binary models report the
/// positive-class probability as the record score.
std::vector<metrics::EvalRecord> evaluate(const GradModel& model, std::span<const float> images,
                                          std::span<const int> labels, std::size_t batch = 256);
double test_accuracy(const GradModel& model, const data::Dataset& ds);

// ---- training -------------------------------------------------------------

enum class Optimizer { Sgd, SgdMomentum };

struct TrainConfig {
    std::uint64_t seed = 0;
    int epochs = 3;
    std::size_t batch_size = 64;
    double learning_rate = 0.01;
    double lr_decay = 1.0; // multiplied into the rate after every epoch
    Optimizer optimizer = Optimizer::SgdMomentum;
    double momentum = 0.9;
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> test_accuracy;
};

struct TrainResult {
    GradModel model;
    std::vector<EpochStats> history;
};

using ProgressFn = std::function<void(const EpochStats&)>;

/// Minibatch training. Throws DivergedLoss on a non-finite loss and
/// InvalidLabel when the data's labels do not fit the head.
TrainResult train(GradModel model, const data::Dataset& train_set, const TrainConfig& config,
                  const data::Dataset* test_set = nullptr, const ProgressFn& progress = {});

/// Portable Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng);

// ---- checkpoints ------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string arch_id; // "<arch>:<classes>", e.g. "cnn-ref:2"
    std::uint32_t seed = 0;
    std::vector<float> payload;
    double final_metric = 0.0;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws WrongMagic, VersionMismatch or CorruptPayload.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

Checkpoint make_checkpoint(const GradModel& model, std::uint32_t seed, double final_metric);
GradModel model_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const GradModel& model, std::uint32_t seed,
                     double final_metric);
Checkpoint read_checkpoint(const std::filesystem::path& path);
GradModel load_checkpoint(const std::filesystem::path& path);

// ---- gradient verification -------------------------------------------------

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::size_t compared = 0;
    std::size_t excluded = 0; // coordinates whose +/- step changes a relu or pooling decision even at step/10
};

/// Checks the 64-bit eval-mode input gradient against central differences
/// (step retried at /10 where it crosses a relu or pooling decision).
/// Differences that disagree by more than 1e-6 are recomputed with
/// extended-precision forwards. Relative error per coordinate is
/// |g_ad - g_fd| / max(|g_fd|, floor).
FiniteDiffReport finite_diff_check(const GradModel& model, std::span<const float> x, int label, double step = 1e-5,
                                   double floor = 1e-12);

} // namespace occbench::model
