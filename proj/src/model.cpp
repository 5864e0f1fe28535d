#include "occbench/model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <unordered_set>

namespace occbench::model {

namespace {

constexpr double kDropoutConv = 0.25;
constexpr double kDropoutFc = 0.5;

std::size_t fan_in(const Shape& s) {
    // conv weight [O,C,KH,KW] -> C*KH*KW; fc weight [in,out] -> in; biases take
    // the fan-in of the weight they belong to (handled by the caller).
    if (s.size() == 4) {
        return s[1] * s[2] * s[3];
    }
    return s[0];
}

void check_classes(int classes) {
    if (classes != 1 && classes < 2) {
        throw Error(ErrorCode::InvalidConfig, "classes must be 1 (sigmoid) or >= 2 (logsoftmax)");
    }
}

void check_labels(const GradModel& m, std::span<const int> labels) {
    const int hi = m.head() == Head::Sigmoid ? 1 : m.classes() - 1;
    for (auto l : labels) {
        if (l < 0 || l > hi) {
            throw Error(ErrorCode::InvalidLabel, "label " + std::to_string(l) + " does not fit a " +
                                                     std::to_string(m.classes()) + "-output head");
        }
    }
}

} // namespace

std::string_view arch_id(Arch arch) noexcept {
    switch (arch) {
    case Arch::CnnRef: return "cnn-ref";
    case Arch::MlpSmall: return "mlp-small";
    }
    return "unknown";
}

Arch parse_arch(std::string_view id) {
    if (id == "cnn-ref") {
        return Arch::CnnRef;
    }
    if (id == "mlp-small") {
        return Arch::MlpSmall;
    }
    throw Error(ErrorCode::UnknownArchitecture, std::string(id));
}

std::vector<Shape> GradModel::param_shapes(Arch arch, int classes) {
    check_classes(classes);
    const auto K = static_cast<std::size_t>(classes);
    switch (arch) {
    case Arch::CnnRef:
        return {{32, 1, 3, 3}, {32}, {64, 32, 3, 3}, {64}, {9216, 128}, {128}, {128, K}, {K}};
    case Arch::MlpSmall:
        return {{784, 256}, {256}, {256, K}, {K}};
    }
    throw Error(ErrorCode::UnknownArchitecture, "unhandled architecture");
}

GradModel::GradModel(Arch arch, int classes, std::vector<Tensor<float>> params)
    : arch_(arch), classes_(classes), params_(std::move(params)) {
    const auto shapes = param_shapes(arch, classes);
    if (shapes.size() != params_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "wrong number of parameter tensors");
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (params_[i].shape() != shapes[i]) {
            throw Error(ErrorCode::ShapeMismatch, "parameter " + std::to_string(i) + " has shape " +
                                                      shape_string(params_[i].shape()) + ", expected " +
                                                      shape_string(shapes[i]));
        }
    }
}

std::size_t GradModel::param_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.size();
    }
    return n;
}

GradModel build_model(Arch arch, int classes, std::uint64_t seed) {
    const auto shapes = GradModel::param_shapes(arch, classes);
    std::mt19937_64 rng(seed);
    std::vector<Tensor<float>> params;
    std::size_t weight_fan_in = 1;
    for (const auto& s : shapes) {
        if (s.size() > 1) {
            weight_fan_in = fan_in(s);
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(weight_fan_in));
        Tensor<float> t(s);
        for (auto& v : t.data()) {
            v = static_cast<float>((2.0 * ag::uniform01(rng) - 1.0) * bound);
        }
        params.push_back(std::move(t));
    }
    return GradModel(arch, classes, std::move(params));
}

template <typename T>
std::vector<ag::Var> bind_params(ag::Tape<T>& tape, const GradModel& model, bool requires_grad) {
    std::vector<ag::Var> out;
    for (const auto& p : model.params()) {
        if constexpr (std::is_same_v<T, float>) {
            out.push_back(tape.leaf(p, requires_grad));
        } else {
            out.push_back(tape.leaf(p.template cast<T>(), requires_grad));
        }
    }
    return out;
}

template <typename T>
ForwardPass<T> forward(ag::Tape<T>& tape, const GradModel& model, std::span<const ag::Var> params, ag::Var x,
                       ag::Mode mode, std::mt19937_64* rng) {
    ForwardPass<T> fp;
    auto relu = [&](ag::Var v) {
        fp.relu_inputs.push_back(v);
        return ag::relu(tape, v);
    };
    ag::Var h = x;
    switch (model.arch()) {
    case Arch::CnnRef:
        h = relu(ag::add_bias(tape, ag::conv2d(tape, h, params[0]), params[1]));
        h = relu(ag::add_bias(tape, ag::conv2d(tape, h, params[2]), params[3]));
        fp.pool_inputs.push_back(h);
        h = ag::maxpool2(tape, h);
        h = ag::dropout(tape, h, kDropoutConv, mode, rng);
        h = ag::flatten(tape, h);
        h = relu(ag::add_bias(tape, ag::matmul(tape, h, params[4]), params[5]));
        h = ag::dropout(tape, h, kDropoutFc, mode, rng);
        h = ag::add_bias(tape, ag::matmul(tape, h, params[6]), params[7]);
        break;
    case Arch::MlpSmall:
        h = ag::flatten(tape, h);
        h = relu(ag::add_bias(tape, ag::matmul(tape, h, params[0]), params[1]));
        h = ag::add_bias(tape, ag::matmul(tape, h, params[2]), params[3]);
        break;
    }
    fp.logits = h;
    fp.output = model.head() == Head::Sigmoid ? ag::sigmoid(tape, h) : ag::logsoftmax(tape, h);
    return fp;
}

template <typename T>
ag::Var loss_node(ag::Tape<T>& tape, const GradModel& model, const ForwardPass<T>& fwd, std::span<const int> labels,
                  ag::Reduction red) {
    check_labels(model, labels);
    if (model.loss_kind() == LossKind::Bce) {
        return ag::bce_with_logits(tape, fwd.logits, labels, red);
    }
    return ag::nll_loss(tape, fwd.output, labels, red);
}

double nll_value(std::span<const double> logprobs, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logprobs.size()) {
        throw Error(ErrorCode::InvalidLabel, "label " + std::to_string(label));
    }
    return -logprobs[static_cast<std::size_t>(label)];
}

double bce_value(double p, int label) {
    if (label != 0 && label != 1) {
        throw Error(ErrorCode::InvalidLabel, "binary label must be 0 or 1");
    }
    const double q = std::clamp(p, ag::kBceEpsilon, 1.0 - ag::kBceEpsilon);
    return label == 1 ? -std::log(q) : -std::log(1.0 - q);
}

namespace {

ag::Var image_leaf(ag::Tape<double>& tape, std::span<const float> x, bool requires_grad) {
    const std::size_t n = x.size() / (kImageSide * kImageSide);
    return tape.leaf(Tensor<double>({n, 1, kImageSide, kImageSide}, std::vector<double>(x.begin(), x.end())),
                     requires_grad);
}

} // namespace

double loss(const GradModel& model, std::span<const float> x, int label) {
    if (x.size() != kImageSide * kImageSide) {
        throw Error(ErrorCode::ShapeMismatch, "loss() takes a single 28x28 image");
    }
    ag::Tape<double> tape;
    const auto params = bind_params(tape, model, false);
    const auto fwd = forward(tape, model, params, image_leaf(tape, x, false), ag::Mode::Eval);
    const int labels[1] = {label};
    return tape.value(loss_node(tape, model, fwd, labels, ag::Reduction::Sum))[0];
}

std::vector<double> predict_score(const GradModel& model, std::span<const float> x) {
    if (x.size() != kImageSide * kImageSide) {
        throw Error(ErrorCode::ShapeMismatch, "predict_score() takes a single 28x28 image");
    }
    ag::Tape<double> tape;
    const auto params = bind_params(tape, model, false);
    const auto fwd = forward(tape, model, params, image_leaf(tape, x, false), ag::Mode::Eval);
    const auto& out = tape.value(fwd.output);
    std::vector<double> scores(out.data().begin(), out.data().end());
    if (model.head() == Head::LogSoftmax) {
        for (auto& s : scores) {
            s = std::exp(s);
        }
    }
    return scores;
}

std::vector<float> infer_logits(const GradModel& model, std::span<const float> images, std::size_t batch) {
    using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapR = Eigen::Map<MatR>;
    using CMapR = Eigen::Map<const MatR>;
    constexpr std::size_t S = kImageSide;
    constexpr std::size_t F = S * S;
    if (images.size() % F != 0) {
        throw Error(ErrorCode::ShapeMismatch, "infer_logits(): buffer is not a whole number of 28x28 images");
    }
    const std::size_t N = images.size() / F;
    const std::size_t K = static_cast<std::size_t>(model.classes());
    batch = std::max<std::size_t>(batch, 1);
    const auto P = model.params();
    std::vector<float> logits(N * K);

    auto bias_relu = [](float* rows, std::size_t channels, std::size_t len, const float* bias, bool relu) {
        for (std::size_t c = 0; c < channels; ++c) {
            float* r = rows + c * len;
            const float b = bias[c];
            for (std::size_t i = 0; i < len; ++i) {
                const float v = r[i] + b;
                r[i] = relu ? (v > 0.0f ? v : 0.0f) : v;
            }
        }
    };
    auto row_bias = [](float* row, std::size_t len, const float* bias, bool relu) {
        for (std::size_t i = 0; i < len; ++i) {
            const float v = row[i] + bias[i];
            row[i] = relu ? (v > 0.0f ? v : 0.0f) : v;
        }
    };

    if (model.arch() == Arch::MlpSmall) {
        const std::size_t Hd = P[0].dim(1);
        MatR h(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(Hd));
        for (std::size_t start = 0; start < N; start += batch) {
            const std::size_t n = std::min(batch, N - start);
            const auto nn = static_cast<Eigen::Index>(n);
            h.topRows(nn).noalias() = CMapR(images.data() + start * F, nn, F) * CMapR(P[0].ptr(), F, Hd);
            for (std::size_t i = 0; i < n; ++i) {
                row_bias(h.data() + i * Hd, Hd, P[1].ptr(), true);
            }
            MapR(logits.data() + start * K, nn, K).noalias() = h.topRows(nn) * CMapR(P[2].ptr(), Hd, K);
            for (std::size_t i = 0; i < n; ++i) {
                row_bias(logits.data() + (start + i) * K, K, P[3].ptr(), false);
            }
        }
        return logits;
    }

    // cnn-ref: conv(1->C1) relu conv(C1->C2) relu maxpool fc relu fc
    const std::size_t C1 = P[0].dim(0), C2 = P[2].dim(0), Hd = P[4].dim(1);
    const std::size_t H1 = S - 2, H2 = H1 - 2, Hp = H2 / 2;
    const std::size_t feat = C2 * Hp * Hp;
    std::vector<float> cols1(9 * H1 * H1), a1(C1 * H1 * H1), cols2(C1 * 9 * H2 * H2), a2(C2 * H2 * H2);
    MatR pooled(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(feat));
    MatR hidden(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(Hd));
    CMapR W1(P[0].ptr(), C1, 9), W2(P[2].ptr(), C2, C1 * 9);
    for (std::size_t start = 0; start < N; start += batch) {
        const std::size_t n = std::min(batch, N - start);
        const auto nn = static_cast<Eigen::Index>(n);
        for (std::size_t i = 0; i < n; ++i) {
            ag::im2col(images.data() + (start + i) * F, 1, S, S, 3, 3, cols1.data());
            MapR(a1.data(), C1, H1 * H1).noalias() = W1 * CMapR(cols1.data(), 9, H1 * H1);
            bias_relu(a1.data(), C1, H1 * H1, P[1].ptr(), true);
            ag::im2col(a1.data(), C1, H1, H1, 3, 3, cols2.data());
            MapR(a2.data(), C2, H2 * H2).noalias() = W2 * CMapR(cols2.data(), C1 * 9, H2 * H2);
            bias_relu(a2.data(), C2, H2 * H2, P[3].ptr(), true);
            float* dst = pooled.data() + i * feat;
            for (std::size_t c = 0; c < C2; ++c) {
                const float* src = a2.data() + c * H2 * H2;
                for (std::size_t oh = 0; oh < Hp; ++oh) {
                    for (std::size_t ow = 0; ow < Hp; ++ow) {
                        const float* q = src + 2 * oh * H2 + 2 * ow;
                        *dst++ = std::max(std::max(q[0], q[1]), std::max(q[H2], q[H2 + 1]));
                    }
                }
            }
        }
        hidden.topRows(nn).noalias() = pooled.topRows(nn) * CMapR(P[4].ptr(), feat, Hd);
        for (std::size_t i = 0; i < n; ++i) {
            row_bias(hidden.data() + i * Hd, Hd, P[5].ptr(), true);
        }
        MapR(logits.data() + start * K, nn, K).noalias() = hidden.topRows(nn) * CMapR(P[6].ptr(), Hd, K);
        for (std::size_t i = 0; i < n; ++i) {
            row_bias(logits.data() + (start + i) * K, K, P[7].ptr(), false);
        }
    }
    return logits;
}

std::vector<metrics::EvalRecord> evaluate(const GradModel& model, std::span<const float> images,
                                          std::span<const int> labels, std::size_t batch) {
    constexpr std::size_t F = kImageSide * kImageSide;
    if (images.size() != labels.size() * F) {
        throw Error(ErrorCode::ShapeMismatch, "evaluate(): image buffer does not match label count");
    }
    const auto logits = infer_logits(model, images, batch);
    const std::size_t K = static_cast<std::size_t>(model.classes());
    std::vector<metrics::EvalRecord> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& r = out[i];
        r.truth = labels[i];
        const float* z = logits.data() + i * K;
        if (model.head() == Head::Sigmoid) {
            r.score = 1.0 / (1.0 + std::exp(-static_cast<double>(z[0])));
            r.predicted = r.score > 0.5 ? 1 : 0;
        } else {
            const auto am = static_cast<std::size_t>(std::max_element(z, z + K) - z);
            double denom = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                denom += std::exp(static_cast<double>(z[k]) - static_cast<double>(z[am]));
            }
            const std::size_t shown = K == 2 ? 1 : am;
            r.predicted = static_cast<int>(am);
            r.score = std::exp(static_cast<double>(z[shown]) - static_cast<double>(z[am])) / denom;
        }
    }
    return out;
}

double test_accuracy(const GradModel& model, const data::Dataset& ds) {
    return metrics::accuracy(evaluate(model, ds.pixels(), ds.labels()));
}

// ---- training -------------------------------------------------------------

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(ag::uniform01(rng) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
    return idx;
}

TrainResult train(GradModel model, const data::Dataset& train_set, const TrainConfig& config,
                  const data::Dataset* test_set, const ProgressFn& progress) {
    if (train_set.empty() || config.batch_size == 0 || config.epochs < 0) {
        throw Error(ErrorCode::InvalidConfig, "training needs data, a positive batch size and epochs >= 0");
    }
    check_labels(model, train_set.labels());
    constexpr std::size_t F = kImageSide * kImageSide;
    if (train_set.features() != F) {
        throw Error(ErrorCode::ShapeMismatch, "training images must be 28x28");
    }

    std::mt19937_64 order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::mt19937_64 dropout_rng(config.seed ^ 0xd1b54a32d192ed03ULL);
    const double mu = config.optimizer == Optimizer::SgdMomentum ? config.momentum : 0.0;

    std::vector<Tensor<float>> velocity;
    for (const auto& p : model.params()) {
        velocity.emplace_back(p.shape());
    }

    TrainResult result{model, {}};
    double lr = config.learning_rate;
    std::vector<float> batch_px;
    std::vector<int> batch_lb;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto order = shuffled_indices(train_set.size(), order_rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            batch_px.clear();
            batch_lb.clear();
            for (std::size_t i = 0; i < n; ++i) {
                const auto img = train_set.image(order[start + i]);
                batch_px.insert(batch_px.end(), img.begin(), img.end());
                batch_lb.push_back(train_set.label(order[start + i]));
            }
            ag::Tape<float> tape;
            const auto params = bind_params(tape, model, true);
            auto x = tape.leaf(Tensor<float>({n, 1, kImageSide, kImageSide}, batch_px), false);
            ForwardPass<float> fwd;
            ag::Var L;
            try {
                fwd = forward(tape, model, params, x, ag::Mode::Train, &dropout_rng);
                L = loss_node(tape, model, fwd, batch_lb, ag::Reduction::Mean);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::NonFinite) {
                    throw Error(ErrorCode::DivergedLoss, "epoch " + std::to_string(epoch) + ": " + e.what());
                }
                throw;
            }
            const double lv = tape.value(L)[0];
            if (!std::isfinite(lv)) {
                throw Error(ErrorCode::DivergedLoss, "non-finite loss in epoch " + std::to_string(epoch));
            }
            loss_sum += lv * static_cast<double>(n);

            const auto& out = tape.value(fwd.output);
            const std::size_t K = out.size() / n;
            for (std::size_t i = 0; i < n; ++i) {
                int pred;
                if (model.head() == Head::Sigmoid) {
                    pred = out[i] > 0.5f ? 1 : 0;
                } else {
                    const float* row = out.ptr() + i * K;
                    pred = static_cast<int>(std::max_element(row, row + K) - row);
                }
                correct += pred == batch_lb[i];
            }

            tape.backward(L);
            auto ps = model.params();
            for (std::size_t k = 0; k < ps.size(); ++k) {
                const auto& g = tape.grad(params[k]);
                auto& v = velocity[k];
                auto& p = ps[k];
                const auto fmu = static_cast<float>(mu);
                const auto flr = static_cast<float>(lr);
                for (std::size_t i = 0; i < p.size(); ++i) {
                    v[i] = fmu * v[i] + g[i];
                    p[i] -= flr * v[i];
                }
            }
        }
        EpochStats st;
        st.epoch = epoch;
        st.mean_loss = loss_sum / static_cast<double>(order.size());
        st.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        if (test_set != nullptr) {
            st.test_accuracy = test_accuracy(model, *test_set);
        }
        result.history.push_back(st);
        if (progress) {
            progress(st);
        }
        lr *= config.lr_decay;
    }
    result.model = std::move(model);
    return result;
}

// ---- gradient verification -------------------------------------------------

namespace {

/// One bit per relu unit (active or not) plus every 2x2 pooling argmax, for example n.
template <typename T>
std::vector<std::uint32_t> activation_pattern(const ag::Tape<T>& tape, const ForwardPass<T>& fp, std::size_t n,
                                              std::size_t batch) {
    std::vector<std::uint32_t> sig;
    for (auto v : fp.relu_inputs) {
        const auto& t = tape.value(v);
        const std::size_t per = t.size() / batch;
        const T* p = t.ptr() + n * per;
        for (std::size_t i = 0; i < per; ++i) {
            sig.push_back(p[i] > 0.0 ? 1u : 0u);
        }
    }
    for (auto v : fp.pool_inputs) {
        const auto& t = tape.value(v);
        const std::size_t C = t.dim(1), H = t.dim(2), W = t.dim(3);
        const T* p = t.ptr() + n * C * H * W;
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t oh = 0; oh < H / 2; ++oh) {
                for (std::size_t ow = 0; ow < W / 2; ++ow) {
                    std::uint32_t best = 0;
                    T bv = p[(c * H + 2 * oh) * W + 2 * ow];
                    for (std::uint32_t k = 1; k < 4; ++k) {
                        const T v2 = p[(c * H + 2 * oh + k / 2) * W + 2 * ow + k % 2];
                        if (v2 > bv) {
                            bv = v2;
                            best = k;
                        }
                    }
                    sig.push_back(best);
                }
            }
        }
    }
    return sig;
}

template <typename T>
T example_loss_value(const ag::Tape<T>& tape, const GradModel& model, const ForwardPass<T>& fp, std::size_t n,
                     int label) {
    if (model.loss_kind() == LossKind::Bce) {
        const T z = tape.value(fp.logits)[n];
        const T s = label == 1 ? -z : z;
        return std::max(s, T(0)) + std::log1p(std::exp(-std::abs(s)));
    }
    // -log softmax(z)[t] evaluated from the logits so that a near-zero loss
    // keeps its relative precision: log1p(sum_{k != t} exp(z_k - z_t)).
    const auto& z = tape.value(fp.logits);
    const std::size_t K = static_cast<std::size_t>(model.classes());
    const T zt = z[n * K + static_cast<std::size_t>(label)];
    T m = 0;
    for (std::size_t k = 0; k < K; ++k) {
        m = std::max(m, z[n * K + k] - zt);
    }
    T rest = 0;
    for (std::size_t k = 0; k < K; ++k) {
        if (k != static_cast<std::size_t>(label)) {
            rest += std::exp(z[n * K + k] - zt - m);
        }
    }
    return m == 0 ? std::log1p(rest) : m + std::log(rest + std::exp(-m));
}

/// Central-difference loss slopes for the given input coordinates, evaluated
/// in batches of perturbed copies with T-precision forwards. A coordinate whose
/// +/- step changes a relu or pooling decision has no value.
template <typename T>
std::vector<std::optional<double>> central_differences(const GradModel& model, std::span<const float> x, int label,
                                                       std::span<const std::size_t> coords, double step) {
    constexpr std::size_t F = kImageSide * kImageSide;
    constexpr std::size_t kChunk = 98; // coordinates per batch -> 196 images
    const std::vector<T> x0(x.begin(), x.end());
    std::vector<std::uint32_t> base_pattern;
    {
        ag::Tape<T> tape;
        const auto params = bind_params(tape, model, false);
        auto xv = tape.leaf(Tensor<T>({1, 1, kImageSide, kImageSide}, x0), false);
        base_pattern = activation_pattern(tape, forward(tape, model, params, xv, ag::Mode::Eval), 0, 1);
    }
    const T h = static_cast<T>(step);
    std::vector<std::optional<double>> out(coords.size());
    for (std::size_t c0 = 0; c0 < coords.size(); c0 += kChunk) {
        const std::size_t m = std::min(kChunk, coords.size() - c0);
        std::vector<T> px(2 * m * F);
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t coord = coords[c0 + j];
            std::copy(x0.begin(), x0.end(), px.begin() + static_cast<std::ptrdiff_t>((2 * j) * F));
            std::copy(x0.begin(), x0.end(), px.begin() + static_cast<std::ptrdiff_t>((2 * j + 1) * F));
            px[(2 * j) * F + coord] += h;
            px[(2 * j + 1) * F + coord] -= h;
        }
        ag::Tape<T> tape;
        const auto params = bind_params(tape, model, false);
        auto xv = tape.leaf(Tensor<T>({2 * m, 1, kImageSide, kImageSide}, std::move(px)), false);
        const auto fp = forward(tape, model, params, xv, ag::Mode::Eval);
        for (std::size_t j = 0; j < m; ++j) {
            if (activation_pattern(tape, fp, 2 * j, 2 * m) != base_pattern ||
                activation_pattern(tape, fp, 2 * j + 1, 2 * m) != base_pattern) {
                continue;
            }
            const T lp = example_loss_value(tape, model, fp, 2 * j, label);
            const T lm = example_loss_value(tape, model, fp, 2 * j + 1, label);
            out[c0 + j] = static_cast<double>((lp - lm) / (2 * h));
        }
    }
    return out;
}

} // namespace

FiniteDiffReport finite_diff_check(const GradModel& model, std::span<const float> x, int label, double step,
                                   double floor) {
    constexpr std::size_t F = kImageSide * kImageSide;
    if (x.size() != F) {
        throw Error(ErrorCode::ShapeMismatch, "finite_diff_check() takes a single 28x28 image");
    }
    const int labels[1] = {label};

    // Autodiff gradient at x.
    std::vector<double> g_ad;
    {
        ag::Tape<double> tape;
        const auto params = bind_params(tape, model, false);
        auto xv = image_leaf(tape, x, true);
        const auto fp = forward(tape, model, params, xv, ag::Mode::Eval);
        auto L = loss_node(tape, model, fp, labels, ag::Reduction::Sum);
        const auto g = ag::grad_wrt_input(tape, L, xv);
        g_ad.assign(g.data().begin(), g.data().end());
    }
    auto rel_error = [&](std::size_t coord, double g_fd) {
        return std::abs(g_ad[coord] - g_fd) / std::max(std::abs(g_fd), floor);
    };

    // A coordinate whose +/- step crosses a relu or pooling decision is retried
    // once with a 10x smaller step before it is excluded.
    std::vector<std::optional<double>> g_fd(F);
    std::vector<double> used_step(F, step);
    std::vector<std::size_t> pending(F);
    std::iota(pending.begin(), pending.end(), std::size_t{0});
    for (double h : {step, step / 10.0}) {
        const auto values = central_differences<double>(model, x, label, pending, h);
        std::vector<std::size_t> crossed;
        for (std::size_t i = 0; i < pending.size(); ++i) {
            if (values[i]) {
                g_fd[pending[i]] = values[i];
                used_step[pending[i]] = h;
            } else {
                crossed.push_back(pending[i]);
            }
        }
        pending = std::move(crossed);
    }

    // Double-precision differences of a loss near zero carry roundoff that
    // reaches 1e-4 relative error on coordinates whose gradient is ~1e-5 of the
    // largest one. Any coordinate that disagrees by more than 1e-6 is
    // re-evaluated with extended-precision forwards, which then decide.
    constexpr double kRefine = 1e-6;
    for (double h : {step, step / 10.0}) {
        std::vector<std::size_t> refine;
        for (std::size_t c = 0; c < F; ++c) {
            if (g_fd[c] && used_step[c] == h && rel_error(c, *g_fd[c]) > kRefine) {
                refine.push_back(c);
            }
        }
        const auto values = central_differences<long double>(model, x, label, refine, h);
        for (std::size_t i = 0; i < refine.size(); ++i) {
            g_fd[refine[i]] = values[i];
        }
    }

    FiniteDiffReport report;
    for (std::size_t c = 0; c < F; ++c) {
        if (g_fd[c]) {
            report.max_rel_error = std::max(report.max_rel_error, rel_error(c, *g_fd[c]));
            ++report.compared;
        } else {
            ++report.excluded;
        }
    }
    return report;
}

template std::vector<ag::Var> bind_params<float>(ag::Tape<float>&, const GradModel&, bool);
template std::vector<ag::Var> bind_params<double>(ag::Tape<double>&, const GradModel&, bool);
template ForwardPass<float> forward<float>(ag::Tape<float>&, const GradModel&, std::span<const ag::Var>, ag::Var,
                                           ag::Mode, std::mt19937_64*);
template ForwardPass<double> forward<double>(ag::Tape<double>&, const GradModel&, std::span<const ag::Var>, ag::Var,
                                             ag::Mode, std::mt19937_64*);
template std::vector<ag::Var> bind_params<long double>(ag::Tape<long double>&, const GradModel&, bool);
template ForwardPass<long double> forward<long double>(ag::Tape<long double>&, const GradModel&,
                                                       std::span<const ag::Var>, ag::Var, ag::Mode, std::mt19937_64*);
template ag::Var loss_node<float>(ag::Tape<float>&, const GradModel&, const ForwardPass<float>&,
                                  std::span<const int>, ag::Reduction);
template ag::Var loss_node<double>(ag::Tape<double>&, const GradModel&, const ForwardPass<double>&,
                                   std::span<const int>, ag::Reduction);

} // namespace occbench::model
