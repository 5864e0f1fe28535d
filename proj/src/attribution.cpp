#include "occbench/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace occbench::attr {

std::string_view method_name(Method m) noexcept {
    switch (m) {
    case Method::GradOrig: return "grad_orig";
    case Method::AbsGrad: return "abs_grad";
    case Method::GradInp: return "grad_inp";
    case Method::Random: return "random";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (auto m : kAllMethods) {
        if (method_name(m) == name) {
            return m;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown attribution method '" + std::string(name) + "'");
}

namespace {

template <typename T>
Tensor<T> single_gradient(const model::GradModel& model, const Tensor<float>& x, int label) {
    if (x.size() != model::kImageSide * model::kImageSide) {
        throw Error(ErrorCode::ShapeMismatch, "loss_gradient expects a 28x28 input, got " + shape_string(x.shape()));
    }
    ag::Tape<T> tape;
    const auto params = model::bind_params(tape, model, false);
    std::vector<T> px(x.data().begin(), x.data().end());
    auto xv = tape.leaf(Tensor<T>({1, 1, model::kImageSide, model::kImageSide}, std::move(px)), true);
    const auto fwd = model::forward(tape, model, params, xv, ag::Mode::Eval);
    const int labels[1] = {label};
    auto L = model::loss_node(tape, model, fwd, labels, ag::Reduction::Sum);
    return ag::grad_wrt_input(tape, L, xv).reshaped(x.shape());
}

} // namespace

Tensor<float> loss_gradient(const model::GradModel& model, const Tensor<float>& x, int label) {
    return single_gradient<float>(model, x, label);
}

Tensor<double> loss_gradient_f64(const model::GradModel& model, const Tensor<float>& x, int label) {
    return single_gradient<double>(model, x, label);
}

std::vector<float> loss_gradients(const model::GradModel& model, std::span<const float> images,
                                  std::span<const int> labels, std::size_t batch) {
    constexpr std::size_t F = model::kImageSide * model::kImageSide;
    if (images.size() != labels.size() * F) {
        throw Error(ErrorCode::ShapeMismatch, "loss_gradients(): image buffer does not match label count");
    }
    std::vector<float> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < labels.size(); start += batch) {
        const std::size_t n = std::min(batch, labels.size() - start);
        ag::Tape<float> tape;
        const auto params = model::bind_params(tape, model, false);
        auto xv = tape.leaf(Tensor<float>({n, 1, model::kImageSide, model::kImageSide},
                                          std::vector<float>(images.begin() + static_cast<std::ptrdiff_t>(start * F),
                                                             images.begin() + static_cast<std::ptrdiff_t>((start + n) * F))),
                            true);
        const auto fwd = model::forward(tape, model, params, xv, ag::Mode::Eval);
        auto L = model::loss_node(tape, model, fwd, labels.subspan(start, n), ag::Reduction::Sum);
        const auto g = ag::grad_wrt_input(tape, L, xv);
        out.insert(out.end(), g.data().begin(), g.data().end());
    }
    return out;
}

void attribute_into(Method method, std::span<const float> x, std::span<const float> g, std::uint64_t seed,
                    std::span<float> out) {
    if (x.size() != g.size() || out.size() != x.size()) {
        throw Error(ErrorCode::ShapeMismatch, "attribute(): input, gradient and output sizes differ");
    }
    switch (method) {
    case Method::GradOrig:
        std::copy(g.begin(), g.end(), out.begin());
        break;
    case Method::AbsGrad:
        std::transform(g.begin(), g.end(), out.begin(), [](float v) { return std::abs(v); });
        break;
    case Method::GradInp:
        std::transform(g.begin(), g.end(), x.begin(), out.begin(), [](float a, float b) { return a * b; });
        break;
    case Method::Random: {
        std::mt19937_64 rng(seed);
        for (auto& v : out) {
            v = static_cast<float>(ag::uniform01(rng));
        }
        break;
    }
    }
}

AttributionMap attribute(Method method, const Tensor<float>& x, const Tensor<float>& g, std::uint64_t seed) {
    if (x.shape() != g.shape()) {
        throw Error(ErrorCode::ShapeMismatch, "input " + shape_string(x.shape()) + " vs gradient " +
                                                  shape_string(g.shape()));
    }
    AttributionMap map{method, Tensor<float>(x.shape()), std::nullopt};
    if (method == Method::Random) {
        map.seed = seed;
    }
    attribute_into(method, x.data(), g.data(), seed, map.scores.data());
    return map;
}

RankOrder rank(Method method, std::span<const float> scores) {
    RankOrder r;
    r.order.resize(scores.size());
    std::iota(r.order.begin(), r.order.end(), std::uint32_t{0});
    // Stable sort over an ascending index sequence: ties keep ascending index order.
    if (rank_order(method) == SortOrder::Ascending) {
        std::stable_sort(r.order.begin(), r.order.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });
    } else {
        std::stable_sort(r.order.begin(), r.order.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
    }
    return r;
}

RankOrder rank(const AttributionMap& map) {
    return rank(map.method, map.scores.data());
}

std::uint64_t example_seed(std::uint64_t global_seed, std::size_t example_index) noexcept {
    // splitmix64 finaliser over a combination of both inputs
    std::uint64_t z = global_seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(example_index) + 1;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

pgm::GrayImage to_image(const AttributionMap& map) {
    const auto& s = map.scores;
    pgm::GrayImage img;
    img.height = s.rank() == 2 ? s.dim(0) : 1;
    img.width = s.size() / std::max<std::size_t>(img.height, 1);
    img.pixels.assign(s.size(), 0);
    if (s.empty()) {
        return img;
    }
    const auto [lo, hi] = std::minmax_element(s.data().begin(), s.data().end());
    const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
    if (range > 0.0) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (s[i] - *lo) / range));
        }
    }
    return img;
}

} // namespace occbench::attr
