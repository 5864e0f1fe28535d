#pragma once

// Reverse-mode differentiation over dense batched tensors.
//
// A Tape owns every node created during a forward pass. Nodes are appended in
// creation order, which is already a topological order, so backward() is a
// single reverse sweep. Nodes that do not depend on any grad-requiring leaf
// keep no backward closure (and no saved activations).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "occbench/tensor.hpp"

namespace occbench::ag {

enum class Mode { Train, Eval };
enum class Reduction { Sum, Mean };

struct Var {
    std::size_t id = 0;
};

template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

    Var leaf(Tensor<T> value, bool requires_grad);

    /// Records an op result. The closure is kept only when a parent requires
    /// grad. Throws NonFinite if the value holds NaN/Inf.
    Var record(std::string_view op, Tensor<T> value, std::vector<Var> parents, BackwardFn fn);

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// d(loss)/d(v) after backward(); zeros when no path reached v.
    const Tensor<T>& grad(Var v) const;

    /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
    void backward(Var loss);

    /// Adds `g` into the gradient buffer of `v` (no-op when v needs no grad).
    void accumulate(Var v, std::span<const T> g);
    /// Gradient buffer of `v`, zero-initialised on first use.
    Tensor<T>& grad_buffer(Var v);

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

// ---- forward ops -----------------------------------------------------------

/// [N,K] x [K,M] -> [N,M]
template <typename T> Var matmul(Tape<T>& tape, Var a, Var b);
/// x [N,F] + b[F], or x [N,C,H,W] + b[C] broadcast over H,W.
template <typename T> Var add_bias(Tape<T>& tape, Var x, Var b);
/// Valid (no padding), stride-1 cross-correlation: x [N,C,H,W], w [O,C,KH,KW] -> [N,O,H-KH+1,W-KW+1].
template <typename T> Var conv2d(Tape<T>& tape, Var x, Var w);
/// Subgradient at exactly 0 is 0.
template <typename T> Var relu(Tape<T>& tape, Var x);
/// 2x2 / stride 2 max pooling on [N,C,H,W]; ties go to the first row-major maximum.
template <typename T> Var maxpool2(Tape<T>& tape, Var x);
/// [N, ...] -> [N, prod(...)]
template <typename T> Var flatten(Tape<T>& tape, Var x);
/// Row-wise log-softmax over the last dimension of [N,K].
template <typename T> Var logsoftmax(Tape<T>& tape, Var x);
template <typename T> Var sigmoid(Tape<T>& tape, Var x);
/// Inverted dropout. Eval mode returns `x` itself.
template <typename T> Var dropout(Tape<T>& tape, Var x, double p, Mode mode, std::mt19937_64* rng);

// ---- losses ----------------------------------------------------------------

/// Negative log likelihood of `labels` under log-probabilities [N,K].
template <typename T> Var nll_loss(Tape<T>& tape, Var logprobs, std::span<const int> labels, Reduction red);

inline constexpr double kBceEpsilon = 1e-7;
/// Binary cross entropy on probabilities [N,1] (or [N]), p clamped to [eps, 1-eps].
template <typename T> Var bce_loss(Tape<T>& tape, Var probs, std::span<const int> labels, Reduction red);
/// Binary cross entropy evaluated from logits [N,1]: softplus(z) - t*z, computed
/// without forming p, so confident examples keep a nonzero gradient sigma(z) - t.
template <typename T> Var bce_with_logits(Tape<T>& tape, Var logits, std::span<const int> labels, Reduction red);

// ---- elementwise helpers ---------------------------------------------------

template <typename T> Var add(Tape<T>& tape, Var a, Var b);
template <typename T> Var mul(Tape<T>& tape, Var a, Var b);
template <typename T> Var scale(Tape<T>& tape, Var a, T s);
template <typename T> Var sum(Tape<T>& tape, Var a);

// ---- gradient queries ------------------------------------------------------

/// Runs backward from `loss` and returns d(loss)/d(x).
template <typename T> Tensor<T> grad_wrt_input(Tape<T>& tape, Var loss, Var x);
/// Runs backward from `loss` and returns one gradient per parameter, in order.
template <typename T> std::vector<Tensor<T>> grad_wrt_params(Tape<T>& tape, Var loss, std::span<const Var> params);

/// Unrolls one [C,H,W] input into [C*KH*KW, Ho*Wo] columns (valid padding, stride 1).
template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t KH, std::size_t KW, T* cols);

/// Uniform double in [0,1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace occbench::ag
