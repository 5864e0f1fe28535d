#include "occbench/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace occbench::ag {

namespace {

#if defined(__GLIBC__)
// Every training step allocates and frees the same multi-megabyte activation
// buffers. glibc serves those with mmap/munmap by default, which costs a page
// fault per touched page; keeping them on the heap removes that overhead.
const bool kAllocatorTuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
}();
#endif

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

[[noreturn]] void shape_error(std::string_view op, const std::string& detail) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + detail);
}

void require_rank(std::string_view op, const Shape& s, std::size_t rank) {
    if (s.size() != rank) {
        shape_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_string(s));
    }
}

template <typename T>
void col2im_add(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t KH, std::size_t KW, T* dx) {
    const std::size_t Ho = H - KH + 1;
    const std::size_t Wo = W - KW + 1;
    const std::size_t P = Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t kh = 0; kh < KH; ++kh) {
            for (std::size_t kw = 0; kw < KW; ++kw) {
                const T* src = cols + ((c * KH + kh) * KW + kw) * P;
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    T* d = dx + (c * H + oh + kh) * W + kw;
                    const T* s = src + oh * Wo;
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        d[ow] += s[ow];
                    }
                }
            }
        }
    }
}

template <typename T>
Var reduce_loss(Tape<T>& tape, std::string_view op, std::vector<T> per_example, std::vector<T> dloss_dinput,
                Var input, Reduction red) {
    const T n = static_cast<T>(per_example.size());
    T total = 0;
    for (auto v : per_example) {
        total += v;
    }
    const T factor = red == Reduction::Mean ? T(1) / n : T(1);
    Tensor<T> out({1}, std::vector<T>{total * factor});
    return tape.record(op, std::move(out), {input},
                       [input, factor, d = std::move(dloss_dinput)](Tape<T>& t, const Tensor<T>& og) {
                           auto& g = t.grad_buffer(input);
                           const T s = og[0] * factor;
                           for (std::size_t i = 0; i < d.size(); ++i) {
                               g[i] += s * d[i];
                           }
                       });
}

} // namespace

template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t KH, std::size_t KW, T* cols) {
    const std::size_t Ho = H - KH + 1;
    const std::size_t Wo = W - KW + 1;
    const std::size_t P = Ho * Wo;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t kh = 0; kh < KH; ++kh) {
            for (std::size_t kw = 0; kw < KW; ++kw) {
                T* dst = cols + ((c * KH + kh) * KW + kw) * P;
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    const T* src = x + (c * H + oh + kh) * W + kw;
                    T* d = dst + oh * Wo;
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        d[ow] = src[ow];
                    }
                }
            }
        }
    }
}


// ---- Tape ------------------------------------------------------------------

template <typename T>
Var Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
    return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(std::string_view op, Tensor<T> value, std::vector<Var> parents, BackwardFn fn) {
    if (!value.all_finite()) {
        throw Error(ErrorCode::NonFinite, std::string(op) + " produced a non-finite value");
    }
    const bool rg = std::any_of(parents.begin(), parents.end(), [&](Var p) { return nodes_.at(p.id).requires_grad; });
    nodes_.push_back(Node{std::move(value), {}, rg, rg ? std::move(fn) : BackwardFn{}});
    return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
    const auto& node = nodes_.at(v.id);
    if (node.grad.empty() && !node.value.empty()) {
        // Unreached (or never differentiated) nodes report an all-zero gradient.
        auto& self = const_cast<Node&>(node);
        self.grad = Tensor<T>(node.value.shape());
    }
    return node.grad;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
    auto& node = nodes_.at(v.id);
    if (node.grad.empty()) {
        node.grad = Tensor<T>(node.value.shape());
    }
    return node.grad;
}

template <typename T>
void Tape<T>::accumulate(Var v, std::span<const T> g) {
    if (!nodes_.at(v.id).requires_grad) {
        return;
    }
    auto& buf = grad_buffer(v);
    if (buf.size() != g.size()) {
        shape_error("accumulate", "gradient length mismatch");
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        buf[i] += g[i];
    }
}

template <typename T>
void Tape<T>::backward(Var loss) {
    if (nodes_.at(loss.id).value.size() != 1) {
        throw Error(ErrorCode::NonScalarLoss,
                    "backward() needs a scalar loss, got shape " + shape_string(nodes_[loss.id].value.shape()));
    }
    for (auto& n : nodes_) {
        n.grad = Tensor<T>();
    }
    if (!nodes_[loss.id].requires_grad) {
        return;
    }
    nodes_[loss.id].grad = Tensor<T>(nodes_[loss.id].value.shape(), T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (node.backward && !node.grad.empty()) {
            node.backward(*this, node.grad);
        }
    }
}

// ---- ops -------------------------------------------------------------------

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
    const auto& A = tape.value(a);
    const auto& B = tape.value(b);
    require_rank("matmul", A.shape(), 2);
    require_rank("matmul", B.shape(), 2);
    const std::size_t N = A.dim(0), K = A.dim(1), M = B.dim(1);
    if (B.dim(0) != K) {
        shape_error("matmul", shape_string(A.shape()) + " x " + shape_string(B.shape()));
    }
    Tensor<T> out({N, M});
    MapR<T>(out.ptr(), N, M).noalias() = CMapR<T>(A.ptr(), N, K) * CMapR<T>(B.ptr(), K, M);
    return tape.record("matmul", std::move(out), {a, b}, [a, b, N, K, M](Tape<T>& t, const Tensor<T>& og) {
        CMapR<T> dC(og.ptr(), N, M);
        if (t.requires_grad(a)) {
            MapR<T>(t.grad_buffer(a).ptr(), N, K).noalias() +=
                dC * CMapR<T>(t.value(b).ptr(), K, M).transpose();
        }
        if (t.requires_grad(b)) {
            MapR<T>(t.grad_buffer(b).ptr(), K, M).noalias() +=
                CMapR<T>(t.value(a).ptr(), N, K).transpose() * dC;
        }
    });
}

template <typename T>
Var add_bias(Tape<T>& tape, Var x, Var b) {
    const auto& X = tape.value(x);
    const auto& B = tape.value(b);
    require_rank("add_bias", B.shape(), 1);
    if (X.rank() != 2 && X.rank() != 4) {
        shape_error("add_bias", "input must be [N,F] or [N,C,H,W], got " + shape_string(X.shape()));
    }
    const std::size_t N = X.dim(0);
    const std::size_t C = X.dim(1);
    const std::size_t inner = X.rank() == 4 ? X.dim(2) * X.dim(3) : 1;
    if (B.size() != C) {
        shape_error("add_bias", "bias " + shape_string(B.shape()) + " vs input " + shape_string(X.shape()));
    }
    Tensor<T> out = X;
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            T* p = out.ptr() + (n * C + c) * inner;
            const T bc = B[c];
            for (std::size_t i = 0; i < inner; ++i) {
                p[i] += bc;
            }
        }
    }
    return tape.record("add_bias", std::move(out), {x, b}, [x, b, N, C, inner](Tape<T>& t, const Tensor<T>& og) {
        if (t.requires_grad(x)) {
            t.accumulate(x, og.data());
        }
        if (t.requires_grad(b)) {
            auto& gb = t.grad_buffer(b);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t c = 0; c < C; ++c) {
                    const T* p = og.ptr() + (n * C + c) * inner;
                    T acc = 0;
                    for (std::size_t i = 0; i < inner; ++i) {
                        acc += p[i];
                    }
                    gb[c] += acc;
                }
            }
        }
    });
}

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w) {
    const auto& X = tape.value(x);
    const auto& Wt = tape.value(w);
    require_rank("conv2d", X.shape(), 4);
    require_rank("conv2d", Wt.shape(), 4);
    const std::size_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    const std::size_t O = Wt.dim(0), KH = Wt.dim(2), KW = Wt.dim(3);
    if (Wt.dim(1) != C || KH > H || KW > W) {
        shape_error("conv2d", "input " + shape_string(X.shape()) + " vs kernel " + shape_string(Wt.shape()));
    }
    const std::size_t Ho = H - KH + 1, Wo = W - KW + 1, P = Ho * Wo, CKK = C * KH * KW;

    // Columns are rebuilt per sample in the backward pass instead of being kept
    // for the whole batch: one sample's columns stay cache-resident.
    Tensor<T> out({N, O, Ho, Wo});
    std::vector<T> cols(CKK * P);
    CMapR<T> Wm(Wt.ptr(), O, CKK);
    for (std::size_t n = 0; n < N; ++n) {
        im2col(X.ptr() + n * C * H * W, C, H, W, KH, KW, cols.data());
        MapR<T>(out.ptr() + n * O * P, O, P).noalias() = Wm * CMapR<T>(cols.data(), CKK, P);
    }
    return tape.record("conv2d", std::move(out), {x, w}, [=](Tape<T>& t, const Tensor<T>& og) {
        const bool gx = t.requires_grad(x);
        const bool gw = t.requires_grad(w);
        const auto& Xv = t.value(x);
        CMapR<T> Wmat(t.value(w).ptr(), O, CKK);
        std::vector<T> buf(CKK * P);
        for (std::size_t n = 0; n < N; ++n) {
            CMapR<T> dout(og.ptr() + n * O * P, O, P);
            if (gw) {
                im2col(Xv.ptr() + n * C * H * W, C, H, W, KH, KW, buf.data());
                MapR<T>(t.grad_buffer(w).ptr(), O, CKK).noalias() += dout * CMapR<T>(buf.data(), CKK, P).transpose();
            }
            if (gx) {
                MapR<T>(buf.data(), CKK, P).noalias() = Wmat.transpose() * dout;
                col2im_add(buf.data(), C, H, W, KH, KW, t.grad_buffer(x).ptr() + n * C * H * W);
            }
        }
    });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
    Tensor<T> out = tape.value(x);
    for (auto& v : out.data()) {
        v = v > T(0) ? v : T(0);
    }
    return tape.record("relu", std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& og) {
        const auto& in = t.value(x);
        auto& g = t.grad_buffer(x);
        const T* ip = in.ptr();
        const T* op = og.ptr();
        T* gp = g.ptr();
        for (std::size_t i = 0; i < in.size(); ++i) {
            gp[i] += ip[i] > T(0) ? op[i] : T(0);
        }
    });
}

template <typename T>
Var maxpool2(Tape<T>& tape, Var x) {
    const auto& X = tape.value(x);
    require_rank("maxpool2", X.shape(), 4);
    const std::size_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    const std::size_t Ho = H / 2, Wo = W / 2;
    if (Ho == 0 || Wo == 0) {
        shape_error("maxpool2", "input too small: " + shape_string(X.shape()));
    }
    Tensor<T> out({N, C, Ho, Wo});
    std::vector<std::uint32_t> arg(out.size());
    std::size_t o = 0;
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const std::size_t base = nc * H * W;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
            for (std::size_t ow = 0; ow < Wo; ++ow, ++o) {
                std::size_t best = base + (2 * oh) * W + 2 * ow;
                for (std::size_t dh = 0; dh < 2; ++dh) {
                    for (std::size_t dw = 0; dw < 2; ++dw) {
                        const std::size_t idx = base + (2 * oh + dh) * W + 2 * ow + dw;
                        if (X[idx] > X[best]) {
                            best = idx;
                        }
                    }
                }
                out[o] = X[best];
                arg[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return tape.record("maxpool2", std::move(out), {x}, [x, arg = std::move(arg)](Tape<T>& t, const Tensor<T>& og) {
        auto& g = t.grad_buffer(x);
        for (std::size_t i = 0; i < arg.size(); ++i) {
            g[arg[i]] += og[i];
        }
    });
}

template <typename T>
Var flatten(Tape<T>& tape, Var x) {
    const auto& X = tape.value(x);
    if (X.rank() < 1) {
        shape_error("flatten", "scalar input");
    }
    const std::size_t N = X.dim(0);
    Tensor<T> out = X.reshaped({N, N ? X.size() / N : 0});
    return tape.record("flatten", std::move(out), {x},
                       [x](Tape<T>& t, const Tensor<T>& og) { t.accumulate(x, og.data()); });
}

template <typename T>
Var logsoftmax(Tape<T>& tape, Var x) {
    const auto& X = tape.value(x);
    require_rank("logsoftmax", X.shape(), 2);
    const std::size_t N = X.dim(0), K = X.dim(1);
    Tensor<T> out({N, K});
    for (std::size_t n = 0; n < N; ++n) {
        const T* z = X.ptr() + n * K;
        const std::size_t am = static_cast<std::size_t>(std::max_element(z, z + K) - z);
        T rest = 0;
        for (std::size_t k = 0; k < K; ++k) {
            if (k != am) {
                rest += std::exp(z[k] - z[am]);
            }
        }
        // Shift first, then subtract: keeps log-probabilities of confident rows
        // accurate to the last bit instead of to the magnitude of the logits.
        const T lse = std::log1p(rest);
        for (std::size_t k = 0; k < K; ++k) {
            out[n * K + k] = (z[k] - z[am]) - lse;
        }
    }
    return tape.record("logsoftmax", std::move(out), {x}, [x, y = Var{tape.size()}, N, K](Tape<T>& t, const Tensor<T>& og) {
        const auto& Y = t.value(y);
        auto& g = t.grad_buffer(x);
        for (std::size_t n = 0; n < N; ++n) {
            T s = 0;
            for (std::size_t k = 0; k < K; ++k) {
                s += og[n * K + k];
            }
            for (std::size_t k = 0; k < K; ++k) {
                g[n * K + k] += og[n * K + k] - std::exp(Y[n * K + k]) * s;
            }
        }
    });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
    Tensor<T> out = tape.value(x);
    for (auto& v : out.data()) {
        v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    return tape.record("sigmoid", std::move(out), {x}, [x, y = Var{tape.size()}](Tape<T>& t, const Tensor<T>& og) {
        const auto& Y = t.value(y);
        auto& g = t.grad_buffer(x);
        for (std::size_t i = 0; i < Y.size(); ++i) {
            g[i] += og[i] * Y[i] * (T(1) - Y[i]);
        }
    });
}

template <typename T>
Var dropout(Tape<T>& tape, Var x, double p, Mode mode, std::mt19937_64* rng) {
    if (mode == Mode::Eval || p <= 0.0) {
        return x;
    }
    if (rng == nullptr || p >= 1.0) {
        throw Error(ErrorCode::InvalidConfig, "dropout in train mode needs an rng and p < 1");
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    Tensor<T> out = tape.value(x);
    std::vector<T> mask(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = uniform01(*rng) < p ? T(0) : keep_scale;
        out[i] *= mask[i];
    }
    return tape.record("dropout", std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>& t, const Tensor<T>& og) {
        auto& g = t.grad_buffer(x);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            g[i] += og[i] * mask[i];
        }
    });
}

// ---- losses ----------------------------------------------------------------

template <typename T>
Var nll_loss(Tape<T>& tape, Var logprobs, std::span<const int> labels, Reduction red) {
    const auto& L = tape.value(logprobs);
    require_rank("nll_loss", L.shape(), 2);
    const std::size_t N = L.dim(0), K = L.dim(1);
    if (labels.size() != N || N == 0) {
        shape_error("nll_loss", std::to_string(labels.size()) + " labels for batch of " + std::to_string(N));
    }
    std::vector<T> per(N);
    std::vector<T> d(N * K, T(0));
    for (std::size_t n = 0; n < N; ++n) {
        if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= K) {
            throw Error(ErrorCode::InvalidLabel, "label " + std::to_string(labels[n]) + " for " +
                                                     std::to_string(K) + " classes");
        }
        per[n] = -L[n * K + static_cast<std::size_t>(labels[n])];
        d[n * K + static_cast<std::size_t>(labels[n])] = T(-1);
    }
    return reduce_loss(tape, "nll_loss", std::move(per), std::move(d), logprobs, red);
}

template <typename T>
Var bce_loss(Tape<T>& tape, Var probs, std::span<const int> labels, Reduction red) {
    const auto& P = tape.value(probs);
    const std::size_t N = P.size();
    if (labels.size() != N || N == 0 || (P.rank() == 2 && P.dim(1) != 1)) {
        shape_error("bce_loss", "probabilities " + shape_string(P.shape()) + " vs " + std::to_string(labels.size()) +
                                    " labels");
    }
    const T lo = static_cast<T>(kBceEpsilon);
    const T hi = T(1) - lo;
    std::vector<T> per(N);
    std::vector<T> d(N);
    for (std::size_t n = 0; n < N; ++n) {
        if (labels[n] != 0 && labels[n] != 1) {
            throw Error(ErrorCode::InvalidLabel, "binary label must be 0 or 1, got " + std::to_string(labels[n]));
        }
        const T t = static_cast<T>(labels[n]);
        const T p = std::clamp(P[n], lo, hi);
        per[n] = -(t * std::log(p) + (T(1) - t) * std::log(T(1) - p));
        // Derivative of the clamped expression: zero where the clamp is active.
        d[n] = (P[n] < lo || P[n] > hi) ? T(0) : -t / p + (T(1) - t) / (T(1) - p);
    }
    return reduce_loss(tape, "bce_loss", std::move(per), std::move(d), probs, red);
}

template <typename T>
Var bce_with_logits(Tape<T>& tape, Var logits, std::span<const int> labels, Reduction red) {
    const auto& Z = tape.value(logits);
    const std::size_t N = Z.size();
    if (labels.size() != N || N == 0 || (Z.rank() == 2 && Z.dim(1) != 1)) {
        shape_error("bce_with_logits", "logits " + shape_string(Z.shape()) + " vs " +
                                           std::to_string(labels.size()) + " labels");
    }
    auto softplus = [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); };
    auto sig = [](T v) { return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); };
    std::vector<T> per(N);
    std::vector<T> d(N);
    for (std::size_t n = 0; n < N; ++n) {
        if (labels[n] != 0 && labels[n] != 1) {
            throw Error(ErrorCode::InvalidLabel, "binary label must be 0 or 1, got " + std::to_string(labels[n]));
        }
        const T z = Z[n];
        if (labels[n] == 1) {
            per[n] = softplus(-z);
            d[n] = -sig(-z);
        } else {
            per[n] = softplus(z);
            d[n] = sig(z);
        }
    }
    return reduce_loss(tape, "bce_with_logits", std::move(per), std::move(d), logits, red);
}

// ---- elementwise helpers ---------------------------------------------------

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
    const auto& A = tape.value(a);
    const auto& B = tape.value(b);
    if (A.shape() != B.shape()) {
        shape_error("add", shape_string(A.shape()) + " vs " + shape_string(B.shape()));
    }
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += B[i];
    }
    return tape.record("add", std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& og) {
        t.accumulate(a, og.data());
        t.accumulate(b, og.data());
    });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
    const auto& A = tape.value(a);
    const auto& B = tape.value(b);
    if (A.shape() != B.shape()) {
        shape_error("mul", shape_string(A.shape()) + " vs " + shape_string(B.shape()));
    }
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= B[i];
    }
    return tape.record("mul", std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& og) {
        const auto& Av = t.value(a);
        const auto& Bv = t.value(b);
        if (t.requires_grad(a)) {
            auto& g = t.grad_buffer(a);
            for (std::size_t i = 0; i < og.size(); ++i) {
                g[i] += og[i] * Bv[i];
            }
        }
        if (t.requires_grad(b)) {
            auto& g = t.grad_buffer(b);
            for (std::size_t i = 0; i < og.size(); ++i) {
                g[i] += og[i] * Av[i];
            }
        }
    });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T s) {
    Tensor<T> out = tape.value(a);
    for (auto& v : out.data()) {
        v *= s;
    }
    return tape.record("scale", std::move(out), {a}, [a, s](Tape<T>& t, const Tensor<T>& og) {
        auto& g = t.grad_buffer(a);
        for (std::size_t i = 0; i < og.size(); ++i) {
            g[i] += s * og[i];
        }
    });
}

template <typename T>
Var sum(Tape<T>& tape, Var a) {
    T total = 0;
    for (auto v : tape.value(a).data()) {
        total += v;
    }
    return tape.record("sum", Tensor<T>({1}, std::vector<T>{total}), {a}, [a](Tape<T>& t, const Tensor<T>& og) {
        auto& g = t.grad_buffer(a);
        for (auto& v : g.data()) {
            v += og[0];
        }
    });
}

// ---- gradient queries ------------------------------------------------------

template <typename T>
Tensor<T> grad_wrt_input(Tape<T>& tape, Var loss, Var x) {
    tape.backward(loss);
    return tape.grad(x);
}

template <typename T>
std::vector<Tensor<T>> grad_wrt_params(Tape<T>& tape, Var loss, std::span<const Var> params) {
    tape.backward(loss);
    std::vector<Tensor<T>> out;
    out.reserve(params.size());
    for (auto p : params) {
        out.push_back(tape.grad(p));
    }
    return out;
}

#define OCCBENCH_INSTANTIATE(T)                                                                    \
    template class Tape<T>;                                                                        \
    template void im2col<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t, T*); \
    template Var matmul<T>(Tape<T>&, Var, Var);                                                    \
    template Var add_bias<T>(Tape<T>&, Var, Var);                                                  \
    template Var conv2d<T>(Tape<T>&, Var, Var);                                                    \
    template Var relu<T>(Tape<T>&, Var);                                                           \
    template Var maxpool2<T>(Tape<T>&, Var);                                                       \
    template Var flatten<T>(Tape<T>&, Var);                                                        \
    template Var logsoftmax<T>(Tape<T>&, Var);                                                     \
    template Var sigmoid<T>(Tape<T>&, Var);                                                        \
    template Var dropout<T>(Tape<T>&, Var, double, Mode, std::mt19937_64*);                        \
    template Var nll_loss<T>(Tape<T>&, Var, std::span<const int>, Reduction);                      \
    template Var bce_loss<T>(Tape<T>&, Var, std::span<const int>, Reduction);                      \
    template Var bce_with_logits<T>(Tape<T>&, Var, std::span<const int>, Reduction);               \
    template Var add<T>(Tape<T>&, Var, Var);                                                       \
    template Var mul<T>(Tape<T>&, Var, Var);                                                       \
    template Var scale<T>(Tape<T>&, Var, T);                                                       \
    template Var sum<T>(Tape<T>&, Var);                                                            \
    template Tensor<T> grad_wrt_input<T>(Tape<T>&, Var, Var);                                      \
    template std::vector<Tensor<T>> grad_wrt_params<T>(Tape<T>&, Var, std::span<const Var>);

OCCBENCH_INSTANTIATE(float)
OCCBENCH_INSTANTIATE(double)
OCCBENCH_INSTANTIATE(long double)

#undef OCCBENCH_INSTANTIATE

} // namespace occbench::ag
