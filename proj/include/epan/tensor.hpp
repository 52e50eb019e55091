#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "epan/errors.hpp"

namespace epan {

template <class T>
class Tensor;

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

// Thread-local autograd switch. Ops recorded while disabled carry no tape.
bool autograd_enabled();
void set_autograd_enabled(bool enabled);

struct NoGradGuard {
    NoGradGuard() : prev_(autograd_enabled()) { set_autograd_enabled(false); }
    ~NoGradGuard() { set_autograd_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Per-backward-pass gradient buffers, keyed by node. Leaf tensors copy their
// buffer into Tensor::grad at the end of the pass, so repeated backward calls
// accumulate instead of double-counting.
template <class T>
class GradFlow {
public:
    std::vector<T>& of(const Tensor<T>& node) {
        auto it = buffers_.find(&node);
        if (it == buffers_.end()) {
            it = buffers_.emplace(&node, std::vector<T>(node.numel(), T(0))).first;
        }
        return it->second;
    }

    const std::vector<T>* find(const Tensor<T>& node) const {
        auto it = buffers_.find(&node);
        return it == buffers_.end() ? nullptr : &it->second;
    }

private:
    std::unordered_map<const Tensor<T>*, std::vector<T>> buffers_;
};

namespace detail {

inline std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
}

} // namespace detail

// Dense N-dimensional array (batch, channels, height, width for 4-D) with an
// optional gradient accumulator and reverse-mode tape linkage.
template <class T>
class Tensor : public std::enable_shared_from_this<Tensor<T>> {
public:
    using Backprop =
        std::function<void(const Tensor<T>& self, const std::vector<T>& gout, GradFlow<T>& flow)>;

    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad; // empty until the first backward touches this leaf
    bool requires_grad = false;

    std::vector<TensorPtr<T>> parents;
    Backprop backprop;

    Tensor(std::vector<int> s, std::vector<T> d, bool req)
        : shape(std::move(s)), data(std::move(d)), requires_grad(req) {
        if (shape.empty()) {
            throw dimension_error("tensor: shape must have at least one axis");
        }
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (shape[i] < 0) {
                throw dimension_error("tensor: axis " + std::to_string(i) +
                                      " has negative extent " + std::to_string(shape[i]));
            }
        }
        if (detail::shape_numel(shape) != data.size()) {
            throw dimension_error("tensor: shape " + detail::shape_str(shape) + " implies " +
                                  std::to_string(detail::shape_numel(shape)) +
                                  " values but data holds " + std::to_string(data.size()));
        }
    }

    Tensor(const Tensor&) = delete;
    Tensor& operator=(const Tensor&) = delete;

    std::size_t numel() const { return data.size(); }
    bool is_leaf() const { return parents.empty(); }

    T item() const {
        if (data.size() != 1) {
            throw contract_error("item: tensor has " + std::to_string(data.size()) +
                                 " elements, expected exactly 1");
        }
        return data[0];
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

    void accumulate_grad(const std::vector<T>& g) {
        if (grad.empty()) {
            grad.assign(data.size(), T(0));
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            grad[i] += g[i];
        }
    }
};

template <class T>
TensorPtr<T> tensor_from(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
    return std::make_shared<Tensor<T>>(std::move(shape), std::move(values), requires_grad);
}

template <class T>
TensorPtr<T> tensor_zeros(std::vector<int> shape, bool requires_grad = false) {
    std::vector<T> d(detail::shape_numel(shape), T(0));
    return std::make_shared<Tensor<T>>(std::move(shape), std::move(d), requires_grad);
}

template <class T>
TensorPtr<T> tensor_full(std::vector<int> shape, T value, bool requires_grad = false) {
    std::vector<T> d(detail::shape_numel(shape), value);
    return std::make_shared<Tensor<T>>(std::move(shape), std::move(d), requires_grad);
}

template <class T>
TensorPtr<T> tensor_scalar(T value, bool requires_grad = false) {
    return tensor_from<T>({1}, {value}, requires_grad);
}

namespace detail {

template <class T>
bool tape_wanted(std::initializer_list<const TensorPtr<T>*> inputs) {
    if (!autograd_enabled()) {
        return false;
    }
    for (const TensorPtr<T>* in : inputs) {
        if (*in && (*in)->requires_grad) {
            return true;
        }
    }
    return false;
}

template <class T>
void append_parent_if_grad(const TensorPtr<T>& t, std::vector<TensorPtr<T>>& parents) {
    if (t && t->requires_grad) {
        parents.push_back(t);
    }
}

// im2col, (C*kh*kw) x (Ho*Wo) row-major. Out-of-bounds taps are zero padding.
template <class T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo,
            T* col) {
    const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                T* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* dst = row + static_cast<std::size_t>(oy) * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + Wo, T(0));
                        continue;
                    }
                    const T* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
                    if (stride == 1) {
                        const int ox_lo = std::max(0, pad - kx);
                        const int ox_hi = std::min(Wo, W + pad - kx);
                        if (ox_lo > 0) std::fill(dst, dst + ox_lo, T(0));
                        if (ox_hi > ox_lo) {
                            std::copy(src + (ox_lo - pad + kx), src + (ox_hi - pad + kx), dst + ox_lo);
                        }
                        if (ox_hi < Wo) std::fill(dst + std::max(ox_hi, ox_lo), dst + Wo, T(0));
                    } else {
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add of a column buffer back onto the (C,H,W) input gradient.
template <class T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
                int Wo, T* dx) {
    const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const T* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    T* dst = dx + (static_cast<std::size_t>(c) * H + iy) * W;
                    const T* src = row + static_cast<std::size_t>(oy) * Wo;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) {
                            dst[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

// c (m x n) += a (m x k) * b (k x n), all row-major contiguous.
template <class T>
void gemm_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            const T* brow = b + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

} // namespace detail

// 2-D cross-correlation with zero padding. input (N,Cin,H,W), weight
// (Cout,Cin,kH,kW), bias (Cout). Output spatial size is
// floor((H + 2*pad - kH)/stride) + 1 per dimension.
template <class T>
TensorPtr<T> conv2d(const TensorPtr<T>& input, const TensorPtr<T>& weight, const TensorPtr<T>& bias,
                    int stride, int padding) {
    if (!input || input->shape.size() != 4) {
        throw dimension_error("conv2d: input must be 4-D (batch, channels, height, width)");
    }
    if (!weight || weight->shape.size() != 4) {
        throw dimension_error("conv2d: weight must be 4-D (out_ch, in_ch, kH, kW)");
    }
    if (stride < 1) {
        throw parameter_error("conv2d: stride must be >= 1, got " + std::to_string(stride));
    }
    if (padding < 0) {
        throw parameter_error("conv2d: padding must be >= 0, got " + std::to_string(padding));
    }
    const int N = input->shape[0], Cin = input->shape[1], H = input->shape[2], W = input->shape[3];
    const int Cout = weight->shape[0], kh = weight->shape[2], kw = weight->shape[3];
    if (weight->shape[1] != Cin) {
        throw dimension_error("conv2d: channel axis (1) mismatch: input has " +
                              std::to_string(Cin) + " channels, weight expects " +
                              std::to_string(weight->shape[1]));
    }
    if (bias && bias->shape != std::vector<int>{Cout}) {
        throw dimension_error("conv2d: bias must have shape (" + std::to_string(Cout) + ")");
    }
    const int Ho = (H + 2 * padding - kh) / stride + 1;
    const int Wo = (W + 2 * padding - kw) / stride + 1;
    if (H + 2 * padding < kh || Ho < 1) {
        throw dimension_error("conv2d: height axis (2) too small: " + std::to_string(H) +
                              " with padding " + std::to_string(padding) + " cannot fit kernel " +
                              std::to_string(kh));
    }
    if (W + 2 * padding < kw || Wo < 1) {
        throw dimension_error("conv2d: width axis (3) too small: " + std::to_string(W) +
                              " with padding " + std::to_string(padding) + " cannot fit kernel " +
                              std::to_string(kw));
    }

    const int K = Cin * kh * kw;
    const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
    auto out = tensor_zeros<T>({N, Cout, Ho, Wo});

    std::vector<T> col(static_cast<std::size_t>(K) * P);
    for (int n = 0; n < N; ++n) {
        const T* xn = input->data.data() + static_cast<std::size_t>(n) * Cin * H * W;
        T* on = out->data.data() + static_cast<std::size_t>(n) * Cout * P;
        detail::im2col(xn, Cin, H, W, kh, kw, stride, padding, Ho, Wo, col.data());
        if (bias) {
            for (int co = 0; co < Cout; ++co) {
                std::fill(on + static_cast<std::size_t>(co) * P, on + static_cast<std::size_t>(co + 1) * P,
                          bias->data[co]);
            }
        }
        detail::gemm_acc(weight->data.data(), col.data(), on, Cout, K, static_cast<int>(P));
    }

    if (detail::tape_wanted<T>({&input, &weight, &bias})) {
        out->requires_grad = true;
        detail::append_parent_if_grad(input, out->parents);
        detail::append_parent_if_grad(weight, out->parents);
        detail::append_parent_if_grad(bias, out->parents);
        out->backprop = [input, weight, bias, stride, padding, N, Cin, H, W, Cout, kh, kw, Ho, Wo,
                         K, P](const Tensor<T>&, const std::vector<T>& gout, GradFlow<T>& flow) {
            std::vector<T> col(static_cast<std::size_t>(K) * P);
            std::vector<T> colT;
            std::vector<T> dcol;
            const bool need_dx = input->requires_grad;
            const bool need_dw = weight->requires_grad;
            if (need_dx) dcol.resize(static_cast<std::size_t>(K) * P);
            if (need_dw) colT.resize(static_cast<std::size_t>(K) * P);

            std::vector<T>* dxbuf = need_dx ? &flow.of(*input) : nullptr;
            std::vector<T>* dwbuf = need_dw ? &flow.of(*weight) : nullptr;
            std::vector<T>* dbbuf = (bias && bias->requires_grad) ? &flow.of(*bias) : nullptr;

            for (int n = 0; n < N; ++n) {
                const T* gn = gout.data() + static_cast<std::size_t>(n) * Cout * P;
                if (dbbuf) {
                    for (int co = 0; co < Cout; ++co) {
                        T s = 0;
                        const T* row = gn + static_cast<std::size_t>(co) * P;
                        for (std::size_t p = 0; p < P; ++p) s += row[p];
                        (*dbbuf)[co] += s;
                    }
                }
                if (need_dx) {
                    std::fill(dcol.begin(), dcol.end(), T(0));
                    // dcol (K x P) += W^T (K x Cout) * gout (Cout x P)
                    for (int co = 0; co < Cout; ++co) {
                        const T* wrow = weight->data.data() + static_cast<std::size_t>(co) * K;
                        const T* grow = gn + static_cast<std::size_t>(co) * P;
                        for (int kk = 0; kk < K; ++kk) {
                            const T wv = wrow[kk];
                            T* drow = dcol.data() + static_cast<std::size_t>(kk) * P;
                            for (std::size_t j = 0; j < P; ++j) {
                                drow[j] += wv * grow[j];
                            }
                        }
                    }
                    detail::col2im_add(dcol.data(), Cin, H, W, kh, kw, stride, padding, Ho, Wo,
                                       dxbuf->data() + static_cast<std::size_t>(n) * Cin * H * W);
                }
                if (need_dw) {
                    const T* xn = input->data.data() + static_cast<std::size_t>(n) * Cin * H * W;
                    detail::im2col(xn, Cin, H, W, kh, kw, stride, padding, Ho, Wo, col.data());
                    // colT (P x K) so the dw inner loop runs over contiguous K
                    for (int kk = 0; kk < K; ++kk) {
                        const T* row = col.data() + static_cast<std::size_t>(kk) * P;
                        for (std::size_t j = 0; j < P; ++j) {
                            colT[j * K + kk] = row[j];
                        }
                    }
                    for (int co = 0; co < Cout; ++co) {
                        const T* grow = gn + static_cast<std::size_t>(co) * P;
                        T* dwrow = dwbuf->data() + static_cast<std::size_t>(co) * K;
                        for (std::size_t j = 0; j < P; ++j) {
                            const T gv = grow[j];
                            const T* crow = colT.data() + j * K;
                            for (int kk = 0; kk < K; ++kk) {
                                dwrow[kk] += gv * crow[kk];
                            }
                        }
                    }
                }
            }
        };
    }
    return out;
}

// Nearest-neighbor upsampling: each pixel replicated factor x factor.
template <class T>
TensorPtr<T> upsample_nearest(const TensorPtr<T>& input, int factor) {
    if (factor < 1) {
        throw parameter_error("upsample_nearest: factor must be >= 1, got " + std::to_string(factor));
    }
    if (!input || input->shape.size() != 4) {
        throw dimension_error("upsample_nearest: input must be 4-D");
    }
    const int N = input->shape[0], C = input->shape[1], H = input->shape[2], W = input->shape[3];
    const int Ho = H * factor, Wo = W * factor;
    auto out = tensor_zeros<T>({N, C, Ho, Wo});
    for (int nc = 0; nc < N * C; ++nc) {
        const T* src = input->data.data() + static_cast<std::size_t>(nc) * H * W;
        T* dst = out->data.data() + static_cast<std::size_t>(nc) * Ho * Wo;
        for (int y = 0; y < Ho; ++y) {
            const T* srow = src + static_cast<std::size_t>(y / factor) * W;
            T* drow = dst + static_cast<std::size_t>(y) * Wo;
            for (int x = 0; x < Wo; ++x) {
                drow[x] = srow[x / factor];
            }
        }
    }
    if (detail::tape_wanted<T>({&input})) {
        out->requires_grad = true;
        out->parents = {input};
        out->backprop = [input, factor, N, C, H, W, Ho, Wo](const Tensor<T>&, const std::vector<T>& gout,
                                                            GradFlow<T>& flow) {
            std::vector<T>& dx = flow.of(*input);
            for (int nc = 0; nc < N * C; ++nc) {
                const T* g = gout.data() + static_cast<std::size_t>(nc) * Ho * Wo;
                T* d = dx.data() + static_cast<std::size_t>(nc) * H * W;
                for (int y = 0; y < Ho; ++y) {
                    const T* grow = g + static_cast<std::size_t>(y) * Wo;
                    T* drow = d + static_cast<std::size_t>(y / factor) * W;
                    for (int x = 0; x < Wo; ++x) {
                        drow[x / factor] += grow[x];
                    }
                }
            }
        };
    }
    return out;
}

template <class T>
TensorPtr<T> sigmoid(const TensorPtr<T>& input) {
    auto out = tensor_zeros<T>(input->shape);
    for (std::size_t i = 0; i < input->data.size(); ++i) {
        const T x = input->data[i];
        if (x >= T(0)) {
            out->data[i] = T(1) / (T(1) + std::exp(-x));
        } else {
            const T e = std::exp(x);
            out->data[i] = e / (T(1) + e);
        }
    }
    if (detail::tape_wanted<T>({&input})) {
        out->requires_grad = true;
        out->parents = {input};
        out->backprop = [input](const Tensor<T>& self, const std::vector<T>& gout, GradFlow<T>& flow) {
            std::vector<T>& dx = flow.of(*input);
            for (std::size_t i = 0; i < gout.size(); ++i) {
                const T s = self.data[i];
                dx[i] += s * (T(1) - s) * gout[i];
            }
        };
    }
    return out;
}

template <class T>
TensorPtr<T> relu(const TensorPtr<T>& input) {
    auto out = tensor_zeros<T>(input->shape);
    for (std::size_t i = 0; i < input->data.size(); ++i) {
        out->data[i] = input->data[i] > T(0) ? input->data[i] : T(0);
    }
    if (detail::tape_wanted<T>({&input})) {
        out->requires_grad = true;
        out->parents = {input};
        out->backprop = [input](const Tensor<T>&, const std::vector<T>& gout, GradFlow<T>& flow) {
            std::vector<T>& dx = flow.of(*input);
            for (std::size_t i = 0; i < gout.size(); ++i) {
                if (input->data[i] > T(0)) {
                    dx[i] += gout[i];
                }
            }
        };
    }
    return out;
}

// min(max(x, 0), 1); gradient passes only strictly inside the interval.
template <class T>
TensorPtr<T> clamp01(const TensorPtr<T>& input) {
    auto out = tensor_zeros<T>(input->shape);
    for (std::size_t i = 0; i < input->data.size(); ++i) {
        out->data[i] = std::min(std::max(input->data[i], T(0)), T(1));
    }
    if (detail::tape_wanted<T>({&input})) {
        out->requires_grad = true;
        out->parents = {input};
        out->backprop = [input](const Tensor<T>&, const std::vector<T>& gout, GradFlow<T>& flow) {
            std::vector<T>& dx = flow.of(*input);
            for (std::size_t i = 0; i < gout.size(); ++i) {
                const T x = input->data[i];
                if (x > T(0) && x < T(1)) {
                    dx[i] += gout[i];
                }
            }
        };
    }
    return out;
}

// Hadamard product. Also accepts a single-channel mask `a` (N,1,H,W) against a
// multi-channel `b` (N,C,H,W); the mask broadcasts over channels and its
// gradient sums over them.
template <class T>
TensorPtr<T> elementwise_mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    const bool same = a->shape == b->shape;
    const bool bcast = !same && a->shape.size() == 4 && b->shape.size() == 4 && a->shape[1] == 1 &&
                       a->shape[0] == b->shape[0] && a->shape[2] == b->shape[2] &&
                       a->shape[3] == b->shape[3];
    if (!same && !bcast) {
        throw dimension_error("elementwise_mul: incompatible shapes " + detail::shape_str(a->shape) +
                              " and " + detail::shape_str(b->shape) +
                              " (need equal shapes, or a single-channel mask on axis 1)");
    }
    auto out = tensor_zeros<T>(b->shape);
    if (same) {
        for (std::size_t i = 0; i < out->data.size(); ++i) {
            out->data[i] = a->data[i] * b->data[i];
        }
    } else {
        const int N = b->shape[0], C = b->shape[1];
        const std::size_t HW = static_cast<std::size_t>(b->shape[2]) * b->shape[3];
        for (int n = 0; n < N; ++n) {
            const T* m = a->data.data() + static_cast<std::size_t>(n) * HW;
            for (int c = 0; c < C; ++c) {
                const T* src = b->data.data() + (static_cast<std::size_t>(n) * C + c) * HW;
                T* dst = out->data.data() + (static_cast<std::size_t>(n) * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) {
                    dst[i] = m[i] * src[i];
                }
            }
        }
    }
    if (detail::tape_wanted<T>({&a, &b})) {
        out->requires_grad = true;
        detail::append_parent_if_grad(a, out->parents);
        detail::append_parent_if_grad(b, out->parents);
        out->backprop = [a, b, same](const Tensor<T>&, const std::vector<T>& gout, GradFlow<T>& flow) {
            if (same) {
                if (a->requires_grad) {
                    std::vector<T>& da = flow.of(*a);
                    for (std::size_t i = 0; i < gout.size(); ++i) da[i] += b->data[i] * gout[i];
                }
                if (b->requires_grad) {
                    std::vector<T>& db = flow.of(*b);
                    for (std::size_t i = 0; i < gout.size(); ++i) db[i] += a->data[i] * gout[i];
                }
                return;
            }
            const int N = b->shape[0], C = b->shape[1];
            const std::size_t HW = static_cast<std::size_t>(b->shape[2]) * b->shape[3];
            if (a->requires_grad) {
                std::vector<T>& da = flow.of(*a);
                for (int n = 0; n < N; ++n) {
                    T* dm = da.data() + static_cast<std::size_t>(n) * HW;
                    for (int c = 0; c < C; ++c) {
                        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
                        for (std::size_t i = 0; i < HW; ++i) {
                            dm[i] += b->data[off + i] * gout[off + i];
                        }
                    }
                }
            }
            if (b->requires_grad) {
                std::vector<T>& db = flow.of(*b);
                for (int n = 0; n < N; ++n) {
                    const T* m = a->data.data() + static_cast<std::size_t>(n) * HW;
                    for (int c = 0; c < C; ++c) {
                        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
                        for (std::size_t i = 0; i < HW; ++i) {
                            db[off + i] += m[i] * gout[off + i];
                        }
                    }
                }
            }
        };
    }
    return out;
}

// Concatenation along the channel axis, order (a, b).
template <class T>
TensorPtr<T> concat_channels(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape.size() != 4 || b->shape.size() != 4) {
        throw dimension_error("concat_channels: inputs must be 4-D");
    }
    if (a->shape[0] != b->shape[0]) {
        throw dimension_error("concat_channels: batch axis (0) mismatch: " +
                              std::to_string(a->shape[0]) + " vs " + std::to_string(b->shape[0]));
    }
    if (a->shape[2] != b->shape[2] || a->shape[3] != b->shape[3]) {
        throw dimension_error("concat_channels: spatial axes (2,3) mismatch: " +
                              detail::shape_str(a->shape) + " vs " + detail::shape_str(b->shape));
    }
    const int N = a->shape[0], Ca = a->shape[1], Cb = b->shape[1];
    const std::size_t HW = static_cast<std::size_t>(a->shape[2]) * a->shape[3];
    auto out = tensor_zeros<T>({N, Ca + Cb, a->shape[2], a->shape[3]});
    for (int n = 0; n < N; ++n) {
        T* dst = out->data.data() + static_cast<std::size_t>(n) * (Ca + Cb) * HW;
        const T* sa = a->data.data() + static_cast<std::size_t>(n) * Ca * HW;
        const T* sb = b->data.data() + static_cast<std::size_t>(n) * Cb * HW;
        std::copy(sa, sa + static_cast<std::size_t>(Ca) * HW, dst);
        std::copy(sb, sb + static_cast<std::size_t>(Cb) * HW, dst + static_cast<std::size_t>(Ca) * HW);
    }
    if (detail::tape_wanted<T>({&a, &b})) {
        out->requires_grad = true;
        detail::append_parent_if_grad(a, out->parents);
        detail::append_parent_if_grad(b, out->parents);
        out->backprop = [a, b, N, Ca, Cb, HW](const Tensor<T>&, const std::vector<T>& gout,
                                              GradFlow<T>& flow) {
            for (int n = 0; n < N; ++n) {
                const T* g = gout.data() + static_cast<std::size_t>(n) * (Ca + Cb) * HW;
                if (a->requires_grad) {
                    std::vector<T>& da = flow.of(*a);
                    T* d = da.data() + static_cast<std::size_t>(n) * Ca * HW;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(Ca) * HW; ++i) d[i] += g[i];
                }
                if (b->requires_grad) {
                    std::vector<T>& db = flow.of(*b);
                    T* d = db.data() + static_cast<std::size_t>(n) * Cb * HW;
                    const T* gb = g + static_cast<std::size_t>(Ca) * HW;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(Cb) * HW; ++i) d[i] += gb[i];
                }
            }
        };
    }
    return out;
}

template <class T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape) {
        throw dimension_error("add: shape mismatch " + detail::shape_str(a->shape) + " vs " +
                              detail::shape_str(b->shape));
    }
    auto out = tensor_zeros<T>(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        out->data[i] = a->data[i] + b->data[i];
    }
    if (detail::tape_wanted<T>({&a, &b})) {
        out->requires_grad = true;
        detail::append_parent_if_grad(a, out->parents);
        detail::append_parent_if_grad(b, out->parents);
        out->backprop = [a, b](const Tensor<T>&, const std::vector<T>& gout, GradFlow<T>& flow) {
            if (a->requires_grad) {
                std::vector<T>& da = flow.of(*a);
                for (std::size_t i = 0; i < gout.size(); ++i) da[i] += gout[i];
            }
            if (b->requires_grad) {
                std::vector<T>& db = flow.of(*b);
                for (std::size_t i = 0; i < gout.size(); ++i) db[i] += gout[i];
            }
        };
    }
    return out;
}

template <class T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape) {
        throw dimension_error("sub: shape mismatch " + detail::shape_str(a->shape) + " vs " +
                              detail::shape_str(b->shape));
    }
    auto out = tensor_zeros<T>(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        out->data[i] = a->data[i] - b->data[i];
    }
    if (detail::tape_wanted<T>({&a, &b})) {
        out->requires_grad = true;
        detail::append_parent_if_grad(a, out->parents);
        detail::append_parent_if_grad(b, out->parents);
        out->backprop = [a, b](const Tensor<T>&, const std::vector<T>& gout, GradFlow<T>& flow) {
            if (a->requires_grad) {
                std::vector<T>& da = flow.of(*a);
                for (std::size_t i = 0; i < gout.size(); ++i) da[i] += gout[i];
            }
            if (b->requires_grad) {
                std::vector<T>& db = flow.of(*b);
                for (std::size_t i = 0; i < gout.size(); ++i) db[i] -= gout[i];
            }
        };
    }
    return out;
}

template <class T>
TensorPtr<T> scale(const TensorPtr<T>& a, T factor) {
    auto out = tensor_zeros<T>(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        out->data[i] = a->data[i] * factor;
    }
    if (detail::tape_wanted<T>({&a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backprop = [a, factor](const Tensor<T>&, const std::vector<T>& gout, GradFlow<T>& flow) {
            std::vector<T>& da = flow.of(*a);
            for (std::size_t i = 0; i < gout.size(); ++i) da[i] += factor * gout[i];
        };
    }
    return out;
}

template <class T>
TensorPtr<T> add_scalar(const TensorPtr<T>& a, T value) {
    auto out = tensor_zeros<T>(a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) {
        out->data[i] = a->data[i] + value;
    }
    if (detail::tape_wanted<T>({&a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backprop = [a](const Tensor<T>&, const std::vector<T>& gout, GradFlow<T>& flow) {
            std::vector<T>& da = flow.of(*a);
            for (std::size_t i = 0; i < gout.size(); ++i) da[i] += gout[i];
        };
    }
    return out;
}

template <class T>
TensorPtr<T> sum_all(const TensorPtr<T>& a) {
    T s = 0;
    for (const T v : a->data) {
        s += v;
    }
    auto out = tensor_scalar<T>(s);
    if (detail::tape_wanted<T>({&a})) {
        out->requires_grad = true;
        out->parents = {a};
        out->backprop = [a](const Tensor<T>&, const std::vector<T>& gout, GradFlow<T>& flow) {
            std::vector<T>& da = flow.of(*a);
            for (std::size_t i = 0; i < da.size(); ++i) da[i] += gout[0];
        };
    }
    return out;
}

// Reverse-mode sweep from a scalar loss. Every requires_grad leaf reachable
// through the tape receives dLoss/dLeaf added into its grad accumulator.
template <class T>
void backward(const TensorPtr<T>& loss) {
    if (!loss) {
        throw contract_error("backward: null loss tensor");
    }
    if (loss->numel() != 1) {
        throw contract_error("backward: loss must be a scalar, got shape " +
                             detail::shape_str(loss->shape));
    }

    std::vector<Tensor<T>*> order;
    std::unordered_set<const Tensor<T>*> seen;
    struct Frame {
        Tensor<T>* node;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            Tensor<T>* p = f.node->parents[f.next++].get();
            if (seen.insert(p).second) {
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    GradFlow<T> flow;
    flow.of(*loss)[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor<T>* node = *it;
        const std::vector<T>* g = flow.find(*node);
        if (!g) {
            continue;
        }
        if (node->backprop) {
            node->backprop(*node, *g, flow);
        }
        if (node->requires_grad && node->is_leaf()) {
            node->accumulate_grad(*g);
        }
    }
}

// Adam moment buffers for one parameter tensor.
template <class T>
struct AdamState {
    std::vector<T> first_moment;
    std::vector<T> second_moment;
    long long step_count = 0;
};

// Bias-corrected Adam update applied in place. Gradients are left untouched;
// the caller zeroes them between steps.
template <class T>
void adam_step(const std::vector<TensorPtr<T>>& params, std::vector<AdamState<T>>& states, double lr,
               double beta1, double beta2, double eps) {
    if (params.size() != states.size()) {
        throw contract_error("adam_step: " + std::to_string(params.size()) + " params but " +
                             std::to_string(states.size()) + " states");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const TensorPtr<T>& p = params[i];
        AdamState<T>& s = states[i];
        if (p->grad.size() != p->data.size()) {
            throw contract_error("adam_step: parameter " + std::to_string(i) +
                                 " has no gradient; run backward first");
        }
        if (s.first_moment.empty()) {
            s.first_moment.assign(p->data.size(), T(0));
            s.second_moment.assign(p->data.size(), T(0));
        }
        if (s.first_moment.size() != p->data.size()) {
            throw contract_error("adam_step: state " + std::to_string(i) +
                                 " is not shape-congruent with its parameter");
        }
        s.step_count += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(s.step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(s.step_count));
        for (std::size_t j = 0; j < p->data.size(); ++j) {
            const double g = static_cast<double>(p->grad[j]);
            const double m = beta1 * static_cast<double>(s.first_moment[j]) + (1.0 - beta1) * g;
            const double v = beta2 * static_cast<double>(s.second_moment[j]) + (1.0 - beta2) * g * g;
            s.first_moment[j] = static_cast<T>(m);
            s.second_moment[j] = static_cast<T>(v);
            const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            p->data[j] = static_cast<T>(static_cast<double>(p->data[j]) - update);
        }
    }
}

} // namespace epan
