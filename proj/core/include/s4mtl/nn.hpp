#pragma once

// Minimal differentiable building blocks for the segmentation generator and
// the class discriminator. Feature maps are (h*w) x channels matrices
// (column-major, so each channel plane is contiguous); convolutions run as
// im2col + GEMM. Every op has an explicit backward that consumes the cache
// its forward produced, so gradients are exact and parallelism over batch
// samples stays bit-deterministic.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "s4mtl/common.hpp"
#include "s4mtl/rng.hpp"

namespace s4mtl::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
struct FeatMap {
    int h = 0;
    int w = 0;
    Mat<S> m;  // (h*w) x channels; row index = r*w + c

    FeatMap() = default;
    FeatMap(int h_, int w_, int channels) : h(h_), w(w_), m(Mat<S>::Zero(h_ * w_, channels)) {}
    int channels() const { return static_cast<int>(m.cols()); }
};

// ---------------------------------------------------------------------------
// Parameter storage: named flat collections with shape metadata. Names are
// stable across save/load; registration order defines serialization order.
// ---------------------------------------------------------------------------

template <class S>
struct ParamStoreT {
    struct Entry {
        std::string name;
        std::vector<int> shape;
        Vec<S> value;
    };

    std::vector<Entry> entries;
    std::unordered_map<std::string, size_t> by_name;

    size_t add(const std::string& name, std::vector<int> shape) {
        if (by_name.count(name)) throw ValidationError("duplicate parameter name: " + name);
        long total = 1;
        for (int d : shape) total *= d;
        entries.push_back({name, std::move(shape), Vec<S>::Zero(total)});
        by_name.emplace(name, entries.size() - 1);
        return entries.size() - 1;
    }

    Vec<S>& value(size_t idx) { return entries[idx].value; }
    const Vec<S>& value(size_t idx) const { return entries[idx].value; }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& e : entries) n += static_cast<size_t>(e.value.size());
        return n;
    }

    // Zero-valued clone with identical names and shapes (gradient buffer).
    ParamStoreT<S> zeros_like() const {
        ParamStoreT<S> out;
        out.entries.reserve(entries.size());
        for (const auto& e : entries) out.entries.push_back({e.name, e.shape, Vec<S>::Zero(e.value.size())});
        out.by_name = by_name;
        return out;
    }

    void set_zero() {
        for (auto& e : entries) e.value.setZero();
    }

    void add_scaled(const ParamStoreT<S>& other, S scale) {
        for (size_t i = 0; i < entries.size(); ++i) entries[i].value += scale * other.entries[i].value;
    }

    bool all_finite() const {
        for (const auto& e : entries) {
            if (!e.value.allFinite()) return false;
        }
        return true;
    }

    template <class T>
    ParamStoreT<T> cast() const {
        ParamStoreT<T> out;
        out.entries.reserve(entries.size());
        for (const auto& e : entries) {
            typename ParamStoreT<T>::Entry ne;
            ne.name = e.name;
            ne.shape = e.shape;
            ne.value = e.value.template cast<T>();
            out.entries.push_back(std::move(ne));
        }
        out.by_name = by_name;
        return out;
    }
};

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

inline int conv_out_side(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

template <class S>
void im2col(const FeatMap<S>& x, int k, int stride, int pad, Mat<S>& col) {
    const int oh = conv_out_side(x.h, k, stride, pad);
    const int ow = conv_out_side(x.w, k, stride, pad);
    const int cin = x.channels();
    col.resize(static_cast<long>(oh) * ow, static_cast<long>(cin) * k * k);
    for (int ci = 0; ci < cin; ++ci) {
        const S* src = x.m.col(ci).data();
        for (int kr = 0; kr < k; ++kr) {
            for (int kc = 0; kc < k; ++kc) {
                S* dst = col.col(static_cast<long>(ci) * k * k + kr * k + kc).data();
                for (int ro = 0; ro < oh; ++ro) {
                    const int ir = ro * stride - pad + kr;
                    S* drow = dst + static_cast<long>(ro) * ow;
                    if (ir < 0 || ir >= x.h) {
                        std::fill(drow, drow + ow, S(0));
                        continue;
                    }
                    const S* srow = src + static_cast<long>(ir) * x.w;
                    for (int co = 0; co < ow; ++co) {
                        const int ic = co * stride - pad + kc;
                        drow[co] = (ic >= 0 && ic < x.w) ? srow[ic] : S(0);
                    }
                }
            }
        }
    }
}

template <class S>
void col2im_accumulate(const Mat<S>& dcol, int h, int w, int cin, int k, int stride, int pad,
                       FeatMap<S>& dx) {
    const int oh = conv_out_side(h, k, stride, pad);
    const int ow = conv_out_side(w, k, stride, pad);
    for (int ci = 0; ci < cin; ++ci) {
        S* dst = dx.m.col(ci).data();
        for (int kr = 0; kr < k; ++kr) {
            for (int kc = 0; kc < k; ++kc) {
                const S* src = dcol.col(static_cast<long>(ci) * k * k + kr * k + kc).data();
                for (int ro = 0; ro < oh; ++ro) {
                    const int ir = ro * stride - pad + kr;
                    if (ir < 0 || ir >= h) continue;
                    S* drow = dst + static_cast<long>(ir) * w;
                    const S* srow = src + static_cast<long>(ro) * ow;
                    for (int co = 0; co < ow; ++co) {
                        const int ic = co * stride - pad + kc;
                        if (ic >= 0 && ic < w) drow[ic] += srow[co];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Layers. Each holds indices into a ParamStoreT; forward fills a cache the
// matching backward consumes. Backward accumulates parameter gradients and
// returns the input gradient.
// ---------------------------------------------------------------------------

template <class S>
class Conv2d {
public:
    struct Cache {
        FeatMap<S> x;
    };

    Conv2d() = default;
    Conv2d(ParamStoreT<S>& ps, const std::string& name, int in_ch, int out_ch, int k, int stride,
           int pad, bool bias)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad), has_bias_(bias) {
        w_ = ps.add(name + ".w", {in_ch * k * k, out_ch});
        if (bias) b_ = ps.add(name + ".b", {out_ch});
    }

    FeatMap<S> forward(const ParamStoreT<S>& ps, const FeatMap<S>& x, Cache* cache) const {
        if (x.channels() != in_ch_) {
            throw ValidationError(strfmt("conv: expected %d input channels, got %d", in_ch_, x.channels()));
        }
        FeatMap<S> y;
        y.h = conv_out_side(x.h, k_, stride_, pad_);
        y.w = conv_out_side(x.w, k_, stride_, pad_);
        Mat<S> col;
        im2col(x, k_, stride_, pad_, col);
        Eigen::Map<const Mat<S>> W(ps.value(w_).data(), static_cast<long>(in_ch_) * k_ * k_, out_ch_);
        y.m.noalias() = col * W;
        if (has_bias_) {
            Eigen::Map<const Vec<S>> b(ps.value(b_).data(), out_ch_);
            y.m.rowwise() += b.transpose();
        }
        if (cache) cache->x = x;
        return y;
    }

    FeatMap<S> backward(const ParamStoreT<S>& ps, const Cache& cache, const FeatMap<S>& dy,
                        ParamStoreT<S>& grads) const {
        Mat<S> col;
        im2col(cache.x, k_, stride_, pad_, col);
        Eigen::Map<Mat<S>> dW(grads.value(w_).data(), static_cast<long>(in_ch_) * k_ * k_, out_ch_);
        dW.noalias() += col.transpose() * dy.m;
        if (has_bias_) {
            Eigen::Map<Vec<S>> db(grads.value(b_).data(), out_ch_);
            db += dy.m.colwise().sum().transpose();
        }
        Eigen::Map<const Mat<S>> W(ps.value(w_).data(), static_cast<long>(in_ch_) * k_ * k_, out_ch_);
        Mat<S> dcol;
        dcol.noalias() = dy.m * W.transpose();
        FeatMap<S> dx(cache.x.h, cache.x.w, in_ch_);
        col2im_accumulate(dcol, cache.x.h, cache.x.w, in_ch_, k_, stride_, pad_, dx);
        return dx;
    }

    int fan_in() const { return in_ch_ * k_ * k_; }
    size_t weight_index() const { return w_; }

private:
    int in_ch_ = 0, out_ch_ = 0, k_ = 3, stride_ = 1, pad_ = 1;
    bool has_bias_ = false;
    size_t w_ = 0, b_ = 0;
};

template <class S>
class InstanceNorm {
public:
    struct Cache {
        Mat<S> x_hat;
        Vec<S> inv_std;
    };

    InstanceNorm() = default;
    InstanceNorm(ParamStoreT<S>& ps, const std::string& name, int channels) : channels_(channels) {
        gamma_ = ps.add(name + ".gamma", {channels});
        beta_ = ps.add(name + ".beta", {channels});
    }

    FeatMap<S> forward(const ParamStoreT<S>& ps, const FeatMap<S>& x, Cache* cache) const {
        const auto hw = static_cast<S>(x.m.rows());
        Eigen::Map<const Vec<S>> gamma(ps.value(gamma_).data(), channels_);
        Eigen::Map<const Vec<S>> beta(ps.value(beta_).data(), channels_);
        FeatMap<S> y(x.h, x.w, channels_);
        Mat<S> x_hat(x.m.rows(), x.m.cols());
        Vec<S> inv_std(channels_);
        for (int c = 0; c < channels_; ++c) {
            const auto col = x.m.col(c);
            const S mean = col.mean();
            const S var = (col.array() - mean).square().sum() / hw;
            const S is = S(1) / std::sqrt(var + S(kEps));
            inv_std[c] = is;
            x_hat.col(c) = (col.array() - mean) * is;
            y.m.col(c) = gamma[c] * x_hat.col(c).array() + beta[c];
        }
        if (cache) {
            cache->x_hat = std::move(x_hat);
            cache->inv_std = std::move(inv_std);
        }
        return y;
    }

    FeatMap<S> backward(const ParamStoreT<S>& ps, const Cache& cache, const FeatMap<S>& dy,
                        ParamStoreT<S>& grads) const {
        const auto hw = static_cast<S>(dy.m.rows());
        Eigen::Map<const Vec<S>> gamma(ps.value(gamma_).data(), channels_);
        Eigen::Map<Vec<S>> dgamma(grads.value(gamma_).data(), channels_);
        Eigen::Map<Vec<S>> dbeta(grads.value(beta_).data(), channels_);
        FeatMap<S> dx(dy.h, dy.w, channels_);
        for (int c = 0; c < channels_; ++c) {
            const auto dyc = dy.m.col(c);
            const auto xh = cache.x_hat.col(c);
            const S sum_dy = dyc.sum();
            const S sum_dy_xh = dyc.dot(xh);
            dbeta[c] += sum_dy;
            dgamma[c] += sum_dy_xh;
            const S a = gamma[c] * cache.inv_std[c];
            dx.m.col(c) = a * (dyc.array() - sum_dy / hw - xh.array() * (sum_dy_xh / hw));
        }
        return dx;
    }

private:
    static constexpr double kEps = 1e-5;
    int channels_ = 0;
    size_t gamma_ = 0, beta_ = 0;
};

// ReLU (slope 0) and leaky variants share one implementation.
template <class S>
struct Relu {
    struct Cache {
        std::vector<uint8_t> positive;
    };

    static FeatMap<S> forward(const FeatMap<S>& x, S slope, Cache* cache) {
        FeatMap<S> y(x.h, x.w, x.channels());
        const auto n = static_cast<size_t>(x.m.size());
        const S* in = x.m.data();
        S* out = y.m.data();
        if (cache) cache->positive.resize(n);
        for (size_t i = 0; i < n; ++i) {
            const bool pos = in[i] > S(0);
            out[i] = pos ? in[i] : slope * in[i];
            if (cache) cache->positive[i] = pos;
        }
        return y;
    }

    static FeatMap<S> backward(const Cache& cache, const FeatMap<S>& dy, S slope) {
        FeatMap<S> dx(dy.h, dy.w, dy.channels());
        const auto n = static_cast<size_t>(dy.m.size());
        const S* in = dy.m.data();
        S* out = dx.m.data();
        for (size_t i = 0; i < n; ++i) out[i] = cache.positive[i] ? in[i] : slope * in[i];
        return dx;
    }
};

// Inverted dropout. The mask comes from an explicitly passed stream, so a
// forward pass is a pure function of (params, input, seed).
template <class S>
struct Dropout {
    struct Cache {
        std::vector<uint8_t> keep;
        S inv_keep = S(1);
    };

    static FeatMap<S> forward(const FeatMap<S>& x, double rate, std::mt19937_64& rng, Cache* cache) {
        FeatMap<S> y(x.h, x.w, x.channels());
        const auto n = static_cast<size_t>(x.m.size());
        const S inv = S(1.0 / (1.0 - rate));
        const S* in = x.m.data();
        S* out = y.m.data();
        if (cache) {
            cache->keep.resize(n);
            cache->inv_keep = inv;
        }
        for (size_t i = 0; i < n; ++i) {
            const bool keep = uniform01(rng) >= rate;
            out[i] = keep ? in[i] * inv : S(0);
            if (cache) cache->keep[i] = keep;
        }
        return y;
    }

    static FeatMap<S> backward(const Cache& cache, const FeatMap<S>& dy) {
        FeatMap<S> dx(dy.h, dy.w, dy.channels());
        const auto n = static_cast<size_t>(dy.m.size());
        const S* in = dy.m.data();
        S* out = dx.m.data();
        for (size_t i = 0; i < n; ++i) out[i] = cache.keep[i] ? in[i] * cache.inv_keep : S(0);
        return dx;
    }
};

template <class S>
struct MaxPool2x2 {
    struct Cache {
        std::vector<int32_t> argmax;  // flat input row index per output element
        int in_h = 0, in_w = 0;
    };

    static FeatMap<S> forward(const FeatMap<S>& x, Cache* cache) {
        if (x.h % 2 != 0 || x.w % 2 != 0) {
            throw ValidationError(strfmt("maxpool2x2 needs even sides, got %dx%d", x.h, x.w));
        }
        const int oh = x.h / 2, ow = x.w / 2, cc = x.channels();
        FeatMap<S> y(oh, ow, cc);
        if (cache) {
            cache->argmax.assign(static_cast<size_t>(oh) * ow * cc, 0);
            cache->in_h = x.h;
            cache->in_w = x.w;
        }
        for (int c = 0; c < cc; ++c) {
            const S* src = x.m.col(c).data();
            S* dst = y.m.col(c).data();
            for (int ro = 0; ro < oh; ++ro) {
                for (int co = 0; co < ow; ++co) {
                    const int base = (2 * ro) * x.w + 2 * co;
                    int best = base;
                    S v = src[base];
                    const int cand[3] = {base + 1, base + x.w, base + x.w + 1};
                    for (int idx : cand) {
                        if (src[idx] > v) {
                            v = src[idx];
                            best = idx;
                        }
                    }
                    dst[ro * ow + co] = v;
                    if (cache) cache->argmax[static_cast<size_t>(c) * oh * ow + ro * ow + co] = best;
                }
            }
        }
        return y;
    }

    static FeatMap<S> backward(const Cache& cache, const FeatMap<S>& dy) {
        const int oh = dy.h, ow = dy.w, cc = dy.channels();
        FeatMap<S> dx(cache.in_h, cache.in_w, cc);
        for (int c = 0; c < cc; ++c) {
            const S* src = dy.m.col(c).data();
            S* dst = dx.m.col(c).data();
            for (int i = 0; i < oh * ow; ++i) {
                dst[cache.argmax[static_cast<size_t>(c) * oh * ow + i]] += src[i];
            }
        }
        return dx;
    }
};

template <class S>
struct UpsampleNearest2x {
    static FeatMap<S> forward(const FeatMap<S>& x) {
        const int oh = x.h * 2, ow = x.w * 2, cc = x.channels();
        FeatMap<S> y(oh, ow, cc);
        for (int c = 0; c < cc; ++c) {
            const S* src = x.m.col(c).data();
            S* dst = y.m.col(c).data();
            for (int r = 0; r < x.h; ++r) {
                for (int col = 0; col < x.w; ++col) {
                    const S v = src[r * x.w + col];
                    const int b = (2 * r) * ow + 2 * col;
                    dst[b] = v;
                    dst[b + 1] = v;
                    dst[b + ow] = v;
                    dst[b + ow + 1] = v;
                }
            }
        }
        return y;
    }

    static FeatMap<S> backward(const FeatMap<S>& dy) {
        const int ih = dy.h / 2, iw = dy.w / 2, cc = dy.channels();
        FeatMap<S> dx(ih, iw, cc);
        for (int c = 0; c < cc; ++c) {
            const S* src = dy.m.col(c).data();
            S* dst = dx.m.col(c).data();
            for (int r = 0; r < ih; ++r) {
                for (int col = 0; col < iw; ++col) {
                    const int b = (2 * r) * dy.w + 2 * col;
                    dst[r * iw + col] = src[b] + src[b + 1] + src[b + dy.w] + src[b + dy.w + 1];
                }
            }
        }
        return dx;
    }
};

template <class S>
FeatMap<S> concat_channels(const FeatMap<S>& a, const FeatMap<S>& b) {
    if (a.h != b.h || a.w != b.w) throw ValidationError("concat_channels: spatial mismatch");
    FeatMap<S> y(a.h, a.w, a.channels() + b.channels());
    y.m.leftCols(a.channels()) = a.m;
    y.m.rightCols(b.channels()) = b.m;
    return y;
}

template <class S>
void split_channels(const FeatMap<S>& dy, int a_channels, FeatMap<S>& da, FeatMap<S>& db) {
    da = FeatMap<S>(dy.h, dy.w, a_channels);
    db = FeatMap<S>(dy.h, dy.w, dy.channels() - a_channels);
    da.m = dy.m.leftCols(a_channels);
    db.m = dy.m.rightCols(dy.channels() - a_channels);
}

template <class S>
class Linear {
public:
    struct Cache {
        Vec<S> x;
    };

    Linear() = default;
    Linear(ParamStoreT<S>& ps, const std::string& name, int in, int out) : in_(in), out_(out) {
        w_ = ps.add(name + ".w", {in, out});
        b_ = ps.add(name + ".b", {out});
    }

    Vec<S> forward(const ParamStoreT<S>& ps, const Vec<S>& x, Cache* cache) const {
        Eigen::Map<const Mat<S>> W(ps.value(w_).data(), in_, out_);
        Eigen::Map<const Vec<S>> b(ps.value(b_).data(), out_);
        if (cache) cache->x = x;
        return W.transpose() * x + b;
    }

    Vec<S> backward(const ParamStoreT<S>& ps, const Cache& cache, const Vec<S>& dy,
                    ParamStoreT<S>& grads) const {
        Eigen::Map<const Mat<S>> W(ps.value(w_).data(), in_, out_);
        Eigen::Map<Mat<S>> dW(grads.value(w_).data(), in_, out_);
        Eigen::Map<Vec<S>> db(grads.value(b_).data(), out_);
        dW.noalias() += cache.x * dy.transpose();
        db += dy;
        return W * dy;
    }

    int fan_in() const { return in_; }
    size_t weight_index() const { return w_; }

private:
    int in_ = 0, out_ = 0;
    size_t w_ = 0, b_ = 0;
};

template <class S>
struct GlobalAvgPool {
    static Vec<S> forward(const FeatMap<S>& x) { return x.m.colwise().mean().transpose(); }

    static FeatMap<S> backward(int h, int w, const Vec<S>& dy) {
        FeatMap<S> dx(h, w, static_cast<int>(dy.size()));
        const S inv = S(1) / static_cast<S>(h * w);
        for (int c = 0; c < dy.size(); ++c) dx.m.col(c).setConstant(dy[c] * inv);
        return dx;
    }
};

// Per-pixel softmax over channels; cache keeps the output probabilities.
template <class S>
struct PixelSoftmax {
    struct Cache {
        Mat<S> y;
    };

    static FeatMap<S> forward(const FeatMap<S>& x, Cache* cache) {
        FeatMap<S> y(x.h, x.w, x.channels());
        const long rows = x.m.rows();
        const int cc = x.channels();
        for (long i = 0; i < rows; ++i) {
            S mx = x.m(i, 0);
            for (int c = 1; c < cc; ++c) mx = std::max(mx, x.m(i, c));
            S sum = S(0);
            for (int c = 0; c < cc; ++c) {
                const S e = std::exp(x.m(i, c) - mx);
                y.m(i, c) = e;
                sum += e;
            }
            const S inv = S(1) / sum;
            for (int c = 0; c < cc; ++c) y.m(i, c) *= inv;
        }
        if (cache) cache->y = y.m;
        return y;
    }

    static FeatMap<S> backward(const Cache& cache, const FeatMap<S>& dy) {
        FeatMap<S> dx(dy.h, dy.w, dy.channels());
        const long rows = dy.m.rows();
        const int cc = dy.channels();
        for (long i = 0; i < rows; ++i) {
            S dot = S(0);
            for (int c = 0; c < cc; ++c) dot += dy.m(i, c) * cache.y(i, c);
            for (int c = 0; c < cc; ++c) dx.m(i, c) = cache.y(i, c) * (dy.m(i, c) - dot);
        }
        return dx;
    }
};

// Static-chunk parallel loop. Work item i always lands in the same chunk for
// a given n, and results are only ever written to disjoint per-index slots,
// so outputs do not depend on the thread count.
void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn);

}  // namespace s4mtl::nn
