#pragma once

// Architecture contracts for the segmentation mask generator, the class
// discriminator, and the baseline heads. Models bind layers to an external
// parameter store; forward passes record a tape the matching backward
// consumes. Everything is per-sample; batching is a caller-side loop.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s4mtl/nn.hpp"

namespace s4mtl {

using nn::FeatMap;
using nn::ParamStoreT;

struct GeneratorConfig {
    int input_side = 64;      // m
    int depth = 3;            // number of downsamplings
    int base_channels = 16;
    double dropout_rate = 0.4;
    int output_logits = 2;    // K

    void validate() const;  // m divisible by 2^depth, dropout in [0,1)
    int bottleneck_channels() const { return base_channels << depth; }
};

struct DiscriminatorConfig {
    int input_side = 64;
    int input_channels = 3;      // image concatenated with a K=2 mask
    int depth = 4;               // stride-2 conv stack
    int base_channels = 16;
    double dropout_rate = 0.0;
    int real_classes = 2;        // n; the main head emits n+1 logits
    int transform_classes = 6;   // T; auxiliary self-supervision head

    void validate() const;
    int main_logits() const { return real_classes + 1; }
    int trunk_channels() const { return base_channels << (depth - 1); }
};

struct ClassifierConfig {
    int input_side = 64;
    int depth = 4;
    int base_channels = 16;
    double dropout_rate = 0.0;
    int classes = 2;  // n; single head, no fake class

    void validate() const;
    int trunk_channels() const { return base_channels << (depth - 1); }
};

struct UmtlConfig {
    GeneratorConfig gen;
    int classes = 2;

    void validate() const;
};

// Train/eval switch plus the seed that feeds dropout draws. A forward pass is
// a pure function of (params, input, ctx).
struct StochasticCtx {
    bool train = false;
    uint64_t seed = 0;
};

inline StochasticCtx eval_ctx() { return {false, 0}; }

namespace detail {

template <class S>
struct ConvBlock {  // conv -> IN -> ReLU -> dropout, twice
    nn::Conv2d<S> c1, c2;
    nn::InstanceNorm<S> n1, n2;

    ConvBlock() = default;
    ConvBlock(ParamStoreT<S>& ps, const std::string& name, int in_ch, int out_ch);
};

template <class S>
struct ConvBlockTape {
    typename nn::Conv2d<S>::Cache c1, c2;
    typename nn::InstanceNorm<S>::Cache n1, n2;
    typename nn::Relu<S>::Cache r1, r2;
    typename nn::Dropout<S>::Cache d1, d2;
    bool dropped = false;
};

}  // namespace detail

// U-Net style encoder-decoder with skip connections. Decoder levels upsample
// (nearest), halve channels with a 3x3 conv, concatenate the skip, then run a
// conv block. Output head is a 1x1 conv into a per-pixel softmax over K.
template <class S>
class Generator {
public:
    struct Tape {
        std::vector<detail::ConvBlockTape<S>> enc;
        std::vector<typename nn::MaxPool2x2<S>::Cache> pool;
        detail::ConvBlockTape<S> bott;
        struct DecLevel {
            typename nn::Conv2d<S>::Cache up_c;
            typename nn::InstanceNorm<S>::Cache up_n;
            typename nn::Relu<S>::Cache up_r;
            typename nn::Dropout<S>::Cache up_d;
            bool dropped = false;
            detail::ConvBlockTape<S> block;
        };
        std::vector<DecLevel> dec;
        typename nn::Conv2d<S>::Cache out_c;
        typename nn::PixelSoftmax<S>::Cache softmax;
        FeatMap<S> bottleneck;  // exposed for the multitask classification branch
    };

    Generator(ParamStoreT<S>& store, const GeneratorConfig& cfg);

    // x: input_side x input_side x 1. Returns per-pixel class probabilities
    // (input_side^2 x K). tape may be null for inference; bottleneck_out,
    // when given, receives the encoder bottleneck features.
    FeatMap<S> forward(const FeatMap<S>& x, const StochasticCtx& ctx, Tape* tape,
                       FeatMap<S>* bottleneck_out = nullptr) const;

    // d_probs is the loss gradient w.r.t. the softmax output. An optional
    // gradient w.r.t. the bottleneck features (multitask branch) is added in
    // place. Returns the gradient w.r.t. the input image.
    FeatMap<S> backward(const Tape& tape, const FeatMap<S>& d_probs,
                        const FeatMap<S>* d_bottleneck, ParamStoreT<S>& grads) const;

    void init(uint64_t seed);

    const GeneratorConfig& config() const { return cfg_; }

    // Closed-form parameter count for a config; checked against the store.
    static size_t expected_param_count(const GeneratorConfig& cfg);

private:
    GeneratorConfig cfg_;
    ParamStoreT<S>* store_;
    std::vector<detail::ConvBlock<S>> enc_;
    detail::ConvBlock<S> bott_;
    struct DecLevel {
        nn::Conv2d<S> up;
        nn::InstanceNorm<S> up_n;
        detail::ConvBlock<S> block;
    };
    std::vector<DecLevel> dec_;
    nn::Conv2d<S> out_;
};

// Shared strided-conv trunk for the discriminator and the single-task
// classifier: depth x [conv s2 -> IN -> LeakyReLU(0.2) -> dropout], then
// global average pooling.
template <class S>
class ConvTrunk {
public:
    struct Tape {
        std::vector<typename nn::Conv2d<S>::Cache> conv;
        std::vector<typename nn::InstanceNorm<S>::Cache> norm;
        std::vector<typename nn::Relu<S>::Cache> relu;
        std::vector<typename nn::Dropout<S>::Cache> drop;
        bool dropped = false;
        int feat_h = 0, feat_w = 0;
    };

    ConvTrunk() = default;
    ConvTrunk(ParamStoreT<S>& store, const std::string& prefix, int input_channels, int depth,
              int base_channels, double dropout_rate);

    nn::Vec<S> forward(const FeatMap<S>& x, const StochasticCtx& ctx, Tape* tape) const;
    FeatMap<S> backward(const Tape& tape, const nn::Vec<S>& d_feat, ParamStoreT<S>& grads) const;

    int out_channels() const { return base_channels_ << (depth_ - 1); }
    static size_t expected_param_count(int input_channels, int depth, int base_channels);

private:
    ParamStoreT<S>* store_ = nullptr;
    int depth_ = 0;
    int base_channels_ = 0;
    double dropout_rate_ = 0.0;
    std::vector<nn::Conv2d<S>> convs_;
    std::vector<nn::InstanceNorm<S>> norms_;
};

// (n+1)-class discriminator over concatenated image-mask pairs with an
// auxiliary T-logit transform-prediction head sharing the trunk.
template <class S>
class Discriminator {
public:
    struct Tape {
        typename ConvTrunk<S>::Tape trunk;
        typename nn::Linear<S>::Cache main, aux;
    };

    struct Logits {
        nn::Vec<S> main;  // n+1
        nn::Vec<S> aux;   // T
    };

    Discriminator(ParamStoreT<S>& store, const DiscriminatorConfig& cfg);

    // x: image plane, y: K-channel mask planes; concatenated inside.
    Logits forward(const FeatMap<S>& x, const FeatMap<S>& y, const StochasticCtx& ctx,
                   Tape* tape) const;

    // Returns gradients w.r.t. (image, mask) inputs; the mask part drives the
    // generator's adversarial update.
    std::pair<FeatMap<S>, FeatMap<S>> backward(const Tape& tape, const nn::Vec<S>& d_main,
                                               const nn::Vec<S>& d_aux, ParamStoreT<S>& grads) const;

    void init(uint64_t seed);
    const DiscriminatorConfig& config() const { return cfg_; }
    static size_t expected_param_count(const DiscriminatorConfig& cfg);

private:
    DiscriminatorConfig cfg_;
    ParamStoreT<S>* store_;
    ConvTrunk<S> trunk_;
    nn::Linear<S> main_head_;
    nn::Linear<S> aux_head_;
};

// Single-task image classifier (the Conv-Net baseline): image-only input,
// n logits, no auxiliary head.
template <class S>
class Classifier {
public:
    struct Tape {
        typename ConvTrunk<S>::Tape trunk;
        typename nn::Linear<S>::Cache head;
    };

    Classifier(ParamStoreT<S>& store, const ClassifierConfig& cfg);

    nn::Vec<S> forward(const FeatMap<S>& x, const StochasticCtx& ctx, Tape* tape) const;
    FeatMap<S> backward(const Tape& tape, const nn::Vec<S>& d_logits, ParamStoreT<S>& grads) const;

    void init(uint64_t seed);
    const ClassifierConfig& config() const { return cfg_; }
    static size_t expected_param_count(const ClassifierConfig& cfg);

private:
    ClassifierConfig cfg_;
    ParamStoreT<S>* store_;
    ConvTrunk<S> trunk_;
    nn::Linear<S> head_;
};

// Multitask U-Net baseline: the generator plus a classification branch that
// pools the encoder bottleneck into a linear head.
template <class S>
class Umtl {
public:
    struct Tape {
        typename Generator<S>::Tape gen;
        typename nn::Linear<S>::Cache head;
    };

    struct Output {
        FeatMap<S> mask;
        nn::Vec<S> logits;  // n
    };

    Umtl(ParamStoreT<S>& store, const UmtlConfig& cfg);

    Output forward(const FeatMap<S>& x, const StochasticCtx& ctx, Tape* tape) const;
    FeatMap<S> backward(const Tape& tape, const FeatMap<S>& d_mask, const nn::Vec<S>& d_logits,
                        ParamStoreT<S>& grads) const;

    void init(uint64_t seed);
    const UmtlConfig& config() const { return cfg_; }
    static size_t expected_param_count(const UmtlConfig& cfg);

private:
    UmtlConfig cfg_;
    ParamStoreT<S>* store_;
    Generator<S> gen_;
    nn::Linear<S> head_;
};

// Scaled random initialization for a bound store: He-normal weights
// (std = sqrt(2 / fan_in)), normalization scale 1 / offset 0, zero biases.
// Deterministic given seed.
template <class S>
void init_store(ParamStoreT<S>& store, uint64_t seed);

// The learnable parameter collections: theta drives segmentation-side models,
// psi classification-side ones. Held in double for serialization; training
// may run in float and casts at the boundary.
struct ModelParams {
    ParamStoreT<double> theta;
    ParamStoreT<double> psi;
};

extern template class Generator<float>;
extern template class Generator<double>;
extern template class ConvTrunk<float>;
extern template class ConvTrunk<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;
extern template class Classifier<float>;
extern template class Classifier<double>;
extern template class Umtl<float>;
extern template class Umtl<double>;
extern template void init_store<float>(ParamStoreT<float>&, uint64_t);
extern template void init_store<double>(ParamStoreT<double>&, uint64_t);

}  // namespace s4mtl
