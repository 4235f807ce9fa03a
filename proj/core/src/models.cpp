#include "s4mtl/models.hpp"

#include <cmath>
#include <thread>

namespace s4mtl {

namespace nn {

void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    int workers = threads;
    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (workers == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr first_error;
    std::mutex err_mu;
    for (int t = 0; t < workers; ++t) {
        const size_t lo = t * chunk;
        const size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace nn

void GeneratorConfig::validate() const {
    if (input_side <= 0) throw ValidationError("generator: input_side must be positive");
    if (depth < 1) throw ValidationError("generator: depth must be >= 1");
    if (base_channels < 1) throw ValidationError("generator: base_channels must be >= 1");
    if (output_logits < 2) throw ValidationError("generator: output_logits must be >= 2");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ValidationError("generator: dropout_rate must be in [0,1)");
    }
    if (input_side % (1 << depth) != 0) {
        throw ValidationError(strfmt("generator: input_side %d not divisible by 2^%d", input_side, depth));
    }
}

void DiscriminatorConfig::validate() const {
    if (input_side < (1 << depth)) {
        throw ValidationError(strfmt("discriminator: input_side %d too small for depth %d", input_side, depth));
    }
    if (depth < 1) throw ValidationError("discriminator: depth must be >= 1");
    if (input_channels < 1) throw ValidationError("discriminator: input_channels must be >= 1");
    if (base_channels < 1) throw ValidationError("discriminator: base_channels must be >= 1");
    if (real_classes < 2) throw ValidationError("discriminator: real_classes must be >= 2");
    if (transform_classes < 1) throw ValidationError("discriminator: transform_classes must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ValidationError("discriminator: dropout_rate must be in [0,1)");
    }
}

void ClassifierConfig::validate() const {
    if (input_side < (1 << depth)) {
        throw ValidationError(strfmt("classifier: input_side %d too small for depth %d", input_side, depth));
    }
    if (depth < 1) throw ValidationError("classifier: depth must be >= 1");
    if (base_channels < 1) throw ValidationError("classifier: base_channels must be >= 1");
    if (classes < 2) throw ValidationError("classifier: classes must be >= 2");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ValidationError("classifier: dropout_rate must be in [0,1)");
    }
}

void UmtlConfig::validate() const {
    gen.validate();
    if (classes < 2) throw ValidationError("umtl: classes must be >= 2");
}

namespace detail {

template <class S>
ConvBlock<S>::ConvBlock(ParamStoreT<S>& ps, const std::string& name, int in_ch, int out_ch)
    : c1(ps, name + ".conv1", in_ch, out_ch, 3, 1, 1, /*bias=*/false),
      c2(ps, name + ".conv2", out_ch, out_ch, 3, 1, 1, /*bias=*/false),
      n1(ps, name + ".in1", out_ch),
      n2(ps, name + ".in2", out_ch) {}

template struct ConvBlock<float>;
template struct ConvBlock<double>;

}  // namespace detail

namespace {

// conv -> IN -> ReLU -> dropout, twice; drop_id advances per dropout layer so
// masks are reproducible regardless of evaluation order.
template <class S>
FeatMap<S> block_forward(const detail::ConvBlock<S>& blk, const ParamStoreT<S>& ps,
                         const FeatMap<S>& x, const StochasticCtx& ctx, double rate,
                         detail::ConvBlockTape<S>* t, int* drop_id) {
    const bool use_drop = ctx.train && rate > 0.0;
    FeatMap<S> y = blk.c1.forward(ps, x, t ? &t->c1 : nullptr);
    y = blk.n1.forward(ps, y, t ? &t->n1 : nullptr);
    y = nn::Relu<S>::forward(y, S(0), t ? &t->r1 : nullptr);
    if (use_drop) {
        auto rng = make_rng(ctx.seed, "dropout", static_cast<uint64_t>((*drop_id)++));
        y = nn::Dropout<S>::forward(y, rate, rng, t ? &t->d1 : nullptr);
    }
    y = blk.c2.forward(ps, y, t ? &t->c2 : nullptr);
    y = blk.n2.forward(ps, y, t ? &t->n2 : nullptr);
    y = nn::Relu<S>::forward(y, S(0), t ? &t->r2 : nullptr);
    if (use_drop) {
        auto rng = make_rng(ctx.seed, "dropout", static_cast<uint64_t>((*drop_id)++));
        y = nn::Dropout<S>::forward(y, rate, rng, t ? &t->d2 : nullptr);
    }
    if (t) t->dropped = use_drop;
    return y;
}

template <class S>
FeatMap<S> block_backward(const detail::ConvBlock<S>& blk, const ParamStoreT<S>& ps,
                          const detail::ConvBlockTape<S>& t, const FeatMap<S>& dy,
                          ParamStoreT<S>& grads) {
    FeatMap<S> d = dy;
    if (t.dropped) d = nn::Dropout<S>::backward(t.d2, d);
    d = nn::Relu<S>::backward(t.r2, d, S(0));
    d = blk.n2.backward(ps, t.n2, d, grads);
    d = blk.c2.backward(ps, t.c2, d, grads);
    if (t.dropped) d = nn::Dropout<S>::backward(t.d1, d);
    d = nn::Relu<S>::backward(t.r1, d, S(0));
    d = blk.n1.backward(ps, t.n1, d, grads);
    d = blk.c1.backward(ps, t.c1, d, grads);
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

template <class S>
Generator<S>::Generator(ParamStoreT<S>& store, const GeneratorConfig& cfg)
    : cfg_(cfg), store_(&store) {
    cfg.validate();
    const int b = cfg.base_channels;
    int in_ch = 1;
    for (int i = 0; i < cfg.depth; ++i) {
        const int out_ch = b << i;
        enc_.emplace_back(store, strfmt("g.enc%d", i), in_ch, out_ch);
        in_ch = out_ch;
    }
    bott_ = detail::ConvBlock<S>(store, "g.bott", in_ch, b << cfg.depth);
    for (int j = 0; j < cfg.depth; ++j) {
        const int level = cfg.depth - 1 - j;
        const int ch = b << level;
        DecLevel d;
        d.up = nn::Conv2d<S>(store, strfmt("g.dec%d.up", level), ch * 2, ch, 3, 1, 1, /*bias=*/false);
        d.up_n = nn::InstanceNorm<S>(store, strfmt("g.dec%d.upn", level), ch);
        d.block = detail::ConvBlock<S>(store, strfmt("g.dec%d", level), ch * 2, ch);
        dec_.push_back(std::move(d));
    }
    out_ = nn::Conv2d<S>(store, "g.out", b, cfg.output_logits, 1, 1, 0, /*bias=*/true);
}

template <class S>
FeatMap<S> Generator<S>::forward(const FeatMap<S>& x, const StochasticCtx& ctx, Tape* tape,
                                 FeatMap<S>* bottleneck_out) const {
    if (x.h != cfg_.input_side || x.w != cfg_.input_side || x.channels() != 1) {
        throw ValidationError(strfmt("generator: expected %dx%dx1 input, got %dx%dx%d", cfg_.input_side,
                                     cfg_.input_side, x.h, x.w, x.channels()));
    }
    const ParamStoreT<S>& ps = *store_;
    if (tape) {
        tape->enc.resize(cfg_.depth);
        tape->pool.resize(cfg_.depth);
        tape->dec.resize(cfg_.depth);
    }
    int drop_id = 0;
    std::vector<FeatMap<S>> skips(cfg_.depth);
    FeatMap<S> cur = x;
    for (int i = 0; i < cfg_.depth; ++i) {
        cur = block_forward(enc_[i], ps, cur, ctx, cfg_.dropout_rate, tape ? &tape->enc[i] : nullptr,
                            &drop_id);
        skips[i] = cur;
        cur = nn::MaxPool2x2<S>::forward(cur, tape ? &tape->pool[i] : nullptr);
    }
    cur = block_forward(bott_, ps, cur, ctx, cfg_.dropout_rate, tape ? &tape->bott : nullptr, &drop_id);
    if (tape) tape->bottleneck = cur;
    if (bottleneck_out) *bottleneck_out = cur;
    for (int j = 0; j < cfg_.depth; ++j) {
        const int level = cfg_.depth - 1 - j;
        auto* dt = tape ? &tape->dec[j] : nullptr;
        cur = nn::UpsampleNearest2x<S>::forward(cur);
        cur = dec_[j].up.forward(ps, cur, dt ? &dt->up_c : nullptr);
        cur = dec_[j].up_n.forward(ps, cur, dt ? &dt->up_n : nullptr);
        cur = nn::Relu<S>::forward(cur, S(0), dt ? &dt->up_r : nullptr);
        if (ctx.train && cfg_.dropout_rate > 0.0) {
            auto rng = make_rng(ctx.seed, "dropout", static_cast<uint64_t>(drop_id++));
            cur = nn::Dropout<S>::forward(cur, cfg_.dropout_rate, rng, dt ? &dt->up_d : nullptr);
            if (dt) dt->dropped = true;
        }
        cur = nn::concat_channels(cur, skips[level]);
        cur = block_forward(dec_[j].block, ps, cur, ctx, cfg_.dropout_rate, dt ? &dt->block : nullptr,
                            &drop_id);
    }
    cur = out_.forward(ps, cur, tape ? &tape->out_c : nullptr);
    return nn::PixelSoftmax<S>::forward(cur, tape ? &tape->softmax : nullptr);
}

template <class S>
FeatMap<S> Generator<S>::backward(const Tape& tape, const FeatMap<S>& d_probs,
                                  const FeatMap<S>* d_bottleneck, ParamStoreT<S>& grads) const {
    const ParamStoreT<S>& ps = *store_;
    FeatMap<S> d = nn::PixelSoftmax<S>::backward(tape.softmax, d_probs);
    d = out_.backward(ps, tape.out_c, d, grads);
    std::vector<FeatMap<S>> d_skips(cfg_.depth);
    for (int j = cfg_.depth - 1; j >= 0; --j) {
        const int level = cfg_.depth - 1 - j;
        const auto& dt = tape.dec[j];
        d = block_backward(dec_[j].block, ps, dt.block, d, grads);
        FeatMap<S> d_up;
        nn::split_channels(d, d.channels() / 2, d_up, d_skips[level]);
        if (dt.dropped) d_up = nn::Dropout<S>::backward(dt.up_d, d_up);
        d_up = nn::Relu<S>::backward(dt.up_r, d_up, S(0));
        d_up = dec_[j].up_n.backward(ps, dt.up_n, d_up, grads);
        d_up = dec_[j].up.backward(ps, dt.up_c, d_up, grads);
        d = nn::UpsampleNearest2x<S>::backward(d_up);
    }
    if (d_bottleneck) d.m += d_bottleneck->m;
    d = block_backward(bott_, ps, tape.bott, d, grads);
    for (int i = cfg_.depth - 1; i >= 0; --i) {
        d = nn::MaxPool2x2<S>::backward(tape.pool[i], d);
        d.m += d_skips[i].m;
        d = block_backward(enc_[i], ps, tape.enc[i], d, grads);
    }
    return d;
}

template <class S>
void Generator<S>::init(uint64_t seed) {
    init_store(*store_, seed);
}

template <class S>
size_t Generator<S>::expected_param_count(const GeneratorConfig& cfg) {
    auto block = [](size_t in, size_t out) { return 9 * out * (in + out) + 4 * out; };
    const size_t b = static_cast<size_t>(cfg.base_channels);
    size_t total = 0;
    size_t in_ch = 1;
    for (int i = 0; i < cfg.depth; ++i) {
        const size_t out_ch = b << i;
        total += block(in_ch, out_ch);
        in_ch = out_ch;
    }
    total += block(in_ch, b << cfg.depth);
    for (int level = 0; level < cfg.depth; ++level) {
        const size_t ch = b << level;
        total += 9 * (2 * ch) * ch + 2 * ch;  // up conv + its norm
        total += block(2 * ch, ch);
    }
    total += b * cfg.output_logits + cfg.output_logits;  // 1x1 head with bias
    return total;
}

// ---------------------------------------------------------------------------
// ConvTrunk
// ---------------------------------------------------------------------------

template <class S>
ConvTrunk<S>::ConvTrunk(ParamStoreT<S>& store, const std::string& prefix, int input_channels,
                        int depth, int base_channels, double dropout_rate)
    : store_(&store), depth_(depth), base_channels_(base_channels), dropout_rate_(dropout_rate) {
    int in_ch = input_channels;
    for (int i = 0; i < depth; ++i) {
        const int out_ch = base_channels << i;
        convs_.emplace_back(store, strfmt("%s.conv%d", prefix.c_str(), i), in_ch, out_ch, 3, 2, 1,
                            /*bias=*/false);
        norms_.emplace_back(store, strfmt("%s.in%d", prefix.c_str(), i), out_ch);
        in_ch = out_ch;
    }
}

template <class S>
nn::Vec<S> ConvTrunk<S>::forward(const FeatMap<S>& x, const StochasticCtx& ctx, Tape* tape) const {
    const ParamStoreT<S>& ps = *store_;
    const bool use_drop = ctx.train && dropout_rate_ > 0.0;
    if (tape) {
        tape->conv.resize(depth_);
        tape->norm.resize(depth_);
        tape->relu.resize(depth_);
        tape->drop.resize(depth_);
        tape->dropped = use_drop;
    }
    FeatMap<S> cur = x;
    for (int i = 0; i < depth_; ++i) {
        cur = convs_[i].forward(ps, cur, tape ? &tape->conv[i] : nullptr);
        cur = norms_[i].forward(ps, cur, tape ? &tape->norm[i] : nullptr);
        cur = nn::Relu<S>::forward(cur, S(0.2), tape ? &tape->relu[i] : nullptr);
        if (use_drop) {
            auto rng = make_rng(ctx.seed, "trunk-dropout", static_cast<uint64_t>(i));
            cur = nn::Dropout<S>::forward(cur, dropout_rate_, rng, tape ? &tape->drop[i] : nullptr);
        }
    }
    if (tape) {
        tape->feat_h = cur.h;
        tape->feat_w = cur.w;
    }
    return nn::GlobalAvgPool<S>::forward(cur);
}

template <class S>
FeatMap<S> ConvTrunk<S>::backward(const Tape& tape, const nn::Vec<S>& d_feat,
                                  ParamStoreT<S>& grads) const {
    const ParamStoreT<S>& ps = *store_;
    FeatMap<S> d = nn::GlobalAvgPool<S>::backward(tape.feat_h, tape.feat_w, d_feat);
    for (int i = depth_ - 1; i >= 0; --i) {
        if (tape.dropped) d = nn::Dropout<S>::backward(tape.drop[i], d);
        d = nn::Relu<S>::backward(tape.relu[i], d, S(0.2));
        d = norms_[i].backward(ps, tape.norm[i], d, grads);
        d = convs_[i].backward(ps, tape.conv[i], d, grads);
    }
    return d;
}

template <class S>
size_t ConvTrunk<S>::expected_param_count(int input_channels, int depth, int base_channels) {
    size_t total = 0;
    size_t in_ch = static_cast<size_t>(input_channels);
    for (int i = 0; i < depth; ++i) {
        const size_t out_ch = static_cast<size_t>(base_channels) << i;
        total += 9 * in_ch * out_ch + 2 * out_ch;
        in_ch = out_ch;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

template <class S>
Discriminator<S>::Discriminator(ParamStoreT<S>& store, const DiscriminatorConfig& cfg)
    : cfg_(cfg), store_(&store) {
    cfg.validate();
    trunk_ = ConvTrunk<S>(store, "d.trunk", cfg.input_channels, cfg.depth, cfg.base_channels,
                          cfg.dropout_rate);
    main_head_ = nn::Linear<S>(store, "d.main", trunk_.out_channels(), cfg.main_logits());
    aux_head_ = nn::Linear<S>(store, "d.aux", trunk_.out_channels(), cfg.transform_classes);
}

template <class S>
typename Discriminator<S>::Logits Discriminator<S>::forward(const FeatMap<S>& x, const FeatMap<S>& y,
                                                            const StochasticCtx& ctx,
                                                            Tape* tape) const {
    if (x.channels() != 1) {
        throw ValidationError(strfmt("discriminator: image must have 1 channel, got %d", x.channels()));
    }
    if (1 + y.channels() != cfg_.input_channels) {
        throw ValidationError(strfmt("discriminator: channel mismatch, image+mask gives %d, config wants %d",
                                     1 + y.channels(), cfg_.input_channels));
    }
    if (x.h != y.h || x.w != y.w || x.h != cfg_.input_side) {
        throw ValidationError(strfmt("discriminator: expected side %d pairs, got image %dx%d / mask %dx%d",
                                     cfg_.input_side, x.h, x.w, y.h, y.w));
    }
    FeatMap<S> xy = nn::concat_channels(x, y);
    nn::Vec<S> feat = trunk_.forward(xy, ctx, tape ? &tape->trunk : nullptr);
    Logits out;
    out.main = main_head_.forward(*store_, feat, tape ? &tape->main : nullptr);
    out.aux = aux_head_.forward(*store_, feat, tape ? &tape->aux : nullptr);
    return out;
}

template <class S>
std::pair<FeatMap<S>, FeatMap<S>> Discriminator<S>::backward(const Tape& tape,
                                                             const nn::Vec<S>& d_main,
                                                             const nn::Vec<S>& d_aux,
                                                             ParamStoreT<S>& grads) const {
    nn::Vec<S> d_feat = nn::Vec<S>::Zero(trunk_.out_channels());
    if (d_main.size() > 0) d_feat += main_head_.backward(*store_, tape.main, d_main, grads);
    if (d_aux.size() > 0) d_feat += aux_head_.backward(*store_, tape.aux, d_aux, grads);
    FeatMap<S> dxy = trunk_.backward(tape.trunk, d_feat, grads);
    FeatMap<S> dx, dy;
    nn::split_channels(dxy, 1, dx, dy);
    return {std::move(dx), std::move(dy)};
}

template <class S>
void Discriminator<S>::init(uint64_t seed) {
    init_store(*store_, seed);
}

template <class S>
size_t Discriminator<S>::expected_param_count(const DiscriminatorConfig& cfg) {
    size_t total = ConvTrunk<S>::expected_param_count(cfg.input_channels, cfg.depth, cfg.base_channels);
    const size_t c = static_cast<size_t>(cfg.base_channels) << (cfg.depth - 1);
    total += c * cfg.main_logits() + cfg.main_logits();
    total += c * cfg.transform_classes + cfg.transform_classes;
    return total;
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

template <class S>
Classifier<S>::Classifier(ParamStoreT<S>& store, const ClassifierConfig& cfg)
    : cfg_(cfg), store_(&store) {
    cfg.validate();
    trunk_ = ConvTrunk<S>(store, "c.trunk", 1, cfg.depth, cfg.base_channels, cfg.dropout_rate);
    head_ = nn::Linear<S>(store, "c.head", trunk_.out_channels(), cfg.classes);
}

template <class S>
nn::Vec<S> Classifier<S>::forward(const FeatMap<S>& x, const StochasticCtx& ctx, Tape* tape) const {
    if (x.channels() != 1 || x.h != cfg_.input_side || x.w != cfg_.input_side) {
        throw ValidationError(strfmt("classifier: expected %dx%dx1 input, got %dx%dx%d", cfg_.input_side,
                                     cfg_.input_side, x.h, x.w, x.channels()));
    }
    nn::Vec<S> feat = trunk_.forward(x, ctx, tape ? &tape->trunk : nullptr);
    return head_.forward(*store_, feat, tape ? &tape->head : nullptr);
}

template <class S>
FeatMap<S> Classifier<S>::backward(const Tape& tape, const nn::Vec<S>& d_logits,
                                   ParamStoreT<S>& grads) const {
    nn::Vec<S> d_feat = head_.backward(*store_, tape.head, d_logits, grads);
    return trunk_.backward(tape.trunk, d_feat, grads);
}

template <class S>
void Classifier<S>::init(uint64_t seed) {
    init_store(*store_, seed);
}

template <class S>
size_t Classifier<S>::expected_param_count(const ClassifierConfig& cfg) {
    size_t total = ConvTrunk<S>::expected_param_count(1, cfg.depth, cfg.base_channels);
    const size_t c = static_cast<size_t>(cfg.base_channels) << (cfg.depth - 1);
    total += c * cfg.classes + cfg.classes;
    return total;
}

// ---------------------------------------------------------------------------
// Umtl
// ---------------------------------------------------------------------------

template <class S>
Umtl<S>::Umtl(ParamStoreT<S>& store, const UmtlConfig& cfg)
    : cfg_(cfg), store_(&store), gen_(store, cfg.gen) {
    cfg.validate();
    head_ = nn::Linear<S>(store, "u.head", cfg.gen.bottleneck_channels(), cfg.classes);
}

template <class S>
typename Umtl<S>::Output Umtl<S>::forward(const FeatMap<S>& x, const StochasticCtx& ctx,
                                          Tape* tape) const {
    Output out;
    FeatMap<S> bottleneck;
    out.mask = gen_.forward(x, ctx, tape ? &tape->gen : nullptr, &bottleneck);
    nn::Vec<S> feat = nn::GlobalAvgPool<S>::forward(bottleneck);
    out.logits = head_.forward(*store_, feat, tape ? &tape->head : nullptr);
    return out;
}

template <class S>
FeatMap<S> Umtl<S>::backward(const Tape& tape, const FeatMap<S>& d_mask, const nn::Vec<S>& d_logits,
                             ParamStoreT<S>& grads) const {
    const FeatMap<S>& bott = tape.gen.bottleneck;
    nn::Vec<S> d_feat = head_.backward(*store_, tape.head, d_logits, grads);
    FeatMap<S> d_bott = nn::GlobalAvgPool<S>::backward(bott.h, bott.w, d_feat);
    return gen_.backward(tape.gen, d_mask, &d_bott, grads);
}

template <class S>
void Umtl<S>::init(uint64_t seed) {
    init_store(*store_, seed);
}

template <class S>
size_t Umtl<S>::expected_param_count(const UmtlConfig& cfg) {
    return Generator<S>::expected_param_count(cfg.gen) +
           static_cast<size_t>(cfg.gen.bottleneck_channels()) * cfg.classes + cfg.classes;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

template <class S>
void init_store(ParamStoreT<S>& store, uint64_t seed) {
    auto rng = make_rng(seed, "param-init");
    for (auto& e : store.entries) {
        if (e.name.size() > 2 && e.name.compare(e.name.size() - 2, 2, ".w") == 0) {
            // He-normal: std = sqrt(2 / fan_in); fan_in is the leading dim
            const double std = std::sqrt(2.0 / static_cast<double>(e.shape[0]));
            for (Eigen::Index i = 0; i < e.value.size(); ++i) {
                e.value[i] = static_cast<S>(normal01(rng) * std);
            }
        } else if (e.name.size() > 6 && e.name.compare(e.name.size() - 6, 6, ".gamma") == 0) {
            e.value.setOnes();
        } else {
            e.value.setZero();
        }
    }
}

template class Generator<float>;
template class Generator<double>;
template class ConvTrunk<float>;
template class ConvTrunk<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template class Classifier<float>;
template class Classifier<double>;
template class Umtl<float>;
template class Umtl<double>;
template void init_store<float>(ParamStoreT<float>&, uint64_t);
template void init_store<double>(ParamStoreT<double>&, uint64_t);

}  // namespace s4mtl
