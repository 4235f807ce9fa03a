#include <doctest.h>

#include <cmath>

#include "s4mtl/models.hpp"
#include "s4mtl/rng.hpp"
#include "test_util.hpp"

using namespace s4mtl;
using testutil::central_diff;
using testutil::rel_err;

namespace {

FeatMap<double> random_input(int side, uint64_t seed) {
    auto rng = make_rng(seed, "model-in");
    FeatMap<double> x(side, side, 1);
    for (int i = 0; i < x.m.size(); ++i) x.m.data()[i] = uniform01(rng);
    return x;
}

nn::Mat<double> probe_like(long rows, long cols, uint64_t seed) {
    auto rng = make_rng(seed, "model-probe");
    nn::Mat<double> w(rows, cols);
    for (int i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -1.0, 1.0);
    return w;
}

GeneratorConfig tiny_gen() {
    GeneratorConfig cfg;
    cfg.input_side = 8;
    cfg.depth = 1;
    cfg.base_channels = 4;
    cfg.dropout_rate = 0.4;
    return cfg;
}

DiscriminatorConfig tiny_disc() {
    DiscriminatorConfig cfg;
    cfg.input_side = 8;
    cfg.depth = 2;
    cfg.base_channels = 4;
    cfg.real_classes = 2;
    cfg.transform_classes = 6;
    return cfg;
}

// max relative error of analytic vs finite-difference gradients over every
// parameter in the store
template <class LossFn>
double max_param_grad_err(ParamStoreT<double>& ps, const ParamStoreT<double>& grads, LossFn&& loss) {
    double worst = 0.0;
    for (auto& entry : ps.entries) {
        const auto& gentry = grads.entries[ps.by_name.at(entry.name)];
        for (int i = 0; i < entry.value.size(); ++i) {
            const double fd = central_diff(loss, &entry.value[i]);
            worst = std::max(worst, rel_err(gentry.value[i], fd, 1e-3));
        }
    }
    return worst;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("generator shape contract and per-pixel softmax normalization") {
    GeneratorConfig cfg = tiny_gen();
    ParamStoreT<double> ps;
    Generator<double> gen(ps, cfg);
    gen.init(3);
    for (int b = 0; b < 4; ++b) {  // batch of independent samples
        FeatMap<double> probs = gen.forward(random_input(8, 100 + b), eval_ctx(), nullptr);
        CHECK(probs.h == 8);
        CHECK(probs.w == 8);
        CHECK(probs.channels() == 2);
        for (long r = 0; r < probs.m.rows(); ++r) {
            const double sum = probs.m.row(r).sum();
            CHECK(std::fabs(sum - 1.0) < 1e-6);
            for (int c = 0; c < 2; ++c) {
                CHECK(probs.m(r, c) > 0.0);
                CHECK(probs.m(r, c) < 1.0);
            }
        }
    }
    FeatMap<double> wrong(4, 4, 1);
    CHECK_THROWS_AS(gen.forward(wrong, eval_ctx(), nullptr), ValidationError);
}

TEST_CASE("evaluation mode is deterministic, training mode repeatable by seed") {
    ParamStoreT<double> ps;
    Generator<double> gen(ps, tiny_gen());
    gen.init(5);
    FeatMap<double> x = random_input(8, 9);
    auto a = gen.forward(x, eval_ctx(), nullptr);
    auto b = gen.forward(x, eval_ctx(), nullptr);
    CHECK(a.m == b.m);

    StochasticCtx train{true, 77};
    auto c = gen.forward(x, train, nullptr);
    auto d = gen.forward(x, train, nullptr);
    CHECK(c.m == d.m);           // same dropout seed, same result
    StochasticCtx other{true, 78};
    auto e = gen.forward(x, other, nullptr);
    CHECK(c.m != e.m);
}

TEST_CASE("init is deterministic and weight means sit within 3 sigma") {
    ParamStoreT<double> ps1, ps2;
    Generator<double> g1(ps1, tiny_gen()), g2(ps2, tiny_gen());
    g1.init(11);
    g2.init(11);
    for (size_t i = 0; i < ps1.entries.size(); ++i) {
        CHECK(ps1.entries[i].value == ps2.entries[i].value);
    }
    for (const auto& entry : ps1.entries) {
        if (entry.name.ends_with(".w")) {
            const double std = std::sqrt(2.0 / entry.shape[0]);
            const double mean = entry.value.mean();
            const double tol = 3.0 * std / std::sqrt(static_cast<double>(entry.value.size()));
            CHECK(std::fabs(mean) < tol);
        } else if (entry.name.ends_with(".gamma")) {
            CHECK(entry.value.isOnes());
        } else {
            CHECK(entry.value.isZero());
        }
    }
}

TEST_CASE("parameter counts match the closed form") {
    {
        ParamStoreT<double> ps;
        GeneratorConfig cfg;
        cfg.input_side = 64;
        cfg.depth = 3;
        cfg.base_channels = 16;
        Generator<double> gen(ps, cfg);
        CHECK(ps.scalar_count() == Generator<double>::expected_param_count(cfg));
    }
    {
        ParamStoreT<double> ps;
        DiscriminatorConfig cfg = tiny_disc();
        Discriminator<double> d(ps, cfg);
        CHECK(ps.scalar_count() == Discriminator<double>::expected_param_count(cfg));
    }
    {
        ParamStoreT<double> ps;
        ClassifierConfig cfg;
        cfg.input_side = 16;
        cfg.depth = 2;
        cfg.base_channels = 4;
        cfg.classes = 3;
        Classifier<double> c(ps, cfg);
        CHECK(ps.scalar_count() == Classifier<double>::expected_param_count(cfg));
    }
    {
        ParamStoreT<double> ps;
        UmtlConfig cfg;
        cfg.gen = tiny_gen();
        cfg.classes = 2;
        Umtl<double> u(ps, cfg);
        CHECK(ps.scalar_count() == Umtl<double>::expected_param_count(cfg));
    }
}

TEST_CASE("discriminator shape contract and robustness") {
    DiscriminatorConfig cfg = tiny_disc();
    ParamStoreT<double> ps;
    Discriminator<double> disc(ps, cfg);
    disc.init(13);
    FeatMap<double> x = random_input(8, 21);
    for (double fill : {0.0, 1.0}) {
        FeatMap<double> y(8, 8, 2);
        y.m.setConstant(fill);
        auto logits = disc.forward(x, y, eval_ctx(), nullptr);
        CHECK(logits.main.size() == 3);
        CHECK(logits.aux.size() == 6);
        CHECK(logits.main.allFinite());
        CHECK(logits.aux.allFinite());
    }
    FeatMap<double> bad(8, 8, 3);
    CHECK_THROWS_AS(disc.forward(x, bad, eval_ctx(), nullptr), ValidationError);
}

TEST_CASE("classifier emits n logits whose softmax sums to one") {
    ClassifierConfig cfg;
    cfg.input_side = 8;
    cfg.depth = 2;
    cfg.base_channels = 4;
    cfg.classes = 3;
    ParamStoreT<double> ps;
    Classifier<double> cls(ps, cfg);
    cls.init(17);
    auto z1 = cls.forward(random_input(8, 31), eval_ctx(), nullptr);
    auto z2 = cls.forward(random_input(8, 31), eval_ctx(), nullptr);
    CHECK(z1.size() == 3);
    CHECK(z1 == z2);
    double sum = 0.0;
    const double mx = z1.maxCoeff();
    for (int i = 0; i < 3; ++i) sum += std::exp(z1[i] - mx);
    double total = 0.0;
    for (int i = 0; i < 3; ++i) total += std::exp(z1[i] - mx) / sum;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("umtl emits both heads with generator-contract masks") {
    UmtlConfig cfg;
    cfg.gen = tiny_gen();
    cfg.classes = 2;
    ParamStoreT<double> ps;
    Umtl<double> u(ps, cfg);
    u.init(19);
    auto out = u.forward(random_input(8, 41), eval_ctx(), nullptr);
    CHECK(out.mask.h == 8);
    CHECK(out.mask.channels() == 2);
    CHECK(out.logits.size() == 2);
    for (long r = 0; r < out.mask.m.rows(); ++r) {
        CHECK(std::fabs(out.mask.m.row(r).sum() - 1.0) < 1e-6);
    }
}

TEST_CASE("generator analytic gradients match finite differences (tiny config, eval mode)") {
    ParamStoreT<double> ps;
    Generator<double> gen(ps, tiny_gen());
    gen.init(23);
    FeatMap<double> x = random_input(8, 51);
    nn::Mat<double> probe = probe_like(64, 2, 52);

    auto loss = [&] {
        auto probs = gen.forward(x, eval_ctx(), nullptr);
        return (probs.m.array() * probe.array()).sum();
    };

    typename Generator<double>::Tape tape;
    gen.forward(x, eval_ctx(), &tape);
    FeatMap<double> dprobs(8, 8, 2);
    dprobs.m = probe;
    ParamStoreT<double> grads = ps.zeros_like();
    gen.backward(tape, dprobs, nullptr, grads);

    CHECK(max_param_grad_err(ps, grads, loss) < 1e-4);
}

TEST_CASE("discriminator gradients match finite differences, including input masks") {
    ParamStoreT<double> ps;
    Discriminator<double> disc(ps, tiny_disc());
    disc.init(29);
    FeatMap<double> x = random_input(8, 61);
    FeatMap<double> y(8, 8, 2);
    {
        auto rng = make_rng(62, "disc-mask");
        for (long r = 0; r < y.m.rows(); ++r) {
            const double fg = uniform(rng, 0.05, 0.95);
            y.m(r, 0) = 1.0 - fg;
            y.m(r, 1) = fg;
        }
    }
    nn::Vec<double> wm = probe_like(3, 1, 63).col(0);
    nn::Vec<double> wa = probe_like(6, 1, 64).col(0);

    auto loss = [&] {
        auto logits = disc.forward(x, y, eval_ctx(), nullptr);
        return logits.main.dot(wm) + logits.aux.dot(wa);
    };

    typename Discriminator<double>::Tape tape;
    disc.forward(x, y, eval_ctx(), &tape);
    ParamStoreT<double> grads = ps.zeros_like();
    auto [dx, dy] = disc.backward(tape, wm, wa, grads);

    CHECK(max_param_grad_err(ps, grads, loss) < 1e-4);
    double worst = 0.0;
    for (int i = 0; i < y.m.size(); ++i) {  // gradient flows into the mask input
        const double fd = central_diff(loss, &y.m.data()[i]);
        worst = std::max(worst, rel_err(dy.m.data()[i], fd, 1e-3));
    }
    for (int i = 0; i < x.m.size(); ++i) {
        const double fd = central_diff(loss, &x.m.data()[i]);
        worst = std::max(worst, rel_err(dx.m.data()[i], fd, 1e-3));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("umtl: a combined loss reaches both heads (finite-difference probe)") {
    UmtlConfig cfg;
    cfg.gen = tiny_gen();
    cfg.classes = 2;
    ParamStoreT<double> ps;
    Umtl<double> u(ps, cfg);
    u.init(31);
    FeatMap<double> x = random_input(8, 71);
    nn::Mat<double> probe_mask = probe_like(64, 2, 72);
    nn::Vec<double> probe_cls = probe_like(2, 1, 73).col(0);

    auto loss = [&] {
        auto out = u.forward(x, eval_ctx(), nullptr);
        return (out.mask.m.array() * probe_mask.array()).sum() + out.logits.dot(probe_cls);
    };

    typename Umtl<double>::Tape tape;
    u.forward(x, eval_ctx(), &tape);
    FeatMap<double> dmask(8, 8, 2);
    dmask.m = probe_mask;
    ParamStoreT<double> grads = ps.zeros_like();
    u.backward(tape, dmask, probe_cls, grads);

    CHECK(max_param_grad_err(ps, grads, loss) < 1e-4);
    // the classification head itself received signal
    const auto& head_grad = grads.entries[grads.by_name.at("u.head.w")].value;
    CHECK(head_grad.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("training-mode gradients match finite differences under a fixed dropout seed") {
    ParamStoreT<double> ps;
    GeneratorConfig cfg = tiny_gen();
    Generator<double> gen(ps, cfg);
    gen.init(37);
    FeatMap<double> x = random_input(8, 81);
    nn::Mat<double> probe = probe_like(64, 2, 82);
    StochasticCtx ctx{true, 901};

    auto loss = [&] {
        auto probs = gen.forward(x, ctx, nullptr);
        return (probs.m.array() * probe.array()).sum();
    };

    typename Generator<double>::Tape tape;
    gen.forward(x, ctx, &tape);
    FeatMap<double> dprobs(8, 8, 2);
    dprobs.m = probe;
    ParamStoreT<double> grads = ps.zeros_like();
    gen.backward(tape, dprobs, nullptr, grads);

    CHECK(max_param_grad_err(ps, grads, loss) < 1e-4);
}

TEST_CASE("float and double instantiations agree to float precision") {
    ParamStoreT<double> pd;
    Generator<double> gd(pd, tiny_gen());
    gd.init(43);
    ParamStoreT<float> pf = pd.cast<float>();
    Generator<float> gf(pf, tiny_gen());
    FeatMap<double> x = random_input(8, 91);
    FeatMap<float> xf(8, 8, 1);
    xf.m = x.m.cast<float>();
    auto yd = gd.forward(x, eval_ctx(), nullptr);
    auto yf = gf.forward(xf, eval_ctx(), nullptr);
    for (int i = 0; i < yd.m.size(); ++i) {
        CHECK(std::fabs(yd.m.data()[i] - static_cast<double>(yf.m.data()[i])) < 1e-4);
    }
}

}  // TEST_SUITE
