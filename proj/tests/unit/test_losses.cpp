#include <doctest.h>

#include <cmath>

#include "s4mtl/common.hpp"
#include "s4mtl/losses.hpp"
#include "test_util.hpp"

using namespace s4mtl;
using testutil::central_diff;
using testutil::random_one_hot_mask;
using testutil::random_prob_mask;
using testutil::rel_err;

namespace {

// ---- independent reference implementations (naive, long double) ----

std::vector<double> ref_softmax(const std::vector<double>& logits) {
    long double m = logits[0];
    for (double v : logits) m = std::max<long double>(m, v);
    long double sum = 0.0L;
    std::vector<long double> e(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<long double>(logits[i]) - m);
        sum += e[i];
    }
    std::vector<double> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
    return out;
}

// direct transcription: sums over every pixel, foreground logit k=1,
// complement k=0
double ref_dice(const Mask& y, const Mask& yhat) {
    long double s_kk = 0.0L, s_comp_pred = 0.0L, s_true_comp = 0.0L;
    for (int r = 0; r < y.rows; ++r) {
        for (int c = 0; c < y.cols; ++c) {
            s_kk += static_cast<long double>(y.at(r, c, 1)) * yhat.at(r, c, 1);
            s_comp_pred += static_cast<long double>(y.at(r, c, 0)) * yhat.at(r, c, 1);
            s_true_comp += static_cast<long double>(y.at(r, c, 1)) * yhat.at(r, c, 0);
        }
    }
    const long double den = s_kk + 0.5L * s_comp_pred + 0.5L * s_true_comp + 1e-7L;
    return static_cast<double>(1.0L - s_kk / den);
}

double ref_abs_kl(const Mask& a, const Mask& b) {
    long double sum = 0.0L;
    for (int r = 0; r < a.rows; ++r) {
        for (int c = 0; c < a.cols; ++c) {
            long double av = std::min(1.0L - 1e-6L, std::max<long double>(1e-6L, a.at(r, c, 1)));
            long double bv = std::min(1.0L - 1e-6L, std::max<long double>(1e-6L, b.at(r, c, 1)));
            sum += std::fabs((av - bv) * std::log(av / bv));
        }
    }
    return static_cast<double>(sum);
}

double ref_g_adv(const std::vector<double>& p) {
    long double s = 0.0L;
    for (double v : p) s += -std::log(std::max<long double>(1.0L - v, 1e-6L));
    return static_cast<double>(s / p.size());
}

Mask uniform_mask(int side, double fg) {
    Mask m(side, side, 2);
    for (size_t i = 0; i < m.plane(); ++i) {
        m.data[i] = 1.0 - fg;
        m.data[m.plane() + i] = fg;
    }
    return m;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("class_probabilities: symmetry, stability, oracle") {
    Eigen::VectorXd z(3);
    z << 0, 0, 0;
    auto p = class_probabilities(z);
    for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    z << 1000, 0, 0;
    p = class_probabilities(z);
    CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::isfinite(p.sum()));

    z << 1, 2, 3;
    p = class_probabilities(z);
    auto ref = ref_softmax({1, 2, 3});
    for (int i = 0; i < 3; ++i) CHECK(rel_err(p[i], ref[i]) < 1e-12);

    z << 1, std::nan(""), 0;
    CHECK_THROWS_AS(class_probabilities(z), ValidationError);
}

TEST_CASE("dice: perfect overlap gives ~0, disjoint gives 1") {
    auto rng = make_rng(5, "dice-test");
    Mask y = random_one_hot_mask(8, rng);
    CHECK(dice_loss(y, y) == doctest::Approx(0.0).epsilon(1e-6));

    // complement prediction: foreground exactly where truth has background
    Mask flipped(8, 8, 2);
    for (size_t i = 0; i < y.plane(); ++i) {
        flipped.data[i] = y.data[y.plane() + i];
        flipped.data[flipped.plane() + i] = y.data[i];
    }
    CHECK(dice_loss(y, flipped) == doctest::Approx(1.0));
}

TEST_CASE("dice: 4x4 half-confidence example matches the hand value") {
    // truth foreground = 4 pixels; prediction 0.5 on exactly those pixels
    Mask y(4, 4, 2);
    Mask yhat(4, 4, 2);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            const bool fg = r < 2 && c < 2;
            y.at(r, c, 1) = fg ? 1.0 : 0.0;
            y.at(r, c, 0) = fg ? 0.0 : 1.0;
            yhat.at(r, c, 1) = fg ? 0.5 : 0.0;
            yhat.at(r, c, 0) = fg ? 0.5 : 1.0;
        }
    }
    // S1 = 2, S2 = 0, S3 = 2 -> 1 - 2/(3 + 1e-7)
    const double expected = 1.0 - 2.0 / (3.0 + 1e-7);
    CHECK(dice_loss(y, yhat) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(dice_loss(y, yhat) == doctest::Approx(ref_dice(y, yhat)).epsilon(1e-12));
}

TEST_CASE("dice: in range and decreasing as mass moves onto the true foreground") {
    auto rng = make_rng(7, "dice-mono");
    for (int trial = 0; trial < 20; ++trial) {
        Mask y = random_one_hot_mask(6, rng);
        Mask yhat = random_prob_mask(6, rng);
        const double base = dice_loss(y, yhat);
        CHECK(base >= 0.0);
        CHECK(base <= 1.0);
        // push one true-foreground pixel's predicted mass toward foreground
        for (size_t i = 0; i < y.plane(); ++i) {
            if (y.data[y.plane() + i] == 1.0 && yhat.data[yhat.plane() + i] < 0.9) {
                Mask bumped = yhat;
                bumped.data[bumped.plane() + i] += 0.05;
                bumped.data[i] -= 0.05;
                CHECK(dice_loss(y, bumped) < base);
                break;
            }
        }
    }
}

TEST_CASE("abs kl: zero at equality, symmetric, single-pixel oracle") {
    Mask a = uniform_mask(1, 0.9);
    Mask b = uniform_mask(1, 0.1);
    CHECK(abs_kl_loss(a, a) == doctest::Approx(0.0));
    const double expected = std::fabs(0.8 * std::log(9.0));
    CHECK(abs_kl_loss(a, b) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(abs_kl_loss(a, b) == doctest::Approx(abs_kl_loss(b, a)).epsilon(1e-12));
}

TEST_CASE("abs kl: nonnegative, zero only at clamped equality") {
    auto rng = make_rng(11, "kl-prop");
    for (int trial = 0; trial < 50; ++trial) {
        Mask a = random_prob_mask(5, rng);
        Mask b = random_prob_mask(5, rng);
        const double v = abs_kl_loss(a, b);
        CHECK(v >= 0.0);
        CHECK(rel_err(v, ref_abs_kl(a, b)) < 1e-12);
    }
    // clamped equality: values past the clamp boundary compare equal
    Mask hi1 = uniform_mask(2, 1.0 - 1e-9);
    Mask hi2 = uniform_mask(2, 1.0 - 1e-8);
    CHECK(abs_kl_loss(hi1, hi2) == 0.0);
}

TEST_CASE("g_adv: endpoints and midpoint") {
    CHECK(g_adv_loss({0.0}) == doctest::Approx(0.0));
    CHECK(g_adv_loss({1.0}) == doctest::Approx(-std::log(1e-6)).epsilon(1e-12));
    CHECK(g_adv_loss({0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(g_adv_loss({1.5}), ValidationError);
}

TEST_CASE("d_supervised: perfect, uniform, weighted") {
    Eigen::MatrixXd logits(1, 3);
    logits << 100, 0, 0;
    CHECK(d_supervised_loss(logits, {0}) == doctest::Approx(0.0).epsilon(1e-9));

    logits << 0, 0, 0;
    CHECK(d_supervised_loss(logits, {1}) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    Eigen::MatrixXd two(2, 3);
    two << 1, 2, 0.5, 3, -1, 0;
    const double single = d_supervised_loss(two.topRows(1), {1});
    CHECK(d_supervised_loss(two, {1, 0}, {1.0, 0.0}) == doctest::Approx(single).epsilon(1e-12));

    CHECK_THROWS_AS(d_supervised_loss(two, {2, 0}), ValidationError);  // fake class target
}

TEST_CASE("d_selfsup: perfect, uniform, mixed mean") {
    Eigen::MatrixXd aux(1, 6);
    aux.setZero();
    CHECK(d_selfsup_loss(aux, {2}) == doctest::Approx(std::log(6.0)).epsilon(1e-12));

    aux(0, 2) = 200.0;
    CHECK(d_selfsup_loss(aux, {2}) == doctest::Approx(0.0).epsilon(1e-9));

    Eigen::MatrixXd mixed(2, 6);
    mixed.setZero();
    mixed(0, 4) = 200.0;
    CHECK(d_selfsup_loss(mixed, {4, 1}) == doctest::Approx(std::log(6.0) / 2).epsilon(1e-9));

    CHECK_THROWS_AS(d_selfsup_loss(mixed, {6, 0}), ValidationError);
}

TEST_CASE("d_adv_losses: ideal discriminator and midpoint") {
    auto [real, pl, pu] = d_adv_losses({0.0, 0.0}, {1.0}, {1.0, 1.0});
    CHECK(real == doctest::Approx(0.0));
    CHECK(pl == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(pu == doctest::Approx(0.0).epsilon(1e-9));

    auto [r2, p2, u2] = d_adv_losses({0.5}, {0.5}, {0.5});
    CHECK(r2 == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(p2 == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(u2 == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("totals are the documented linear combinations") {
    LossWeights w;
    w.alpha = 0.7;
    w.lambda_adv = 0.02;
    w.lambda_self = 1.3;
    CHECK(total_G(0.5, 2.0, 3.0, 4.0, w) ==
          doctest::Approx(0.5 + 0.02 * 3.0 + 0.7 * (2.0 + 0.02 * 4.0)).epsilon(1e-12));
    CHECK(total_D(0.5, 0.6, 0.7, 0.8, 0.9, w) ==
          doctest::Approx(0.5 + 0.7 + 0.8 + 0.7 * (1.3 * 0.6 + 0.9)).epsilon(1e-12));
    LossWeights bad;
    bad.alpha = -1.0;
    CHECK_THROWS_AS(total_G(0, 0, 0, 0, bad), ValidationError);
    CHECK_THROWS_AS(total_D(0, 0, 0, 0, 0, bad), ValidationError);
}

TEST_CASE("brute-force equivalence on random 8x8 instances") {
    auto rng = make_rng(2024, "loss-bruteforce");
    for (int trial = 0; trial < 100; ++trial) {
        Mask y = random_one_hot_mask(8, rng);
        Mask yhat = random_prob_mask(8, rng);
        CHECK(std::fabs(dice_loss(y, yhat) - ref_dice(y, yhat)) < 1e-9);
        CHECK(std::fabs(abs_kl_loss(y, yhat) - ref_abs_kl(y, yhat)) < 1e-9);
        std::vector<double> p(8);
        for (auto& v : p) v = uniform01(rng);
        CHECK(std::fabs(g_adv_loss(p) - ref_g_adv(p)) < 1e-9);
    }
}

TEST_CASE("loss gradients match finite differences on 4x4 masks") {
    auto rng = make_rng(31, "loss-grads");
    Mask y = random_one_hot_mask(4, rng);
    Mask yhat = random_prob_mask(4, rng);

    SUBCASE("dice") {
        std::vector<Mask> ys{y}, hs{yhat};
        std::vector<Mask> grads{Mask(4, 4, 2)};
        dice_loss_batch_grad(ys, hs, &grads, 1.0);
        for (size_t i = 0; i < hs[0].data.size(); ++i) {
            auto f = [&] { return dice_loss_batch_grad(ys, hs, nullptr, 1.0); };
            const double fd = central_diff(f, &hs[0].data[i]);
            CHECK(rel_err(grads[0].data[i], fd, 1e-4) < 1e-4);
        }
    }

    SUBCASE("abs kl") {
        std::vector<Mask> ys{y}, hs{yhat};
        std::vector<Mask> grads{Mask(4, 4, 2)};
        abs_kl_batch_grad(ys, hs, &grads, 1.0);
        // gradient only flows through the foreground logit
        const size_t plane = hs[0].plane();
        for (size_t i = 0; i < plane; ++i) {
            auto f = [&] { return abs_kl_batch_grad(ys, hs, nullptr, 1.0); };
            const double fd = central_diff(f, &hs[0].data[plane + i]);
            CHECK(rel_err(grads[0].data[plane + i], fd, 1e-3) < 1e-4);
        }
    }

    SUBCASE("cross-entropy and adversarial logit gradients") {
        Eigen::MatrixXd logits(3, 4);
        auto g = make_rng(77, "logit-grads");
        for (int i = 0; i < logits.size(); ++i) logits.data()[i] = uniform(g, -2.0, 2.0);
        std::vector<int> labels{0, 2, 1};

        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(3, 4);
        weighted_ce_grad(logits, labels, {1.0, 0.5, 2.0}, true, &grad, 1.0);
        for (int i = 0; i < logits.size(); ++i) {
            auto f = [&] { return weighted_ce_grad(logits, labels, {1.0, 0.5, 2.0}, true, nullptr, 1.0); };
            const double fd = central_diff(f, &logits.data()[i]);
            CHECK(rel_err(grad.data()[i], fd, 1e-4) < 1e-4);
        }

        grad.setZero();
        adv_not_fake_grad(logits, 3, &grad, 1.0);
        for (int i = 0; i < logits.size(); ++i) {
            auto f = [&] { return adv_not_fake_grad(logits, 3, nullptr, 1.0); };
            const double fd = central_diff(f, &logits.data()[i]);
            CHECK(rel_err(grad.data()[i], fd, 1e-4) < 1e-4);
        }

        grad.setZero();
        adv_fake_grad(logits, 3, &grad, 1.0);
        for (int i = 0; i < logits.size(); ++i) {
            auto f = [&] { return adv_fake_grad(logits, 3, nullptr, 1.0); };
            const double fd = central_diff(f, &logits.data()[i]);
            CHECK(rel_err(grad.data()[i], fd, 1e-4) < 1e-4);
        }
    }
}

TEST_CASE("gradient forms agree with the probability forms") {
    auto g = make_rng(99, "agree");
    Eigen::MatrixXd logits(4, 3);
    for (int i = 0; i < logits.size(); ++i) logits.data()[i] = uniform(g, -3.0, 3.0);
    std::vector<double> p_fake;
    for (int i = 0; i < 4; ++i) p_fake.push_back(class_probabilities(logits.row(i).transpose())[2]);
    CHECK(rel_err(adv_not_fake_grad(logits, 2, nullptr, 1.0), g_adv_loss(p_fake)) < 1e-12);
    auto [r, pl, pu] = d_adv_losses(p_fake, p_fake, p_fake);
    CHECK(rel_err(adv_fake_grad(logits, 2, nullptr, 1.0), pl) < 1e-12);
    CHECK(r == doctest::Approx(adv_not_fake_grad(logits, 2, nullptr, 1.0)).epsilon(1e-12));
}

TEST_CASE("loss report totals identity and csv shape") {
    LossReport rep;
    rep.dice_supervised = 0.4;
    rep.kl_unsupervised = 1.0;
    rep.g_adv_labeled = 0.2;
    rep.g_adv_unlabeled = 0.3;
    rep.d_supervised = 0.6;
    rep.d_selfsup = 0.7;
    rep.d_adv_real = 0.1;
    rep.d_adv_pred_labeled = 0.15;
    rep.d_adv_pred_unlabeled = 0.25;
    LossWeights w;
    rep.total_g = total_G(rep.dice_supervised, rep.kl_unsupervised, rep.g_adv_labeled,
                          rep.g_adv_unlabeled, w);
    rep.total_d = total_D(rep.d_supervised, rep.d_selfsup, rep.d_adv_real, rep.d_adv_pred_labeled,
                          rep.d_adv_pred_unlabeled, w);
    CHECK(rep.all_finite());
    CHECK(LossReport::csv_fields().size() == rep.csv_values().size());
    CHECK(std::fabs(rep.total_g - (0.4 + 0.01 * 0.2 + 1.0 * (1.0 + 0.01 * 0.3))) < 1e-9);
}

}  // TEST_SUITE
