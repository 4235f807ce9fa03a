#include <doctest.h>

#include <cmath>

#include "s4mtl/annealing.hpp"
#include "s4mtl/common.hpp"

using namespace s4mtl;

TEST_SUITE("annealing") {

TEST_CASE("threshold matches the bounded closed form") {
    TsaConfig cfg;
    cfg.total_epochs = 10;
    cfg.dataset_size = 100;  // E*N = 1000
    cfg.class_count = 2;
    const double expected = 0.5 + 0.5 * (1.0 - std::exp(-0.001));
    CHECK(tsa_threshold(0, 0, cfg) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("threshold stays in [1/n, 1) and exceeds 1/n at the origin") {
    TsaConfig cfg;
    cfg.total_epochs = 5;
    cfg.dataset_size = 40;
    for (int n : {2, 3, 5}) {
        cfg.class_count = n;
        const double lo = 1.0 / n;
        CHECK(tsa_threshold(0, 0, cfg) > lo);
        for (int e : {0, 1, 3, 10}) {
            for (int s : {0, 1, 7, 50, 1000}) {
                const double eta = tsa_threshold(e, s, cfg);
                CHECK(eta >= lo);
                CHECK(eta < 1.0);
            }
        }
    }
}

TEST_CASE("threshold approaches 1 as the product grows") {
    TsaConfig cfg;
    cfg.total_epochs = 2;
    cfg.dataset_size = 10;
    cfg.class_count = 2;
    CHECK(tsa_threshold(1000, 100000, cfg) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("monotone in the step-epoch product") {
    TsaConfig cfg;
    cfg.total_epochs = 8;
    cfg.dataset_size = 50;
    cfg.class_count = 3;
    double prev = -1.0;
    for (long prod : {0L, 1L, 2L, 10L, 100L, 5000L, 100000L}) {
        // realize the product as (e, s) = (1, prod)
        const double eta = tsa_threshold(1, static_cast<int>(prod), cfg);
        CHECK(eta >= prev);
        prev = eta;
    }
}

TEST_CASE("literal parenthesization exceeds 1 in the limit") {
    TsaConfig cfg;
    cfg.total_epochs = 2;
    cfg.dataset_size = 10;
    cfg.class_count = 2;
    cfg.literal_parenthesization = true;
    const double eta = tsa_threshold(1000, 100000, cfg);
    CHECK(eta > 1.0);
    CHECK(eta == doctest::Approx(1.5).epsilon(1e-9));  // 1 - 0 + 1/n
}

TEST_CASE("weights mask only confident examples") {
    auto w = tsa_weights({0.9, 0.3}, 0.5);
    REQUIRE(w.size() == 2);
    CHECK(w[0] == 0.0);
    CHECK(w[1] == 1.0);
}

TEST_CASE("nothing masked when probabilities are zero or threshold is near 1") {
    auto all_zero = tsa_weights({0.0, 0.0, 0.0}, 0.5);
    for (double v : all_zero) CHECK(v == 1.0);
    auto high_eta = tsa_weights({0.99, 0.5, 0.7}, 0.999999);
    for (double v : high_eta) CHECK(v == 1.0);
}

TEST_CASE("invalid config is rejected") {
    TsaConfig cfg;
    cfg.total_epochs = 0;
    CHECK_THROWS_AS(tsa_threshold(0, 0, cfg), ValidationError);
    cfg.total_epochs = 1;
    cfg.class_count = 1;
    CHECK_THROWS_AS(tsa_threshold(0, 0, cfg), ValidationError);
}

}  // TEST_SUITE
