#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "smile/error.hpp"
#include "smile/surrogate.hpp"

using namespace smile;
using Catch::Approx;
using V = std::vector<double>;

namespace {

std::vector<Mask> random_design(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.5);
    std::vector<Mask> x(rows, Mask(cols));
    for (auto& r : x)
        for (auto& v : r) v = coin(rng);
    return x;
}

V linear_response(const std::vector<Mask>& x, const V& beta, double c) {
    V y;
    for (const auto& r : x) {
        double s = c;
        for (std::size_t j = 0; j < r.size(); ++j) s += beta[j] * r[j];
        y.push_back(s);
    }
    return y;
}

}  // namespace

TEST_CASE("wls: exact interpolation") {
    const std::vector<Mask> x{{1}, {0}};
    const auto fit = fit_wls(x, V{1, 0}, V{1, 1});
    CHECK(fit.coefficients[0] == Approx(1.0).epsilon(1e-12));
    CHECK(fit.intercept == Approx(0.0).margin(1e-12));
    CHECK(fit.method == SurrogateMethod::kWeightedLeastSquares);
    CHECK(fit.weighted_loss == Approx(0.0).margin(1e-20));
}

TEST_CASE("wls: constant response") {
    std::mt19937_64 rng(1);
    const auto x = random_design(12, 4, rng);
    const auto fit = fit_wls(x, V(12, 2.5), V(12, 0.7));
    for (double b : fit.coefficients) CHECK(b == Approx(0.0).margin(1e-10));
    CHECK(fit.intercept == Approx(2.5).epsilon(1e-10));
}

TEST_CASE("wls: planted linear model on a 6x3 design") {
    // Full-rank 6x3 binary design.
    const std::vector<Mask> x{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {0, 1, 1}, {1, 1, 1}};
    const V y = linear_response(x, {2, 0, -1}, 0.5);
    const auto fit = fit_wls(x, y, V(6, 1.0));
    CHECK(fit.coefficients[0] == Approx(2.0).margin(1e-8));
    CHECK(fit.coefficients[1] == Approx(0.0).margin(1e-8));
    CHECK(fit.coefficients[2] == Approx(-1.0).margin(1e-8));
    CHECK(fit.intercept == Approx(0.5).margin(1e-8));
    const auto ref = oracle::wls_normal_equations(x, y, V(6, 1.0));
    REQUIRE(ref);
    CHECK(fit.intercept == Approx(static_cast<double>((*ref)[0])).margin(1e-12));
}

TEST_CASE("wls matches the long-double normal-equation oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> cols(1, 8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g;
    int checked = 0;
    while (checked < 150) {
        const std::size_t t = cols(rng);
        const std::size_t n = std::uniform_int_distribution<std::size_t>(t + 2, 64)(rng);
        const auto x = random_design(n, t, rng);
        V y(n), w(n);
        for (auto& v : y) v = g(rng);
        for (auto& v : w) v = u(rng) < 0.1 ? 0.0 : u(rng);
        const auto ref = oracle::wls_normal_equations(x, y, w);
        if (!ref) continue;
        const auto fit = fit_wls(x, y, w);
        if (fit.ridge_lambda > 0.0 || !fit.degenerate_columns.empty()) continue;
        double scale = std::fabs(static_cast<double>((*ref)[0])), err = std::fabs(fit.intercept - (*ref)[0]);
        for (std::size_t j = 0; j < t; ++j) {
            scale = std::max(scale, std::fabs(static_cast<double>((*ref)[j + 1])));
            err = std::max(err, static_cast<double>(std::fabs(fit.coefficients[j] - (*ref)[j + 1])));
        }
        CHECK(err <= 1e-8 * scale);
        ++checked;
    }
}

TEST_CASE("wls never does worse than the zero model") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        const auto x = random_design(20, 5, rng);
        V y(20), w(20);
        for (auto& v : y) v = g(rng);
        for (auto& v : w) v = u(rng);
        const auto fit = fit_wls(x, y, w);
        const V zero(5, 0.0);
        CHECK(fit.weighted_loss <= weighted_square_loss(x, y, w, zero, 0.0) + 1e-15);
        CHECK(fit.weighted_loss == Approx(weighted_square_loss(x, y, w, fit.coefficients, fit.intercept)));
        CHECK(fit.weighted_loss >= 0.0);
    }
}

TEST_CASE("wls: duplicating a row equals doubling its weight") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    auto x = random_design(15, 4, rng);
    V y(15);
    for (auto& v : y) v = g(rng);
    V w(15, 1.0);
    w[3] = 2.0;
    const auto doubled = fit_wls(x, y, w);
    x.push_back(x[3]);
    y.push_back(y[3]);
    const auto dup = fit_wls(x, y, V(16, 1.0));
    for (std::size_t j = 0; j < 4; ++j) CHECK(dup.coefficients[j] == Approx(doubled.coefficients[j]).margin(1e-10));
    CHECK(dup.intercept == Approx(doubled.intercept).margin(1e-10));
}

TEST_CASE("wls: scaling responses scales coefficients, ranking unchanged") {
    std::mt19937_64 rng(23);
    const auto x = random_design(30, 6, rng);
    const V beta{0.3, -2.0, 1.1, 0.0, 0.7, -0.05};
    V y = linear_response(x, beta, 0.2);
    std::normal_distribution<double> g(0.0, 0.01);
    for (auto& v : y) v += g(rng);
    const auto a = fit_wls(x, y, V(30, 1.0));
    V y3 = y;
    for (auto& v : y3) v *= 3.0;
    const auto b = fit_wls(x, y3, V(30, 1.0));
    for (std::size_t j = 0; j < 6; ++j) CHECK(b.coefficients[j] == Approx(3.0 * a.coefficients[j]).margin(1e-12));
}

TEST_CASE("wls recovers the ranking of distinct planted effects") {
    std::mt19937_64 rng(29);
    const V beta{0.5, -3.0, 1.5, 0.1, 2.2};
    for (int t = 0; t < 20; ++t) {
        const auto x = random_design(25, 5, rng);
        const auto fit = fit_wls(x, linear_response(x, beta, 1.0), V(25, 1.0));
        if (fit.ridge_lambda > 0.0) continue;
        std::vector<std::size_t> want{0, 1, 2, 3, 4}, got = want;
        std::sort(want.begin(), want.end(), [&](auto i, auto j) { return std::fabs(beta[i]) > std::fabs(beta[j]); });
        std::sort(got.begin(), got.end(),
                  [&](auto i, auto j) { return std::fabs(fit.coefficients[i]) > std::fabs(fit.coefficients[j]); });
        CHECK(got == want);
    }
}

TEST_CASE("wls: constant columns are flagged with zero coefficients") {
    const std::vector<Mask> x{{1, 1, 0}, {1, 0, 1}, {1, 1, 1}, {1, 0, 0}};
    const auto fit = fit_wls(x, V{3, 1, 4, 0.5}, V(4, 1.0));
    CHECK(fit.degenerate_columns == std::vector<std::size_t>{0});
    CHECK(fit.coefficients[0] == 0.0);
}

TEST_CASE("wls: singular design falls back to ridge") {
    // Columns 0 and 1 are identical.
    const std::vector<Mask> x{{1, 1, 0}, {0, 0, 1}, {1, 1, 1}, {0, 0, 0}, {1, 1, 0}};
    const auto fit = fit_wls(x, V{2, 1, 3, 0, 2}, V(5, 1.0));
    CHECK(fit.ridge_lambda == 1e-8);
    CHECK(fit.coefficients[0] == Approx(fit.coefficients[1]).margin(1e-9));
    CHECK(fit.coefficients[0] + fit.coefficients[1] == Approx(2.0).margin(1e-6));
}

TEST_CASE("wls error paths") {
    const std::vector<Mask> x{{1}, {0}};
    CHECK_THROWS_AS(fit_wls(x, V{1, 0}, V{0, 0}), Error);
    try {
        fit_wls(x, V{1, 0}, V{0, 0});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kAllZeroWeights);
    }
    CHECK_THROWS_AS(fit_wls(x, V{1}, V{1, 1}), Error);
    const std::vector<Mask> ragged{{1, 0}, {1}};
    CHECK_THROWS_AS(fit_wls(ragged, V{1, 0}, V{1, 1}), Error);
}

TEST_CASE("bayesian ridge agrees with wls on well-determined data") {
    std::mt19937_64 rng(31);
    const auto x = random_design(200, 5, rng);
    V y = linear_response(x, {1.0, -0.5, 0.25, 2.0, 0.0}, 0.3);
    std::normal_distribution<double> g(0.0, 1e-4);
    for (auto& v : y) v += g(rng);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    V w(200);
    for (auto& v : w) v = u(rng);
    const auto a = fit_wls(x, y, w);
    const auto b = fit_bayesian_ridge(x, y, w);
    CHECK(b.method == SurrogateMethod::kBayesianRidge);
    for (std::size_t j = 0; j < 5; ++j) CHECK(b.coefficients[j] == Approx(a.coefficients[j]).margin(1e-3));
    CHECK(b.iterations >= 1);
    CHECK(b.iterations <= 300);
    CHECK(b.alpha_noise > 0.0);
    CHECK(b.lambda_prior > 0.0);
}

TEST_CASE("bayesian ridge: zero response and determinism") {
    std::mt19937_64 rng(37);
    const auto x = random_design(20, 4, rng);
    const auto zero = fit_bayesian_ridge(x, V(20, 0.0), V(20, 1.0));
    for (double b : zero.coefficients) CHECK(b == 0.0);
    V y(20);
    std::normal_distribution<double> g;
    for (auto& v : y) v = g(rng);
    const auto a = fit_bayesian_ridge(x, y, V(20, 0.5));
    const auto b = fit_bayesian_ridge(x, y, V(20, 0.5));
    CHECK(a.coefficients == b.coefficients);
    CHECK(a.intercept == b.intercept);
    CHECK_THROWS_AS(fit_bayesian_ridge(x, y, V(20, 0.0)), Error);
}

TEST_CASE("bayesian ridge shrinks noisy coefficients") {
    std::mt19937_64 rng(41);
    const auto x = random_design(12, 8, rng);
    V y(12);
    std::normal_distribution<double> g;
    for (auto& v : y) v = g(rng);
    const auto a = fit_wls(x, y, V(12, 1.0));
    const auto b = fit_bayesian_ridge(x, y, V(12, 1.0));
    double na = 0, nb = 0;
    for (std::size_t j = 0; j < 8; ++j) na += a.coefficients[j] * a.coefficients[j], nb += b.coefficients[j] * b.coefficients[j];
    CHECK(nb < na);
}

TEST_CASE("fit_surrogate dispatch and predict") {
    const std::vector<Mask> x{{1, 0}, {0, 1}, {1, 1}, {0, 0}};
    const V y{1, 2, 3, 0};
    const auto f = fit_surrogate(SurrogateMethod::kWeightedLeastSquares, x, y, V(4, 1.0));
    CHECK(f.predict(Mask{1, 1}) == Approx(3.0));
    CHECK(fit_surrogate(SurrogateMethod::kBayesianRidge, x, y, V(4, 1.0)).method == SurrogateMethod::kBayesianRidge);
    CHECK(parse_surrogate_method("bayes") == SurrogateMethod::kBayesianRidge);
    CHECK(parse_surrogate_method(to_string(SurrogateMethod::kWeightedLeastSquares)) ==
          SurrogateMethod::kWeightedLeastSquares);
}
