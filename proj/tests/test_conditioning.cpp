#include <doctest.h>

#include <cmath>
#include <memory>

#include "condiff/conditioning.hpp"
#include "condiff/numerics.hpp"

using namespace condiff;

namespace {

// mpmath, 40 digits, for logistic(0.5, 0.1, 1.2):
//   btilde(x) = mu x - kappa x^2 + sigma^2 x^2 s'(x)/s(x)
constexpr double kBtilde1 = 0.88901666968751584;
constexpr double kBtilde2 = 1.6852857637420838;
constexpr double kBtilde40 = 122.11317539278043;
constexpr double kBtilde1em3 = 0.00093994681067053830;

} // namespace

TEST_CASE("conditioning flips the BM drift sign") {
    auto spec = DiffusionSpec::bm_drift(0.5);
    auto cd = condition_to_infinity(spec, 1e-8);
    for (double x : {-3.0, 0.0, 7.0}) {
        CHECK(std::fabs(cd.drift(x) - 0.5) < 1e-6);
    }
    CHECK(cd.vol(2.0) == 1.0);
}

TEST_CASE("conditioned drift exceeds the base drift") {
    for (auto spec : {DiffusionSpec::bm_drift(0.5), DiffusionSpec::gbm(0.1, 1.0),
                      DiffusionSpec::logistic(0.5, 0.1, 1.2)}) {
        auto cd = condition_to_infinity(spec, 1e-8);
        const double lo = std::isfinite(spec.ell) ? spec.ell + 0.05 : -4.0;
        for (double x = lo; x < 10.0; x += 0.83) {
            CHECK_MESSAGE(cd.drift(x) > spec.drift(x), spec.name, " at x = ", x);
        }
    }
}

TEST_CASE("logistic conditioned drift against the quadrature oracle") {
    auto spec = DiffusionSpec::logistic(0.5, 0.1, 1.2);
    auto ss = build_scale_speed(spec, 1e-11);
    CHECK(conditioned_drift(ss, spec, 1.0) == doctest::Approx(kBtilde1).epsilon(1e-8));
    CHECK(conditioned_drift(ss, spec, 2.0) == doctest::Approx(kBtilde2).epsilon(1e-8));
    CHECK(conditioned_drift(ss, spec, 40.0) == doctest::Approx(kBtilde40).epsilon(1e-7));
    CHECK(conditioned_drift(ss, spec, 1e-3) == doctest::Approx(kBtilde1em3).epsilon(1e-7));
}

TEST_CASE("gbm conditioned drift is (sigma^2 - mu) x") {
    const double mu = 0.1, s0 = 1.0;
    auto spec = DiffusionSpec::gbm(mu, s0);
    auto cd = condition_to_infinity(spec, 1e-9);
    for (double x : {0.05, 0.5, 1.0, 4.0, 25.0}) {
        CHECK(cd.drift(x) / x == doctest::Approx(s0 * s0 - mu).epsilon(1e-7));
    }
}

TEST_CASE("conditioning requires the assumptions") {
    CHECK_THROWS_AS(condition_to_infinity(DiffusionSpec::gbm(1.0, 1.0), 1e-8),
                    AssumptionViolatedError);
}

TEST_CASE("drift-formula consistency recomputed from scratch") {
    auto spec = DiffusionSpec::logistic(0.5, 0.1, 1.2);
    auto ss = build_scale_speed(spec, 1e-11);
    auto beta = [&spec](double y) { return 2.0 * spec.drift(y) / spec.vol2(y); };
    for (double x : {0.6, 1.9, 7.3}) {
        const double B_direct = (x >= spec.w)
                                    ? adaptive_quadrature(beta, spec.w, x, 1e-13).value
                                    : -adaptive_quadrature(beta, x, spec.w, 1e-13).value;
        auto sprime = [&](double y) {
            const double By = (y >= spec.w) ? adaptive_quadrature(beta, spec.w, y, 1e-13).value
                                            : -adaptive_quadrature(beta, y, spec.w, 1e-13).value;
            return std::exp(-By);
        };
        const double s_direct = improper_lower_integral(sprime, 0.0, x, 1e-11).value;
        const double direct = spec.drift(x) + spec.vol2(x) * std::exp(-B_direct) / s_direct;
        const double stored = conditioned_drift(ss, spec, x);
        CHECK_MESSAGE(std::fabs(stored - direct) <= 1e-8 * std::max(1.0, std::fabs(direct)),
                      "x = ", x);
    }
}

TEST_CASE("reference-point invariance of the conditioned drift") {
    auto a = DiffusionSpec::logistic(0.5, 0.1, 1.2);
    auto b = a;
    b.w = 3.0;
    auto ssa = build_scale_speed(a, 1e-11);
    auto ssb = build_scale_speed(b, 1e-11);
    for (double x : {0.4, 1.0, 6.0}) {
        const double da = conditioned_drift(ssa, a, x);
        const double db = conditioned_drift(ssb, b, x);
        CHECK(std::fabs(da - db) <= 1e-10 * std::max(1.0, std::fabs(da)));
    }
}

TEST_CASE("transformed generator annihilates 1/s") {
    // 1/s is the scale-type harmonic function of the conditioned process.
    auto spec = DiffusionSpec::logistic(0.5, 0.1, 1.2);
    auto cd = condition_to_infinity(spec, 1e-11);
    const auto& ss = cd.scale();
    for (double x : {0.8, 2.0, 5.5}) {
        auto inv_s = [&](double y) { return 1.0 / ss.s(y); };
        const Derivs d = finite_difference_derivs(inv_s, x, 1e-4);
        const double g = 0.5 * spec.vol2(x) * d.second + cd.drift(x) * d.first;
        const double scale = std::fabs(cd.drift(x) * d.first) + std::fabs(0.5 * spec.vol2(x) * d.second);
        CHECK_MESSAGE(std::fabs(g) <= 1e-4 * std::max(scale, 1e-8), "x = ", x, " G(1/s) = ", g);
    }
}

TEST_CASE("h-transform characteristics") {
    auto spec = DiffusionSpec::logistic(0.5, 0.1, 1.2);
    auto ss = build_scale_speed(spec, 1e-10);

    SUBCASE("identity transform") {
        for (double x : {0.5, 1.0, 3.0}) {
            auto hc = h_transform_chars(ss, Expr::literal(1.0), x);
            CHECK(hc.s_h_prime == ss.s_prime(x));
            CHECK(hc.m_h_prime == ss.m_prime(x));
        }
    }

    SUBCASE("h = s reproduces the conditioned drift") {
        // s_h' = s'/s^2 = -d/dx (1/s); the drift implied by the transformed
        // scale density matches b + sigma^2 s'/s.
        for (double x : {0.7, 1.5, 4.0}) {
            auto hc = h_transform_chars(ss, [&ss](double y) { return ss.s(y); }, x);
            CHECK(hc.s_h_prime == doctest::Approx(ss.s_prime(x) / (ss.s(x) * ss.s(x))));
            // implied drift: -(1/2) sigma^2 d/dx log s_h'(x)
            auto log_shp = [&](double y) {
                return -ss.B(y) - 2.0 * ss.log_s(y);
            };
            const Derivs d = finite_difference_derivs(log_shp, x, 1e-5);
            const double implied = -0.5 * spec.vol2(x) * d.first;
            CHECK(implied == doctest::Approx(conditioned_drift(ss, spec, x)).epsilon(1e-5));
        }
    }

    SUBCASE("product invariance") {
        for (double x : {0.4, 1.1, 2.9, 7.7}) {
            const double base = ss.s_prime(x) * ss.m_prime(x);
            for (const Expr& h : {Expr::literal(1.0), parse_expr("x + 0.5"), parse_expr("exp(x/10)")}) {
                auto hc = h_transform_chars(ss, h, x);
                CHECK(std::fabs(hc.s_h_prime * hc.m_h_prime - base) <= 1e-12 * base);
            }
        }
    }

    SUBCASE("nonpositive h is rejected") {
        CHECK_THROWS_AS(h_transform_chars(ss, Expr::literal(0.0), 1.0), NonFiniteError);
        CHECK_THROWS_AS(h_transform_chars(ss, parse_expr("x - 10"), 1.0), NonFiniteError);
    }
}

TEST_CASE("q_weight") {
    auto spec = DiffusionSpec::bm_drift(0.5);
    auto ss = build_scale_speed(spec, 1e-10);
    CHECK(q_weight(ss, 0.7, 0.7) == 1.0);
    CHECK(q_weight(ss, 0.0, 1.0) == doctest::Approx(std::exp(1.0)).epsilon(1e-8));
    // tends to 0 toward ell under the s(ell+) = 0 normalization
    CHECK(q_weight(ss, 0.0, -35.0) < 1e-14);
    CHECK_THROWS_AS(q_weight(ss, 0.0, -kInf), OutOfDomainError);
}
