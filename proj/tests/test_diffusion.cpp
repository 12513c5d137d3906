#include <doctest.h>

#include <cmath>

#include "condiff/diffusion.hpp"
#include "condiff/numerics.hpp"

using namespace condiff;

namespace {

// mpmath, 40 digits: int_0^1 y^(-2*0.5/1.44) exp((2*0.1/1.44)(y-1)) dy
constexpr double kLogisticS1 = 2.9446848937075446;

DiffusionSpec standard_bm() {
    DiffusionSpec s;
    s.name = "standard_bm";
    s.b = Expr::literal(0.0);
    s.sigma = Expr::literal(1.0);
    s.ell = -kInf;
    s.w = 0.0;
    return s;
}

} // namespace

TEST_CASE("bm_drift scale function matches the closed form") {
    auto spec = DiffusionSpec::bm_drift(0.5);
    const double tol = 1e-10;
    auto ss = build_scale_speed(spec, tol, -10.0, 10.0);

    // s(x) = e^(2 mu (x-w)) / (2 mu) = e^x with mu = 0.5, w = 0
    CHECK(ss.s(0.0) == doctest::Approx(1.0).epsilon(1e-9));
    for (double x = -5.0; x <= 5.0; x += 0.7) {
        const double exact = std::exp(x);
        CHECK_MESSAGE(std::fabs(ss.s(x) - exact) <= 1e-8 * exact, "x = ", x);
    }
}

TEST_CASE("scale normalization and reference point identities") {
    for (auto spec : {DiffusionSpec::bm_drift(0.5), DiffusionSpec::gbm(0.1, 1.0),
                      DiffusionSpec::logistic(0.5, 0.1, 1.2)}) {
        auto ss = build_scale_speed(spec, 1e-9);
        CHECK(ss.B(spec.w) == 0.0);
        CHECK(ss.s_prime(spec.w) == 1.0);
        CHECK(ss.s(spec.w) > 0.0);
    }
}

TEST_CASE("standard BM violates the transience assumption") {
    CHECK_THROWS_AS(build_scale_speed(standard_bm(), 1e-8), AssumptionViolatedError);
}

TEST_CASE("gbm scale function closed form") {
    // s(x) = x^(1-q)/(1-q), q = 2 mu / sigma^2
    auto spec = DiffusionSpec::gbm(0.1, 1.0);
    auto ss = build_scale_speed(spec, 1e-10);
    const double q = 0.2;
    for (double x : {0.01, 0.25, 1.0, 3.0, 20.0}) {
        const double exact = std::pow(x, 1.0 - q) / (1.0 - q);
        CHECK_MESSAGE(std::fabs(ss.s(x) - exact) <= 1e-8 * exact, "x = ", x);
    }
}

TEST_CASE("logistic scale value at the reference point") {
    auto spec = DiffusionSpec::logistic(0.5, 0.1, 1.2);
    auto ss = build_scale_speed(spec, 1e-10);
    CHECK(ss.s(1.0) == doctest::Approx(kLogisticS1).epsilon(1e-8));
}

TEST_CASE("scale-speed product identity on the cache grid") {
    for (auto spec : {DiffusionSpec::bm_drift(0.5), DiffusionSpec::gbm(0.1, 1.0),
                      DiffusionSpec::logistic(0.5, 0.1, 1.2)}) {
        auto ss = build_scale_speed(spec, 1e-9);
        int checked = 0;
        for (const auto& p : ss.cache_grid()) {
            if (checked++ % 7 != 0) {
                continue; // sampling the grid keeps the test fast
            }
            const double sp = ss.s_prime(p.x);
            if (!std::isfinite(sp) || sp == 0.0) {
                continue; // outside double range; identity holds in logs
            }
            const double product = sp * ss.m_prime(p.x) * spec.vol2(p.x);
            CHECK_MESSAGE(std::fabs(product - 2.0) <= 1e-12 * 2.0, "x = ", p.x);
        }
        CHECK(checked > 10);
    }
}

TEST_CASE("cache grid is strictly increasing in s") {
    auto ss = build_scale_speed(DiffusionSpec::logistic(0.5, 0.1, 1.2), 1e-9);
    const auto& g = ss.cache_grid();
    for (std::size_t i = 1; i < g.size(); ++i) {
        CHECK(g[i].log_s > g[i - 1].log_s);
        CHECK(g[i].x > g[i - 1].x);
    }
}

TEST_CASE("hitting probabilities") {
    auto spec = DiffusionSpec::bm_drift(0.5);
    auto ss = build_scale_speed(spec, 1e-10);

    CHECK(hitting_probability(ss, 1.3, 1.3) == 1.0);
    CHECK(hitting_probability(ss, 2.0, 1.0) == 1.0);
    CHECK(hitting_probability(ss, 0.0, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-8));

    // monotone nondecreasing in y, and sinks to 0 toward ell
    double prev = 0.0;
    for (double y = -8.0; y <= 1.0; y += 0.5) {
        const double p = hitting_probability(ss, y, 1.0);
        CHECK(p >= prev);
        CHECK(p <= 1.0);
        prev = p;
    }
    CHECK(hitting_probability(ss, -30.0, 1.0) < 1e-12);

    CHECK_THROWS_AS(hitting_probability(ss, kInf, 1.0), OutOfDomainError);

    auto ssl = build_scale_speed(DiffusionSpec::logistic(0.5, 0.1, 1.2), 1e-9);
    CHECK_THROWS_AS(hitting_probability(ssl, -1.0, 1.0), OutOfDomainError);
}

TEST_CASE("check_assumptions on the presets") {
    auto bm = check_assumptions(DiffusionSpec::bm_drift(0.5), 1e-8);
    CHECK(bm.s_ell_finite);
    CHECK(bm.s_infinity_infinite);
    CHECK(bm.pass());

    // stochastic growth rate mu - sigma^2/2 decides the gbm verdict
    auto down = check_assumptions(DiffusionSpec::gbm(0.1, 1.0), 1e-8);
    CHECK(down.pass());

    auto up = check_assumptions(DiffusionSpec::gbm(1.0, 1.0), 1e-8);
    CHECK_FALSE(up.pass());
    CHECK_FALSE(up.s_ell_finite);

    auto logi = check_assumptions(DiffusionSpec::logistic(0.5, 0.1, 1.2), 1e-8);
    CHECK(logi.pass());

    auto flat = check_assumptions(standard_bm(), 1e-8);
    CHECK_FALSE(flat.pass());
    CHECK(flat.summary().find("overall=fail") != std::string::npos);
}

TEST_CASE("zero-hit classification for driftless SDEs") {
    CHECK(driftless_zero_hit_test(Expr::literal(1.0), 1.0, 1e-8) == ZeroHitVerdict::no_hit);
    CHECK(driftless_zero_hit_test(parse_expr("x^-0.75"), 1.0, 1e-8) == ZeroHitVerdict::hits);
    CHECK(driftless_zero_hit_test(parse_expr("x^-0.5"), 1.0, 1e-8) == ZeroHitVerdict::hits);
    CHECK_THROWS_AS(driftless_zero_hit_test(Expr::literal(1.0), -1.0, 1e-8), ConfigInvalidError);
}

TEST_CASE("generator application") {
    auto spec = DiffusionSpec::bm_drift(0.5);
    CHECK(apply_generator(spec, [](double) { return 1.0; }, 0.3, 1e-4) == 0.0);
    CHECK(apply_generator(spec, [](double x) { return x; }, 0.3, 1e-4) ==
          doctest::Approx(-0.5).epsilon(1e-9));

    // G s = 0: the scale function is harmonic for the generator
    auto logi = DiffusionSpec::logistic(0.5, 0.1, 1.2);
    auto ss = build_scale_speed(logi, 1e-10);
    for (double x : {0.5, 2.0, 8.0}) {
        const double gs = apply_generator(logi, [&](double y) { return ss.s(y); }, x, 1e-4);
        const double scale = std::fabs(logi.drift(x)) * ss.s_prime(x) + 1.0;
        CHECK_MESSAGE(std::fabs(gs) <= 1e-5 * scale, "x = ", x, " Gs = ", gs);
    }
}

TEST_CASE("scale consistency against from-scratch quadrature") {
    auto spec = DiffusionSpec::logistic(0.5, 0.1, 1.2);
    auto ss = build_scale_speed(spec, 1e-10);
    auto beta = [&spec](double y) { return 2.0 * spec.drift(y) / spec.vol2(y); };
    for (double x : {0.4, 1.7, 6.0}) {
        // B from scratch
        const double B_direct = (x >= spec.w)
                                    ? adaptive_quadrature(beta, spec.w, x, 1e-12).value
                                    : -adaptive_quadrature(beta, x, spec.w, 1e-12).value;
        CHECK(std::fabs(ss.B(x) - B_direct) <= 1e-10 * std::max(1.0, std::fabs(B_direct)));
        // s from scratch via the improper integral of exp(-B)
        auto sprime = [&](double y) {
            const double By = (y >= spec.w) ? adaptive_quadrature(beta, spec.w, y, 1e-12).value
                                            : -adaptive_quadrature(beta, y, spec.w, 1e-12).value;
            return std::exp(-By);
        };
        const double s_direct = improper_lower_integral(sprime, 0.0, x, 1e-10).value;
        CHECK(std::fabs(ss.s(x) - s_direct) <= 1e-8 * s_direct);
    }
}

TEST_CASE("reference point invariance of scale ratios") {
    auto a = DiffusionSpec::logistic(0.5, 0.1, 1.2);
    auto b = a;
    b.w = 2.5;
    auto ssa = build_scale_speed(a, 1e-11);
    auto ssb = build_scale_speed(b, 1e-11);
    for (double y : {0.3, 1.0, 4.0}) {
        const double ra = hitting_probability(ssa, y, 5.0);
        const double rb = hitting_probability(ssb, y, 5.0);
        CHECK(std::fabs(ra - rb) <= 1e-10 * ra);
    }
}

TEST_CASE("evaluation beyond the cache grid agrees with an extended grid") {
    auto spec = DiffusionSpec::logistic(0.5, 0.1, 1.2);
    auto narrow = build_scale_speed(spec, 1e-10, 1e-6, 50.0);
    auto wide = build_scale_speed(spec, 1e-10, 1e-6, 300.0);
    CHECK(narrow.grid_max() < 200.0);
    CHECK(wide.grid_max() >= 300.0);
    const double r1 = narrow.s_over_s_prime(200.0);
    const double r2 = wide.s_over_s_prime(200.0);
    CHECK(r1 > 0.0);
    CHECK(std::fabs(r1 - r2) <= 1e-7 * r2);
}

TEST_CASE("model config files") {
    const std::string text = "# demo\nname=demo\npreset=logistic\nmu=0.5\nkappa=0.1\nsigma0=1.2\n";
    auto spec = DiffusionSpec::from_config(text);
    CHECK(spec.preset == PresetKind::logistic);
    CHECK(spec.name == "demo");
    CHECK(spec.w == 1.0);
    CHECK(spec.drift(1.0) == doctest::Approx(0.4));

    // canonical dump round-trips
    auto back = DiffusionSpec::from_config(spec.to_config());
    CHECK(back.preset == PresetKind::logistic);
    CHECK(back.mu == spec.mu);
    CHECK(back.kappa == spec.kappa);
    CHECK(back.name == spec.name);

    auto custom = DiffusionSpec::from_config("b=-0.5\nsigma=1\nell=-inf\nw=0\n");
    CHECK(custom.preset == PresetKind::custom);
    CHECK(custom.ell == -kInf);
    CHECK(custom.drift(3.0) == doctest::Approx(-0.5));
    auto custom2 = DiffusionSpec::from_config(custom.to_config());
    CHECK(custom2.drift(3.0) == doctest::Approx(-0.5));

    CHECK_THROWS_AS(DiffusionSpec::from_config("preset=heat\nmu=1\n"), ConfigInvalidError);
    CHECK_THROWS_AS(DiffusionSpec::from_config("nonsense=1\n"), ConfigInvalidError);
    CHECK_THROWS_AS(DiffusionSpec::from_config("b=x\n"), ConfigInvalidError);
    CHECK_THROWS_AS(DiffusionSpec::from_config("preset=gbm\nmu=0.1\nsigma0=1\nb=x\n"),
                    ConfigInvalidError);
    CHECK_THROWS_AS(DiffusionSpec::from_config("w=1\nw=2\n"), ConfigInvalidError);
    CHECK_THROWS_AS(DiffusionSpec::from_config("b=x\nsigma=1\nell=2\nw=1\n"), ConfigInvalidError);
}

TEST_CASE("preset parameter validation") {
    CHECK_THROWS_AS(DiffusionSpec::bm_drift(-1.0), ConfigInvalidError);
    CHECK_THROWS_AS(DiffusionSpec::gbm(0.1, 0.0), ConfigInvalidError);
    CHECK_THROWS_AS(DiffusionSpec::logistic(0.5, 0.0, 1.0), ConfigInvalidError);
}
