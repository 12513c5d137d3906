#include "condiff/conditioning.hpp"

#include <cmath>

namespace condiff {

double ConditionedDiffusion::drift(double x) const {
    return conditioned_drift(*scale_, base_, x);
}

double conditioned_drift(const ScaleSpeed& ss, const DiffusionSpec& spec, double x) {
    if (!(x > spec.ell) || !std::isfinite(x)) {
        throw OutOfDomainError("conditioned_drift: x outside (ell, inf)");
    }
    const double log_ratio = -(ss.B(x) + ss.log_s(x)); // log(s'/s)
    const double correction = spec.vol2(x) * std::exp(log_ratio);
    if (!std::isfinite(correction)) {
        throw NonFiniteError("conditioned drift correction overflowed at x = " + std::to_string(x));
    }
    return spec.drift(x) + correction;
}

ConditionedDiffusion condition_to_infinity(const DiffusionSpec& spec, double tol, double x_lo_hint,
                                           double x_hi_hint) {
    AssumptionReport rep = check_assumptions(spec, tol);
    if (!rep.pass()) {
        throw AssumptionViolatedError("conditioning requires transience to ell:\n" + rep.summary());
    }
    auto ss = std::make_shared<ScaleSpeed>(build_scale_speed(spec, tol, x_lo_hint, x_hi_hint));
    return ConditionedDiffusion(spec, std::move(ss));
}

HTransformChars h_transform_chars(const ScaleSpeed& ss, const RealFn& h, double x) {
    const double hx = h(x);
    if (!(hx > 0.0) || !std::isfinite(hx)) {
        throw NonFiniteError("h-transform requires h(x) > 0");
    }
    HTransformChars out;
    out.s_h_prime = ss.s_prime(x) / (hx * hx);
    out.m_h_prime = ss.m_prime(x) * (hx * hx);
    return out;
}

HTransformChars h_transform_chars(const ScaleSpeed& ss, const Expr& h, double x) {
    return h_transform_chars(ss, [&h](double y) { return h.eval(y); }, x);
}

double q_weight(const ScaleSpeed& ss, double x0, double xt) {
    const double ell = ss.spec().ell;
    if (!(x0 > ell) || !(xt > ell) || !std::isfinite(x0) || !std::isfinite(xt)) {
        throw OutOfDomainError("q_weight requires x0, xt in (ell, inf)");
    }
    return std::exp(ss.log_s(xt) - ss.log_s(x0));
}

} // namespace condiff
