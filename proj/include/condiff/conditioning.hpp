#pragma once

#include <memory>

#include "condiff/diffusion.hpp"

namespace condiff {

// The diffusion conditioned to converge to +inf: volatility unchanged,
// drift lifted by sigma^2 s'/s. Immutable and cheap to share across
// simulation workers.
class ConditionedDiffusion {
public:
    ConditionedDiffusion(DiffusionSpec base, std::shared_ptr<const ScaleSpeed> scale)
        : base_(std::move(base)), scale_(std::move(scale)) {}

    const DiffusionSpec& base() const { return base_; }
    const ScaleSpeed& scale() const { return *scale_; }
    std::shared_ptr<const ScaleSpeed> scale_ptr() const { return scale_; }

    double drift(double x) const;
    double vol(double x) const { return base_.vol(x); }

    RealFn drift_fn() const {
        auto scale = scale_;
        auto base = base_;
        return [scale, base](double x) {
            return base.drift(x) + base.vol2(x) * std::exp(-(scale->B(x) + scale->log_s(x)));
        };
    }
    RealFn vol_fn() const {
        auto base = base_;
        return [base](double x) { return base.vol(x); };
    }

private:
    DiffusionSpec base_;
    std::shared_ptr<const ScaleSpeed> scale_;
};

// b(x) + sigma^2(x) s'(x)/s(x), with the ratio formed in log-domain as
// exp(-(B + log s)) so it stays finite where s' and s individually leave
// double range.
double conditioned_drift(const ScaleSpeed& ss, const DiffusionSpec& spec, double x);

// Requires check_assumptions to pass; throws AssumptionViolatedError
// otherwise. Grid hints as in build_scale_speed.
ConditionedDiffusion condition_to_infinity(
    const DiffusionSpec& spec, double tol,
    double x_lo_hint = std::numeric_limits<double>::quiet_NaN(),
    double x_hi_hint = std::numeric_limits<double>::quiet_NaN());

// Doob transform characteristics for a positive weight function h:
// scale density h^-2 s', speed density h^2 m'. The product s_h' m_h' is
// h-invariant. Excessiveness of h is assumed, not verified; there is no
// general decision procedure for it.
struct HTransformChars {
    double s_h_prime = 0.0;
    double m_h_prime = 0.0;
};

HTransformChars h_transform_chars(const ScaleSpeed& ss, const RealFn& h, double x);
HTransformChars h_transform_chars(const ScaleSpeed& ss, const Expr& h, double x);

// Importance weight s(xt)/s(x0) that turns base-process samples into
// conditioned-semigroup estimates.
double q_weight(const ScaleSpeed& ss, double x0, double xt);

} // namespace condiff
