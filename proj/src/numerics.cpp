#include "condiff/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

namespace condiff {

namespace {

// Kronrod-15 abscissae (positive half) and weights, with the embedded
// Gauss-7 weights on the odd-index nodes. Standard QUADPACK QK15 constants.
constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a, b;
    double value;
    double error;
    bool operator<(const Panel& o) const { return error < o.error; }
};

// One G7/K15 evaluation over [a,b]. `evals` is the shared budget counter.
Panel eval_panel(const RealFn& f, double a, double b, long& evals) {
    const double c = 0.5 * (a + b);
    const double hl = 0.5 * (b - a);
    auto safe_eval = [&](double x) {
        ++evals;
        const double v = f(x);
        if (!std::isfinite(v)) {
            throw NonFiniteError("integrand returned non-finite value at x = " + std::to_string(x));
        }
        return v;
    };

    const double fc = safe_eval(c);
    double resk = kWgk[7] * fc;
    double resg = kWg[3] * fc;
    double resabs = kWgk[7] * std::fabs(fc);
    double fv[15];
    fv[7] = fc;
    for (int j = 0; j < 7; ++j) {
        const double dx = hl * kXgk[j];
        const double f1 = safe_eval(c - dx);
        const double f2 = safe_eval(c + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        resk += kWgk[j] * (f1 + f2);
        resabs += kWgk[j] * (std::fabs(f1) + std::fabs(f2));
        if (j % 2 == 1) {
            resg += kWg[j / 2] * (f1 + f2);
        }
    }
    const double mean = resk * 0.5;
    double resasc = kWgk[7] * std::fabs(fc - mean);
    for (int j = 0; j < 7; ++j) {
        resasc += kWgk[j] * (std::fabs(fv[j] - mean) + std::fabs(fv[14 - j] - mean));
    }
    resasc *= std::fabs(hl);
    resabs *= std::fabs(hl);

    double err = std::fabs((resk - resg) * hl);
    if (resasc != 0.0 && err != 0.0) {
        err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    }
    const double eps_floor = 50.0 * std::numeric_limits<double>::epsilon() * resabs;
    err = std::max(err, eps_floor);
    return Panel{a, b, resk * hl, err};
}

double quad_target(double tol, double value) {
    return tol * std::max(1.0, std::fabs(value));
}

} // namespace

QuadResult adaptive_quadrature(const RealFn& f, double a, double b, double tol) {
    if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) {
        throw ConfigInvalidError("adaptive_quadrature requires finite a < b");
    }
    if (!(tol > 0.0)) {
        throw ConfigInvalidError("adaptive_quadrature requires tol > 0");
    }

    long evals = 0;
    std::priority_queue<Panel> active;
    int subdivisions = 1;

    active.push(eval_panel(f, a, b, evals));
    double total_value = active.top().value;
    double total_error = active.top().error;

    while (total_error > quad_target(tol, total_value) && evals + 30 <= kQuadEvalBudget) {
        if (active.empty()) {
            break; // every panel is at rounding-limit width; error is irreducible
        }
        Panel worst = active.top();
        const double mid = 0.5 * (worst.a + worst.b);
        const double width = worst.b - worst.a;
        const double min_width = std::max(
            1e-290, std::numeric_limits<double>::epsilon() * (std::fabs(worst.a) + std::fabs(worst.b)));
        if (!(worst.a < mid && mid < worst.b) || width <= min_width) {
            // Width at the rounding limit, or so narrow that interior nodes
            // would underflow to the endpoint itself. Park the panel; its
            // value and error remain inside the running totals.
            active.pop();
            continue;
        }
        active.pop();
        Panel left = eval_panel(f, worst.a, mid, evals);
        Panel right = eval_panel(f, mid, worst.b, evals);
        total_value += left.value + right.value - worst.value;
        total_error += left.error + right.error - worst.error;
        active.push(left);
        active.push(right);
        ++subdivisions;
    }

    QuadResult result{total_value, total_error, subdivisions};
    if (total_error > quad_target(tol, total_value)) {
        throw NonConvergenceError(
            "quadrature did not reach tol = " + std::to_string(tol) + " within the evaluation budget",
            result.value, result.error_estimate);
    }
    return result;
}

namespace {

// Shared engine behind the improper integrals and their classifying
// variants. Windows shrink geometrically toward the singular/infinite
// endpoint; `sign` maps the upper-endpoint case onto the lower one.
struct ImproperOutcome {
    IntegralClass cls = IntegralClass::inconclusive;
    QuadResult quad;
    std::string note;
};

ImproperOutcome improper_core(const RealFn& f, double endpoint, double x, double tol, bool endpoint_below) {
    if (!(tol > 0.0)) {
        throw ConfigInvalidError("improper integral requires tol > 0");
    }
    const bool infinite = std::isinf(endpoint);
    if (!infinite && !(endpoint_below ? endpoint < x : x < endpoint)) {
        throw ConfigInvalidError("improper integral requires endpoint strictly beyond x");
    }

    // g integrates away from x toward the endpoint in positive offsets.
    auto gval = [&](double a, double b) {
        // window [a,b] expressed on the original axis
        return adaptive_quadrature(f, std::min(a, b), std::max(a, b), std::max(tol * 0.25, 1e-15));
    };

    const int max_windows = infinite ? 200 : 512;
    double partial = 0.0;
    double err_sum = 0.0;
    int subdivisions = 0;
    double prev_window = 0.0;
    double prev_partial = 0.0;
    int growth_streak = 0;
    bool have_prev = false;
    ImproperOutcome out;

    auto window_bounds = [&](int k, double& a, double& b) {
        if (infinite) {
            const double L0 = std::max(1.0, std::fabs(x));
            const double lo_off = L0 * std::ldexp(1.0, k);      // L0 * 2^k
            const double hi_off = (k == 0) ? 0.0 : L0 * std::ldexp(1.0, k - 1);
            if (endpoint_below) {
                a = x - lo_off;
                b = x - hi_off;
            } else {
                a = x + hi_off;
                b = x + lo_off;
            }
        } else {
            const double d0 = std::fabs(x - endpoint);
            const double near = d0 * std::ldexp(1.0, -(k + 1)); // d0 * 2^-(k+1)
            const double far = (k == 0) ? d0 : d0 * std::ldexp(1.0, -k);
            if (endpoint_below) {
                a = endpoint + near;
                b = endpoint + far;
            } else {
                a = endpoint - far;
                b = endpoint - near;
            }
        }
    };

    for (int k = 0; k < max_windows; ++k) {
        double a, b;
        window_bounds(k, a, b);
        QuadResult w;
        try {
            w = gval(a, b);
        } catch (const NonFiniteError&) {
            // Overflow while the partial sums were already growing is
            // treated as divergence evidence; otherwise the window is
            // genuinely unresolvable.
            if (growth_streak >= 3) {
                out.cls = IntegralClass::divergent;
                out.note = "classified divergent: integrand overflow while partial sums were growing";
                return out;
            }
            throw;
        }
        partial += w.value;
        err_sum += w.error_estimate;
        subdivisions += w.subdivisions;

        const double wmag = std::fabs(w.value);
        if (have_prev) {
            const bool grew = std::fabs(partial) > std::fabs(prev_partial) * (1.0 + 10.0 * tol);
            const bool tail_not_decaying = wmag >= std::fabs(prev_window) * 0.999;
            if (grew && tail_not_decaying) {
                ++growth_streak;
            } else {
                growth_streak = 0;
            }
            if (growth_streak >= 8) {
                out.cls = IntegralClass::divergent;
                out.note = "classified divergent: partial integral grew by > 1+10*tol for 8 consecutive "
                           "range doublings without tail decay (heuristic)";
                return out;
            }
        }

        // Converged: the latest window is negligible; bound the rest of the
        // tail geometrically from the last observed decay ratio.
        if (have_prev && wmag <= tol * 1e-3 * std::max(1.0, std::fabs(partial))) {
            double ratio = (std::fabs(prev_window) > 0.0) ? wmag / std::fabs(prev_window) : 0.0;
            ratio = std::clamp(ratio, 0.0, 0.95);
            const double tail = wmag * ratio / (1.0 - ratio);
            out.cls = IntegralClass::convergent;
            out.quad = QuadResult{partial, err_sum + tail + wmag, std::max(1, subdivisions)};
            return out;
        }

        prev_window = w.value;
        prev_partial = partial;
        have_prev = true;
    }

    out.cls = IntegralClass::inconclusive;
    out.quad = QuadResult{partial, std::max(err_sum, std::fabs(prev_window)), std::max(1, subdivisions)};
    out.note = "window budget exhausted before the tail was resolved";
    return out;
}

} // namespace

QuadResult improper_lower_integral(const RealFn& f, double lower, double x, double tol) {
    ImproperOutcome out = improper_core(f, lower, x, tol, /*endpoint_below=*/true);
    if (out.cls == IntegralClass::divergent) {
        throw DivergentError(out.note);
    }
    if (out.cls == IntegralClass::inconclusive) {
        throw NonConvergenceError("improper lower integral: " + out.note, out.quad.value,
                                  out.quad.error_estimate);
    }
    return out.quad;
}

QuadResult improper_upper_integral(const RealFn& f, double x, double upper, double tol) {
    ImproperOutcome out = improper_core(f, upper, x, tol, /*endpoint_below=*/false);
    if (out.cls == IntegralClass::divergent) {
        throw DivergentError(out.note);
    }
    if (out.cls == IntegralClass::inconclusive) {
        throw NonConvergenceError("improper upper integral: " + out.note, out.quad.value,
                                  out.quad.error_estimate);
    }
    return out.quad;
}

namespace {

ClassifiedIntegral classify_impl(const RealFn& f, double endpoint, double x, double tol, bool endpoint_below) {
    ClassifiedIntegral c;
    try {
        ImproperOutcome out = improper_core(f, endpoint, x, tol, endpoint_below);
        c.cls = out.cls;
        c.value = out.quad.value;
        c.error_estimate = out.quad.error_estimate;
        c.note = out.note.empty() ? "heuristic classification" : out.note;
    } catch (const NonFiniteError& e) {
        c.cls = IntegralClass::inconclusive;
        c.note = std::string("inconclusive: ") + e.what();
    } catch (const NonConvergenceError& e) {
        c.cls = IntegralClass::inconclusive;
        c.note = std::string("inconclusive: ") + e.what();
    }
    return c;
}

} // namespace

ClassifiedIntegral classify_lower_integral(const RealFn& f, double lower, double x, double tol) {
    return classify_impl(f, lower, x, tol, true);
}

ClassifiedIntegral classify_upper_integral(const RealFn& f, double x, double upper, double tol) {
    return classify_impl(f, upper, x, tol, false);
}

Derivs finite_difference_derivs(const RealFn& f, double x, double h) {
    if (!(h > 0.0)) {
        throw ConfigInvalidError("finite_difference_derivs requires h > 0");
    }
    const double fm = f(x - h);
    const double f0 = f(x);
    const double fp = f(x + h);
    if (!std::isfinite(fm) || !std::isfinite(f0) || !std::isfinite(fp)) {
        throw NonFiniteError("finite_difference_derivs: non-finite function value near x = " +
                             std::to_string(x));
    }
    return Derivs{(fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h)};
}

} // namespace condiff
