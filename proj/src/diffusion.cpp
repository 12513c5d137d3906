#include "condiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace condiff {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// coefficient plumbing
// ---------------------------------------------------------------------------

// beta(x) = 2 b(x) / sigma^2(x), the density of B.
struct Beta {
    const DiffusionSpec* spec;
    double operator()(double x) const {
        const double s2 = spec->vol2(x);
        if (!(s2 > 0.0) || !std::isfinite(s2)) {
            throw ConfigInvalidError("sigma^2(x) must be positive and finite (x = " + fmt17(x) +
                                     ", sigma^2 = " + fmt17(s2) + ")");
        }
        const double b = spec->drift(x);
        if (!std::isfinite(b)) {
            throw NonFiniteError("drift b(x) non-finite at x = " + fmt17(x));
        }
        return 2.0 * b / s2;
    }
};

// ---------------------------------------------------------------------------
// scalar Dormand-Prince 5(4) march for B' = beta(x)
// ---------------------------------------------------------------------------

struct Dp45 {
    const Beta& beta;
    double rtol;
    double atol;
    double delta_cap; // max |dB| per accepted step

    // Marches from (x0, B0) to x1 (either direction). on_accept may be null.
    double march(double x0, double B0, double x1,
                 const std::function<void(double, double)>& on_accept,
                 const std::function<double(double, double)>& step_limit) const {
        if (x1 == x0) {
            return B0;
        }
        const double dir = (x1 > x0) ? 1.0 : -1.0;
        double x = x0;
        double B = B0;
        double h = dir * std::min(0.1 * std::fabs(x1 - x0) + 1e-6, initial_span(x, dir, step_limit));
        double k1 = beta(x);
        long steps = 0;
        const long max_steps = 4'000'000;

        while (dir * (x1 - x) > 0.0) {
            if (++steps > max_steps) {
                throw NonConvergenceError("B march exceeded the step budget", B, 0.0);
            }
            double lim = step_limit ? step_limit(x, dir) : kInf;
            if (std::fabs(h) > lim) {
                h = dir * lim;
            }
            if (dir * (x + h - x1) > 0.0) {
                h = x1 - x;
            }
            if (x + h == x) {
                throw NonConvergenceError("B march step underflow at x = " + fmt17(x), B, 0.0);
            }

            const double k2 = beta(x + h * (1.0 / 5.0));
            (void)k2; // quadrature right-hand side; stage 2 does not enter the weights
            const double k3 = beta(x + h * (3.0 / 10.0));
            const double k4 = beta(x + h * (4.0 / 5.0));
            const double k5 = beta(x + h * (8.0 / 9.0));
            const double k6 = beta(x + h);
            const double dB5 = h * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4 -
                                    2187.0 / 6784.0 * k5 + 11.0 / 84.0 * k6);
            // FSAL stage coincides with k6 for a pure quadrature problem.
            const double dB4 = h * (5179.0 / 57600.0 * k1 + 7571.0 / 16695.0 * k3 +
                                    393.0 / 640.0 * k4 - 92097.0 / 339200.0 * k5 +
                                    187.0 / 2100.0 * k6 + 1.0 / 40.0 * k6);
            const double err = std::fabs(dB5 - dB4);
            const double scale = atol + rtol * std::max(std::fabs(B), std::fabs(B + dB5));
            const bool too_big = std::fabs(dB5) > delta_cap;

            if (err <= scale && !too_big) {
                x += h;
                B += dB5;
                k1 = k6;
                if (on_accept) {
                    on_accept(x, B);
                }
                double grow = (err > 0.0) ? 0.9 * std::pow(scale / err, 0.2) : 5.0;
                if (std::fabs(dB5) > 0.0) {
                    grow = std::min(grow, 0.8 * delta_cap / std::fabs(dB5));
                }
                h *= std::clamp(grow, 0.2, 5.0);
            } else {
                double shrink = (err > 0.0) ? 0.9 * std::pow(scale / std::max(err, 1e-300), 0.2) : 0.5;
                if (too_big) {
                    shrink = std::min(shrink, 0.8 * delta_cap / std::fabs(dB5));
                }
                h *= std::clamp(shrink, 0.05, 0.9);
            }
        }
        return B;
    }

private:
    static double initial_span(double x, double dir,
                               const std::function<double(double, double)>& step_limit) {
        double lim = step_limit ? step_limit(x, dir) : 1.0;
        return std::min(std::max(lim, 1e-12), 1.0);
    }
};

// Gauss-Legendre nodes for the fast in-grid evaluators.
constexpr double kGl3X[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
constexpr double kGl3W[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
constexpr double kGl5X[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                             0.9061798459386640};
constexpr double kGl5W[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                             0.4786286704993665, 0.2369268850561891};

double gl3_integral(const Beta& beta, double a, double b) {
    const double c = 0.5 * (a + b);
    const double hl = 0.5 * (b - a);
    double acc = 0.0;
    for (int j = 0; j < 3; ++j) {
        acc += kGl3W[j] * beta(c + hl * kGl3X[j]);
    }
    return acc * hl;
}

double log_add_exp(double a, double b) {
    if (a == -kInf) {
        return b;
    }
    if (b == -kInf) {
        return a;
    }
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

// ---------------------------------------------------------------------------
// grid builder
// ---------------------------------------------------------------------------

struct BuildPoint {
    double x;
    double B;
    double log_s;
};

class GridBuilder {
public:
    GridBuilder(const DiffusionSpec& spec, double tol)
        : spec_(spec), beta_{&spec_},
          tol_i_(std::clamp(tol * 1e-3, 1e-14, 1e-9)),
          dp_{beta_, tol_i_, tol_i_, 0.25} {}

    // Sweep limits and geometric approach to a finite left endpoint.
    double step_limit(double x, double dir) const {
        double lim = std::max(1.0, 0.03 * std::fabs(x));
        if (dir < 0.0 && std::isfinite(spec_.ell)) {
            lim = std::min(lim, 0.2 * (x - spec_.ell));
        }
        return lim;
    }

    void sweep(double target) {
        const bool down = target < spec_.w;
        std::vector<BuildPoint>& side = down ? below_ : above_;
        double x0 = spec_.w;
        double B0 = 0.0;
        if (!side.empty()) {
            x0 = side.back().x;
            B0 = side.back().B;
            if (down ? (target >= x0) : (target <= x0)) {
                return;
            }
        }
        auto limit = [this](double x, double dir) { return step_limit(x, dir); };
        dp_.march(x0, B0, target, [&side](double x, double B) {
            side.push_back(BuildPoint{x, B, 0.0});
        }, limit);
    }

    // B at any x at or below current coverage; extends the grid downward on
    // demand. Used only while seeding the normalization integral.
    double B_extending(double x) {
        if (x >= spec_.w) {
            return B_from_sorted(x);
        }
        if (below_.empty() || x < below_.back().x) {
            sweep(next_extension_target(x));
        }
        return B_from_sorted(x);
    }

    // Assumption classifications on the two boundaries. The left integral
    // is computed in scaled form exp(c - B) with c = B at the lowest grid
    // point, so the raw value stays representable; log s is recovered as
    // log(value) - c without ever forming exp(-c).
    ClassifiedIntegral classify_left(double quad_tol) {
        ensure_initial_sweeps();
        const double x_bot = below_.empty() ? spec_.w : below_.back().x;
        const double c = below_.empty() ? 0.0 : below_.back().B;
        auto f = [this, c](double y) { return std::exp(c - B_extending(y)); };
        left_scale_c_ = c;
        left_result_ = classify_lower_integral(f, spec_.ell, x_bot, quad_tol);
        return left_result_;
    }

    // log s(x_bottom) once classify_left reported convergence.
    double left_log_seed() const { return std::log(left_result_.value) - left_scale_c_; }

    ClassifiedIntegral classify_right(double quad_tol) {
        ensure_initial_sweeps();
        const double x_top = above_.empty() ? spec_.w : above_.back().x;
        const double c = above_.empty() ? 0.0 : above_.back().B;
        auto f = [this, c](double y) {
            if (y > x_top_cover_) {
                sweep_above_to(y);
            }
            return std::exp(c - B_from_sorted(y));
        };
        x_top_cover_ = x_top;
        return classify_upper_integral(f, x_top, kInf, quad_tol);
    }

    void ensure_initial_sweeps() {
        if (!swept_) {
            sweep(default_lo_);
            sweep(default_hi_);
            swept_ = true;
        }
    }

    void set_targets(double lo, double hi) {
        default_lo_ = lo;
        default_hi_ = hi;
    }

    // Assembles the final sorted grid with log_s filled in. classify_left
    // must have run (it produces the normalization seed).
    std::vector<ScaleSpeed::GridPoint> assemble() {
        if (left_result_.cls != IntegralClass::convergent) {
            throw AssumptionViolatedError("s(ell+) = 0 normalization unavailable: " + left_result_.note);
        }
        std::vector<BuildPoint> pts;
        pts.reserve(below_.size() + above_.size() + 1);
        for (auto it = below_.rbegin(); it != below_.rend(); ++it) {
            pts.push_back(*it);
        }
        pts.push_back(BuildPoint{spec_.w, 0.0, 0.0});
        for (const auto& p : above_) {
            pts.push_back(p);
        }

        double log_s = left_log_seed();

        std::vector<ScaleSpeed::GridPoint> grid;
        grid.reserve(pts.size());
        grid.push_back({pts.front().x, pts.front().B, log_s});
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            log_s = append_segment(grid, pts[i], pts[i + 1], log_s);
        }
        return grid;
    }

    const Beta& beta() const { return beta_; }
    double tol_internal() const { return tol_i_; }
    const Dp45& dp() const { return dp_; }

private:
    DiffusionSpec spec_;
    Beta beta_;
    double tol_i_;
    Dp45 dp_;
    std::vector<BuildPoint> below_; // descending x
    std::vector<BuildPoint> above_; // ascending x
    bool swept_ = false;
    double default_lo_ = 0.0, default_hi_ = 0.0;
    double x_top_cover_ = 0.0;
    double left_scale_c_ = 0.0;
    ClassifiedIntegral left_result_;

    double next_extension_target(double x) const {
        if (std::isfinite(spec_.ell)) {
            // halve the remaining distance a few times past x
            const double d = std::max(x - spec_.ell, 0.0);
            return spec_.ell + std::max(d * 0.25, 0.0);
        }
        return x - std::max(1.0, 0.25 * std::fabs(x));
    }

    void sweep_above_to(double y) {
        sweep(y);
        x_top_cover_ = std::max(x_top_cover_, y);
    }

    double B_from_sorted(double x) const {
        // below_ descending, above_ ascending, w between them
        if (x >= spec_.w) {
            auto it = std::lower_bound(above_.begin(), above_.end(), x,
                                       [](const BuildPoint& p, double v) { return p.x <= v; });
            // it = first point with x strictly greater; anchor is the one before
            double ax = spec_.w, aB = 0.0;
            if (it != above_.begin()) {
                ax = (it - 1)->x;
                aB = (it - 1)->B;
            }
            return aB + gl3_integral(beta_, ax, x);
        }
        auto it = std::lower_bound(below_.begin(), below_.end(), x,
                                   [](const BuildPoint& p, double v) { return p.x >= v; });
        // it = first point with x strictly below; anchor is the one before
        double ax = spec_.w, aB = 0.0;
        if (it != below_.begin()) {
            ax = (it - 1)->x;
            aB = (it - 1)->B;
        }
        return aB - gl3_integral(beta_, x, ax);
    }

    // Appends grid point for b (the segment's upper end), chaining log_s,
    // splitting the segment if either quadrature check fails.
    double append_segment(std::vector<ScaleSpeed::GridPoint>& grid, const BuildPoint& a,
                          const BuildPoint& b, double log_s_a, int depth = 0) {
        // scaled segment integral of s' with GK15; B at nodes via GL3 from a
        const double c = 0.5 * (a.x + b.x);
        const double hl = 0.5 * (b.x - a.x);
        auto scaled_sprime = [&](double y) {
            const double By = a.B + gl3_integral(beta_, a.x, y);
            return std::exp(a.B - By);
        };
        // 15-point Kronrod with embedded Gauss (same tables as numerics)
        static const double xgk[8] = {0.991455371120812639206854697526329,
                                      0.949107912342758524526189684047851,
                                      0.864864423359769072789712788640926,
                                      0.741531185599394439863864773280788,
                                      0.586087235467691130294144838258730,
                                      0.405845151377397166906606412076961,
                                      0.207784955007898467600689403773245,
                                      0.0};
        static const double wgk[8] = {0.022935322010529224963732008058970,
                                      0.063092092629978553290700663189204,
                                      0.104790010322250183839876322541518,
                                      0.140653259715525918745189590510238,
                                      0.169004726639267902826583426598550,
                                      0.190350578064785409913256402421014,
                                      0.204432940075298892414161999234649,
                                      0.209482141084727828012999174891714};
        static const double wg[4] = {0.129484966168869693270611432679082,
                                     0.279705391489276667901467771423780,
                                     0.381830050505118944950369775488975,
                                     0.417959183673469387755102040816327};
        const double fc = scaled_sprime(c);
        double resk = wgk[7] * fc;
        double resg = wg[3] * fc;
        for (int j = 0; j < 7; ++j) {
            const double dx = hl * xgk[j];
            const double f1 = scaled_sprime(c - dx);
            const double f2 = scaled_sprime(c + dx);
            resk += wgk[j] * (f1 + f2);
            if (j % 2 == 1) {
                resg += wg[j / 2] * (f1 + f2);
            }
        }
        const double k15 = resk * hl;
        const double gk_err = std::fabs(resk - resg) * hl;

        // fast-rule agreement (this is what queries will use)
        double gl5 = 0.0;
        for (int j = 0; j < 5; ++j) {
            gl5 += kGl5W[j] * scaled_sprime(c + hl * kGl5X[j]);
        }
        gl5 *= hl;

        const double tol_seg = std::max(tol_i_ * std::fabs(k15), 1e-305);
        if ((gk_err > tol_seg || std::fabs(gl5 - k15) > 4.0 * tol_seg) && depth < 40) {
            // split: B at the midpoint by a dedicated march
            BuildPoint mid;
            mid.x = c;
            mid.B = a.B;
            auto limit = [this](double x, double dir) { return step_limit(x, dir); };
            mid.B = dp_.march(a.x, a.B, c, nullptr, limit);
            const double log_s_mid = append_segment(grid, a, mid, log_s_a, depth + 1);
            return append_segment(grid, mid, b, log_s_mid, depth + 1);
        }

        // k15 approximates exp(a.B) * int_a^b s', so the increment enters the
        // log-sum chain shifted back by a.B.
        const double log_s_b = log_add_exp(log_s_a, std::log(std::max(k15, 1e-320)) - a.B);
        grid.push_back({b.x, b.B, log_s_b});
        return log_s_b;
    }
};

} // namespace

// ---------------------------------------------------------------------------
// DiffusionSpec
// ---------------------------------------------------------------------------

DiffusionSpec DiffusionSpec::bm_drift(double mu) {
    if (!(mu > 0.0)) {
        throw ConfigInvalidError("bm_drift preset requires mu > 0");
    }
    DiffusionSpec s;
    s.name = "bm_drift";
    s.b = Expr::unary_minus(Expr::literal(mu));
    s.sigma = Expr::literal(1.0);
    s.ell = -kInf;
    s.w = 0.0;
    s.preset = PresetKind::bm_drift;
    s.mu = mu;
    return s;
}

DiffusionSpec DiffusionSpec::gbm(double mu, double sigma0) {
    if (!(sigma0 > 0.0)) {
        throw ConfigInvalidError("gbm preset requires sigma0 > 0");
    }
    DiffusionSpec s;
    s.name = "gbm";
    s.b = Expr::mul(Expr::literal(mu), Expr::variable());
    s.sigma = Expr::mul(Expr::literal(sigma0), Expr::variable());
    s.ell = 0.0;
    s.w = 1.0;
    s.preset = PresetKind::gbm;
    s.mu = mu;
    s.sigma0 = sigma0;
    return s;
}

DiffusionSpec DiffusionSpec::logistic(double mu, double kappa, double sigma0) {
    if (!(kappa > 0.0) || !(sigma0 > 0.0)) {
        throw ConfigInvalidError("logistic preset requires kappa > 0 and sigma0 > 0");
    }
    DiffusionSpec s;
    s.name = "logistic";
    s.b = Expr::sub(Expr::mul(Expr::literal(mu), Expr::variable()),
                    Expr::mul(Expr::literal(kappa), Expr::pow(Expr::variable(), Expr::literal(2.0))));
    s.sigma = Expr::mul(Expr::literal(sigma0), Expr::variable());
    s.ell = 0.0;
    s.w = 1.0;
    s.preset = PresetKind::logistic;
    s.mu = mu;
    s.kappa = kappa;
    s.sigma0 = sigma0;
    return s;
}

namespace {

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return x;
    } catch (const std::exception&) {
        throw ConfigInvalidError("invalid number for key '" + key + "': " + v);
    }
}

} // namespace

DiffusionSpec DiffusionSpec::from_config(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigInvalidError("model config line is not key=value: " + line);
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (kv.count(key)) {
            throw ConfigInvalidError("duplicate model config key: " + key);
        }
        kv[key] = val;
    }

    static const char* known[] = {"name", "b", "sigma", "ell", "w", "preset", "mu", "kappa", "sigma0"};
    for (const auto& [k, v] : kv) {
        (void)v;
        bool ok = false;
        for (const char* s : known) {
            ok = ok || (k == s);
        }
        if (!ok) {
            throw ConfigInvalidError("unknown model config key: " + k);
        }
    }

    DiffusionSpec spec;
    if (kv.count("preset")) {
        if (kv.count("b") || kv.count("sigma")) {
            throw ConfigInvalidError("preset models must not also define b/sigma");
        }
        const std::string p = kv["preset"];
        auto need = [&](const char* k) -> double {
            if (!kv.count(k)) {
                throw ConfigInvalidError(std::string("preset ") + p + " requires key " + k);
            }
            return parse_real(k, kv[k]);
        };
        if (p == "bm_drift") {
            spec = bm_drift(need("mu"));
        } else if (p == "gbm") {
            spec = gbm(need("mu"), need("sigma0"));
        } else if (p == "logistic") {
            spec = logistic(need("mu"), need("kappa"), need("sigma0"));
        } else {
            throw ConfigInvalidError("unknown preset: " + p);
        }
    } else {
        for (const char* k : {"b", "sigma", "ell", "w"}) {
            if (!kv.count(k)) {
                throw ConfigInvalidError(std::string("model config missing key: ") + k);
            }
        }
        spec.b = parse_expr(kv["b"]);
        spec.sigma = parse_expr(kv["sigma"]);
        spec.preset = PresetKind::custom;
    }
    if (kv.count("ell")) {
        const std::string e = kv["ell"];
        spec.ell = (e == "-inf") ? -kInf : parse_real("ell", e);
    }
    if (kv.count("w")) {
        spec.w = parse_real("w", kv["w"]);
    }
    if (kv.count("name")) {
        spec.name = kv["name"];
    }
    spec.validate();
    return spec;
}

std::string DiffusionSpec::to_config() const {
    std::ostringstream out;
    out << "name=" << name << "\n";
    switch (preset) {
    case PresetKind::bm_drift:
        out << "preset=bm_drift\nmu=" << fmt17(mu) << "\n";
        break;
    case PresetKind::gbm:
        out << "preset=gbm\nmu=" << fmt17(mu) << "\nsigma0=" << fmt17(sigma0) << "\n";
        break;
    case PresetKind::logistic:
        out << "preset=logistic\nmu=" << fmt17(mu) << "\nkappa=" << fmt17(kappa)
            << "\nsigma0=" << fmt17(sigma0) << "\n";
        break;
    case PresetKind::custom:
        out << "b=" << b.pretty_print() << "\nsigma=" << sigma.pretty_print() << "\n";
        break;
    }
    out << "ell=" << (std::isinf(ell) ? std::string("-inf") : fmt17(ell)) << "\n";
    out << "w=" << fmt17(w) << "\n";
    return out.str();
}

void DiffusionSpec::validate() const {
    if (!b.valid() || !sigma.valid()) {
        throw ConfigInvalidError("model requires drift and volatility expressions");
    }
    if (!std::isfinite(w)) {
        throw ConfigInvalidError("reference point w must be finite");
    }
    if (std::isfinite(ell) ? !(ell < w) : !(ell == -kInf)) {
        throw ConfigInvalidError("left endpoint ell must satisfy ell < w (ell = -inf allowed)");
    }
    // spot check sigma^2 > 0 near the reference point
    const double probe_lo = std::isfinite(ell) ? 0.5 * (ell + w) : w - 1.0;
    for (double x : {probe_lo, w, w + 1.0}) {
        const double s2 = vol2(x);
        if (!(s2 > 0.0) || !std::isfinite(s2)) {
            throw ConfigInvalidError("sigma^2 must be positive on the state interval (fails at x = " +
                                     fmt17(x) + ")");
        }
    }
}

std::string AssumptionReport::summary() const {
    std::ostringstream out;
    out << "s_ell_finite=" << (s_ell_finite ? "true" : "false") << "\n"
        << "s_infinity_infinite=" << (s_infinity_infinite ? "true" : "false") << "\n"
        << "left_boundary: " << left_verdict << "\n"
        << "right_boundary: " << right_verdict << "\n"
        << "overall=" << (pass() ? "pass" : "fail");
    return out.str();
}

// ---------------------------------------------------------------------------
// ScaleSpeed
// ---------------------------------------------------------------------------

void ScaleSpeed::check_domain(double x) const {
    if (!(x > spec_.ell) || !std::isfinite(x)) {
        throw OutOfDomainError("x = " + fmt17(x) + " outside the state interval (ell, inf)");
    }
}

ScaleSpeed::GridPoint ScaleSpeed::eval_at(double x) const {
    check_domain(x);
    const Beta beta{&spec_};
    const auto cmp = [](const GridPoint& p, double v) { return p.x < v; };

    if (x >= grid_.front().x && x <= grid_.back().x) {
        auto it = std::lower_bound(grid_.begin(), grid_.end(), x, cmp);
        if (it != grid_.end() && it->x == x) {
            return *it;
        }
        const GridPoint& a = *(it - 1);
        // B via GL3 from the left anchor; s-increment via scaled GL5.
        const double Bx = a.B + gl3_integral(beta, a.x, x);
        const double c = 0.5 * (a.x + x);
        const double hl = 0.5 * (x - a.x);
        double acc = 0.0;
        for (int j = 0; j < 5; ++j) {
            const double y = c + hl * kGl5X[j];
            const double By = a.B + gl3_integral(beta, a.x, y);
            acc += kGl5W[j] * std::exp(a.B - By);
        }
        const double scaled_inc = acc * hl; // exp(a.B) * int_a^x s'
        const double log_s =
            (scaled_inc > 0.0) ? log_add_exp(a.log_s, std::log(scaled_inc) - a.B) : a.log_s;
        return GridPoint{x, Bx, log_s};
    }

    Dp45 dp{beta, 1e-12, 1e-12, 0.25};
    auto limit = [this](double xx, double dir) {
        double lim = std::max(1.0, 0.03 * std::fabs(xx));
        if (dir < 0.0 && std::isfinite(spec_.ell)) {
            lim = std::min(lim, 0.2 * (xx - spec_.ell));
        }
        return lim;
    };

    // Outside the cache grid: march B once, keeping the accepted steps as a
    // temporary anchor chain so the scale increment's quadrature nodes cost
    // O(log n) lookups instead of fresh marches.
    struct Anchor {
        double x, B;
    };
    std::vector<Anchor> chain;
    auto chain_B = [&](double y) {
        auto it = std::lower_bound(chain.begin(), chain.end(), y,
                                   [](const Anchor& p, double v) { return p.x < v; });
        const Anchor* a = (it == chain.begin()) ? &chain.front() : &*(it - 1);
        if (it != chain.end() && std::fabs(it->x - y) < std::fabs(y - a->x)) {
            a = &*it;
        }
        return (y >= a->x) ? a->B + gl3_integral(beta, a->x, y)
                           : a->B - gl3_integral(beta, y, a->x);
    };

    if (x > grid_.back().x) {
        const GridPoint& top = grid_.back();
        chain.push_back({top.x, top.B});
        const double Bx = dp.march(top.x, top.B, x,
                                   [&chain](double xx, double BB) {
                                       chain.push_back({xx, BB});
                                   },
                                   limit);
        const double c = std::min(Bx, top.B);
        auto f = [&](double y) { return std::exp(c - chain_B(y)); };
        const double inc = adaptive_quadrature(f, top.x, x, std::max(tol_ * 0.1, 1e-12)).value;
        const double log_s = log_add_exp(top.log_s, std::log(std::max(inc, 1e-320)) - c);
        return GridPoint{x, Bx, log_s};
    }

    // below the grid: march down, then rebuild log s from the boundary
    const GridPoint& bot = grid_.front();
    chain.push_back({bot.x, bot.B});
    const double Bx = dp.march(bot.x, bot.B, x,
                               [&chain](double xx, double BB) {
                                   chain.push_back({xx, BB});
                               },
                               limit);
    std::reverse(chain.begin(), chain.end()); // ascending for the lookups
    const double c = Bx;
    auto f = [&](double y) {
        if (y < chain.front().x) {
            // windows may probe below the marched range; extend lazily
            std::vector<Anchor> ext;
            dp.march(chain.front().x, chain.front().B, y,
                     [&ext](double xx, double BB) { ext.push_back({xx, BB}); }, limit);
            chain.insert(chain.begin(), ext.rbegin(), ext.rend());
        }
        return std::exp(c - chain_B(y));
    };
    ClassifiedIntegral cls = classify_lower_integral(f, spec_.ell, x, std::max(tol_ * 0.1, 1e-12));
    if (cls.cls != IntegralClass::convergent) {
        throw NonConvergenceError("scale evaluation below the cache grid failed: " + cls.note, 0.0,
                                  0.0);
    }
    const double log_s = std::log(cls.value) - c;
    return GridPoint{x, Bx, log_s};
}

double ScaleSpeed::B(double x) const { return eval_at(x).B; }
double ScaleSpeed::log_s(double x) const { return eval_at(x).log_s; }
double ScaleSpeed::s(double x) const { return std::exp(eval_at(x).log_s); }
double ScaleSpeed::s_prime(double x) const { return std::exp(-eval_at(x).B); }

double ScaleSpeed::m_prime(double x) const {
    const GridPoint p = eval_at(x);
    const double s2 = spec_.vol2(x);
    return 2.0 * std::exp(p.B) / s2;
}

double ScaleSpeed::s_over_s_prime(double x) const {
    const GridPoint p = eval_at(x);
    return std::exp(p.log_s + p.B);
}

ScaleSpeed build_scale_speed(const DiffusionSpec& spec, double tol, double x_lo_hint,
                             double x_hi_hint) {
    spec.validate();
    if (!(tol > 0.0)) {
        throw ConfigInvalidError("build_scale_speed requires tol > 0");
    }

    double lo = x_lo_hint;
    double hi = x_hi_hint;
    const double span = std::max(1.0, std::fabs(spec.w));
    if (std::isnan(lo)) {
        lo = std::isfinite(spec.ell) ? spec.ell + 1e-9 * (spec.w - spec.ell) : spec.w - 60.0 * span;
    }
    if (std::isnan(hi)) {
        hi = spec.w + 60.0 * span;
    }
    if (std::isfinite(spec.ell)) {
        lo = std::max(lo, spec.ell + 1e-12 * (spec.w - spec.ell));
    }
    lo = std::min(lo, spec.w);
    hi = std::max(hi, spec.w);

    GridBuilder gb(spec, tol);
    gb.set_targets(lo, hi);
    gb.ensure_initial_sweeps();
    ClassifiedIntegral left = gb.classify_left(std::max(tol * 0.1, 1e-13));
    if (left.cls == IntegralClass::divergent) {
        throw AssumptionViolatedError(
            "s(ell+) divergent: the process is not transient to ell (" + left.note + ")");
    }
    if (left.cls == IntegralClass::inconclusive) {
        throw AssumptionViolatedError("s(ell+) could not be classified: " + left.note);
    }

    ScaleSpeed ss;
    ss.spec_ = spec;
    ss.tol_ = tol;
    ss.grid_ = gb.assemble();

    // construction invariants
    for (std::size_t i = 1; i < ss.grid_.size(); ++i) {
        if (!(ss.grid_[i].log_s > ss.grid_[i - 1].log_s)) {
            throw NonConvergenceError("scale cache grid is not strictly increasing", 0.0, 0.0);
        }
    }
    return ss;
}

AssumptionReport check_assumptions(const DiffusionSpec& spec, double tol) {
    spec.validate();
    AssumptionReport rep;

    GridBuilder gb(spec, tol);
    const double span = std::max(1.0, std::fabs(spec.w));
    const double lo =
        std::isfinite(spec.ell) ? spec.ell + 1e-9 * (spec.w - spec.ell) : spec.w - 60.0 * span;
    gb.set_targets(lo, spec.w + 60.0 * span);

    try {
        ClassifiedIntegral left = gb.classify_left(std::max(tol * 0.1, 1e-13));
        switch (left.cls) {
        case IntegralClass::convergent:
            rep.s_ell_finite = true;
            rep.left_verdict = "int_ell^w s' converged (value " + fmt17(left.value) +
                               ", error " + fmt17(left.error_estimate) + "); heuristic classification";
            break;
        case IntegralClass::divergent:
            rep.left_verdict = "s(ell+) divergent: " + left.note;
            break;
        case IntegralClass::inconclusive:
            rep.left_verdict = "inconclusive: " + left.note;
            break;
        }
    } catch (const Error& e) {
        rep.left_verdict = std::string("inconclusive: ") + e.what();
    }

    try {
        ClassifiedIntegral right = gb.classify_right(std::max(tol * 0.1, 1e-13));
        switch (right.cls) {
        case IntegralClass::divergent:
            rep.s_infinity_infinite = true;
            rep.right_verdict = "int_w^inf s' diverges (s(inf) = inf); heuristic classification";
            break;
        case IntegralClass::convergent:
            rep.right_verdict = "int_w^inf s' converged (value " + fmt17(right.value) +
                                "): the process is attracted to +inf, not ell";
            break;
        case IntegralClass::inconclusive:
            rep.right_verdict = "inconclusive: " + right.note;
            break;
        }
    } catch (const Error& e) {
        rep.right_verdict = std::string("inconclusive: ") + e.what();
    }

    return rep;
}

double hitting_probability(const ScaleSpeed& ss, double y, double z) {
    const double ell = ss.spec().ell;
    if (!(y > ell) || !(z > ell) || !std::isfinite(y) || !std::isfinite(z)) {
        throw OutOfDomainError("hitting_probability requires y, z in (ell, inf)");
    }
    if (y >= z) {
        return 1.0; // continuity plus X_t -> ell forces a downward crossing
    }
    return std::exp(ss.log_s(y) - ss.log_s(z));
}

ZeroHitVerdict driftless_zero_hit_test(const Expr& sigma_factor, double K, double tol) {
    if (!(K > 0.0)) {
        throw ConfigInvalidError("driftless_zero_hit_test requires K > 0");
    }
    const double probe = sigma_factor.eval(0.5 * K);
    if (!(probe > 0.0) || !std::isfinite(probe)) {
        throw NonFiniteError("sigma factor must be positive on (0, K]");
    }
    auto integrand = [&sigma_factor](double x) {
        const double s = sigma_factor.eval(x);
        return 1.0 / (x * s * s);
    };
    ClassifiedIntegral cls = classify_lower_integral(integrand, 0.0, K, tol);
    switch (cls.cls) {
    case IntegralClass::divergent:
        return ZeroHitVerdict::no_hit;
    case IntegralClass::convergent:
        return ZeroHitVerdict::hits;
    case IntegralClass::inconclusive:
        return ZeroHitVerdict::inconclusive;
    }
    return ZeroHitVerdict::inconclusive;
}

double apply_generator(const DiffusionSpec& spec, const RealFn& f, double x, double h) {
    const Derivs d = finite_difference_derivs(f, x, h);
    return 0.5 * spec.vol2(x) * d.second + spec.drift(x) * d.first;
}

} // namespace condiff
