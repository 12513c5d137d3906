#pragma once

#include <functional>
#include <limits>
#include <string>

#include "condiff/errors.hpp"

namespace condiff {

using RealFn = std::function<double(double)>;

struct QuadResult {
    double value = 0.0;
    double error_estimate = 0.0; // absolute
    int subdivisions = 1;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Function-evaluation budget per quadrature call.
inline constexpr long kQuadEvalBudget = 1'000'000;

// Adaptive Gauss-Kronrod (G7,K15) over a finite interval. All nodes are
// interior, so integrable endpoint singularities are handled by bisection
// toward the endpoint rather than by evaluating f at it.
//
// Throws NonConvergenceError if the error estimate still exceeds
// tol*max(1,|value|) after the evaluation budget, and NonFiniteError if f
// returns a non-finite value at any node.
QuadResult adaptive_quadrature(const RealFn& f, double a, double b, double tol);

// Integral of f over (lower, x] where lower may be -inf or a finite point
// at which f is singular. The interval is resolved by geometric windows
// shrinking toward the endpoint (doubling the resolved range each time);
// the unresolved tail is estimated geometrically and folded into
// error_estimate.
//
// Throws DivergentError when the doubling heuristic classifies the integral
// as divergent: the partial integral grows by a factor > 1 + 10*tol for 8
// consecutive doublings while the window contributions fail to decay.
QuadResult improper_lower_integral(const RealFn& f, double lower, double x, double tol);

// Mirror image: integral of f over [x, upper) with upper possibly +inf.
QuadResult improper_upper_integral(const RealFn& f, double x, double upper, double tol);

// Non-throwing classification of an improper integral, for assumption
// checks where "divergent" is an answer rather than an error.
enum class IntegralClass { convergent, divergent, inconclusive };

struct ClassifiedIntegral {
    IntegralClass cls = IntegralClass::inconclusive;
    double value = 0.0; // meaningful only when convergent
    double error_estimate = 0.0;
    std::string note;   // heuristic caveats
};

ClassifiedIntegral classify_lower_integral(const RealFn& f, double lower, double x, double tol);
ClassifiedIntegral classify_upper_integral(const RealFn& f, double x, double upper, double tol);

// Central-difference first and second derivatives at x with step h;
// O(h^2) for smooth f. Throws NonFiniteError on non-finite evaluations.
struct Derivs {
    double first = 0.0;
    double second = 0.0;
};

Derivs finite_difference_derivs(const RealFn& f, double x, double h);

} // namespace condiff
