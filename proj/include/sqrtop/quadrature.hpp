#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <complex>
#include <limits>
#include <type_traits>
#include <vector>

#include "sqrtop/errors.hpp"

namespace sqrtop::quad {

struct Options {
    double rel_tol = 1e-9;
    int max_depth = 14;
};

template <class R>
struct BasicResult {
    R value{};
    double error = 0.0;
};

using Result = BasicResult<double>;
using ComplexResult = BasicResult<std::complex<double>>;

namespace detail {
using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
}

// Adaptive Gauss-Kronrod on [a, b].
template <class F>
auto integrate(F&& f, double a, double b, Options opt = Options{}) {
    using R = std::invoke_result_t<F, double>;
    double err = 0.0;
    R v = detail::GK::integrate(f, a, b, opt.max_depth, opt.rel_tol, &err);
    if (!std::isfinite(err))
        throw numerical_error("gauss-kronrod error estimate not finite");
    return BasicResult<R>{v, err};
}

// [a, inf) with the tail mapped by t = a + u/(1-u)^2, which flattens both
// exponential tails and algebraic ones down to t^{-3/2}.
template <class F>
auto integrate_half_line(F&& f, double a, Options opt = Options{}) {
    using R = std::invoke_result_t<F, double>;
    auto g = [&f, a](double u) -> R {
        const double om = 1.0 - u;
        const double t = a + u / (om * om);
        return f(t) * (1.0 + u) / (om * om * om);
    };
    double err = 0.0;
    R v = detail::GK::integrate(g, 0.0, 1.0, opt.max_depth, opt.rel_tol, &err);
    if (!std::isfinite(err))
        throw numerical_error("half-line quadrature error estimate not finite");
    return BasicResult<R>{v, err};
}

// Piecewise integration over consecutive panels; the final entry of `points`
// may be infinity.
template <class F>
auto integrate_panels(F&& f, const std::vector<double>& points,
                      Options opt = Options{}) {
    using R = std::invoke_result_t<F, double>;
    if (points.size() < 2)
        throw numerical_error("integrate_panels needs at least two points");
    BasicResult<R> total{};
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        const double a = points[i];
        const double b = points[i + 1];
        BasicResult<R> piece =
            std::isinf(b) ? integrate_half_line(f, a, opt) : integrate(f, a, b, opt);
        total.value += piece.value;
        total.error += piece.error;
    }
    return total;
}

} // namespace sqrtop::quad
