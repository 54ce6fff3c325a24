#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <vector>

namespace sqrtop {

// Natural cubic spline on an arbitrary strictly increasing grid, with exact
// piecewise-cubic definite integrals. Values may be real or complex.
template <class T>
class CubicSpline {
public:
    CubicSpline() = default;

    CubicSpline(std::span<const double> x, std::span<const T> y) {
        if (x.size() != y.size() || x.size() < 3)
            throw std::invalid_argument("CubicSpline: need >= 3 matching nodes");
        x_.assign(x.begin(), x.end());
        y_.assign(y.begin(), y.end());
        const std::size_t n = x_.size();
        for (std::size_t i = 1; i < n; ++i)
            if (!(x_[i] > x_[i - 1]))
                throw std::invalid_argument("CubicSpline: grid must be increasing");

        // second derivatives from the natural-spline tridiagonal system
        m_.assign(n, T{});
        std::vector<T> rhs(n, T{});
        std::vector<double> diag(n, 1.0), sub(n, 0.0), sup(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double hl = x_[i] - x_[i - 1];
            const double hr = x_[i + 1] - x_[i];
            sub[i] = hl / 6.0;
            diag[i] = (hl + hr) / 3.0;
            sup[i] = hr / 6.0;
            rhs[i] = (y_[i + 1] - y_[i]) / hr - (y_[i] - y_[i - 1]) / hl;
        }
        // Thomas algorithm
        std::vector<double> c(n, 0.0);
        std::vector<T> d(n, T{});
        c[0] = 0.0;
        d[0] = T{};
        for (std::size_t i = 1; i < n; ++i) {
            const double m = diag[i] - sub[i] * c[i - 1];
            c[i] = (i + 1 < n) ? sup[i] / m : 0.0;
            d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
        }
        m_[n - 1] = d[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) m_[i] = d[i] - c[i] * m_[i + 1];

        cum_.assign(n, T{});
        for (std::size_t i = 0; i + 1 < n; ++i)
            cum_[i + 1] = cum_[i] + segment_integral(i, x_[i], x_[i + 1]);
    }

    double x_min() const { return x_.front(); }
    double x_max() const { return x_.back(); }

    // Evaluate; outside the grid the value is extended by zero (fields decay).
    T operator()(double x) const {
        if (x < x_.front() || x > x_.back()) return T{};
        const std::size_t i = segment(x);
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - x) / h;
        const double b = (x - x_[i]) / h;
        return a * y_[i] + b * y_[i + 1] +
               ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * (h * h / 6.0);
    }

    T derivative(double x) const {
        x = std::clamp(x, x_.front(), x_.back());
        const std::size_t i = segment(x);
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - x) / h;
        const double b = (x - x_[i]) / h;
        return (y_[i + 1] - y_[i]) / h +
               ((1.0 - 3.0 * a * a) * m_[i] + (3.0 * b * b - 1.0) * m_[i + 1]) * (h / 6.0);
    }

    T second_derivative(double x) const {
        x = std::clamp(x, x_.front(), x_.back());
        const std::size_t i = segment(x);
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - x) / h;
        const double b = (x - x_[i]) / h;
        return a * m_[i] + b * m_[i + 1];
    }

    // Definite integral over [a, b] (clipped to the grid), exact per segment
    // and O(log n) through cumulative segment sums.
    T integrate(double a, double b) const {
        if (b < a) return -integrate(b, a);
        a = std::max(a, x_.front());
        b = std::min(b, x_.back());
        if (!(b > a)) return T{};
        return integral_from_start(b) - integral_from_start(a);
    }

    // int_{x_min}^{x} of the spline.
    T integral_from_start(double x) const {
        if (x <= x_.front()) return T{};
        if (x >= x_.back()) return cum_.back();
        const std::size_t i = segment(x);
        return cum_[i] + segment_integral(i, x_[i], x);
    }

private:
    std::size_t segment(double x) const {
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = (it == x_.begin()) ? 0 : std::distance(x_.begin(), it) - 1;
        return std::min(i, x_.size() - 2);
    }

    T segment_integral(std::size_t i, double lo, double hi) const {
        const double h = x_[i + 1] - x_[i];
        auto anti = [&](double x) -> T {
            const double a = (x_[i + 1] - x) / h;
            const double b = (x - x_[i]) / h;
            // antiderivative of the segment cubic in terms of a(x), b(x)
            return h * (-0.5 * a * a * y_[i] + 0.5 * b * b * y_[i + 1] +
                        (h * h / 6.0) * ((-0.25 * a * a * a * a + 0.5 * a * a) * m_[i] +
                                         (0.25 * b * b * b * b - 0.5 * b * b) * m_[i + 1]));
        };
        return anti(hi) - anti(lo);
    }

    std::vector<double> x_;
    std::vector<T> y_;
    std::vector<T> m_;
    std::vector<T> cum_;
};

} // namespace sqrtop
