#include "sqrtop/bessel.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include "sqrtop/errors.hpp"

namespace sqrtop::bessel {

namespace {

using cplx = std::complex<double>;

constexpr double kEulerGamma = 0.57721566490153286060651209;
constexpr double kPi = 3.14159265358979323846264338;

const double kFactorial[8] = {1, 1, 2, 6, 24, 120, 720, 5040};

void check_order(int order) {
    if (order < 0 || order > 3)
        throw std::domain_error("bessel: order must be in {0,1,2,3}");
}

// digamma at positive integers: psi(1) = -gamma, psi(n+1) = -gamma + H_n
double psi_int(int n) {
    double h = 0.0;
    for (int j = 1; j < n; ++j) h += 1.0 / j;
    return -kEulerGamma + h;
}

// I_n(z) ascending series, |z| <~ 14.
cplx i_series(int n, cplx z) {
    const cplx q = 0.25 * z * z;
    cplx term = std::pow(0.5 * z, n) / kFactorial[n];
    cplx sum = term;
    for (int k = 1; k < 80; ++k) {
        term *= q / (double(k) * double(k + n));
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

// K_n(z) ascending series (|z| <= 2): the finite sum, the log term, and the
// digamma tail.
cplx k_series(int n, cplx z) {
    const cplx q = 0.25 * z * z;
    const cplx lz = std::log(0.5 * z);

    cplx finite = 0.0;
    if (n > 0) {
        cplx t = 0.5 * std::pow(0.5 * z, -n);
        cplx pw = 1.0;
        for (int k = 0; k <= n - 1; ++k) {
            finite += t * (kFactorial[n - k - 1] / kFactorial[k]) * pw;
            pw *= -q;
        }
    }

    const double sgn = (n % 2 == 0) ? 1.0 : -1.0;
    cplx tail = 0.0;
    cplx t = 0.5 * std::pow(0.5 * z, n) / kFactorial[n];
    double hk = 0.0;   // H_k
    double hnk = 0.0;  // H_{n+k}
    for (int j = 1; j <= n; ++j) hnk += 1.0 / j;
    for (int k = 0; k < 80; ++k) {
        if (k > 0) {
            t *= q / (double(k) * double(n + k));
            hk += 1.0 / k;
            hnk += 1.0 / (n + k);
        }
        const cplx add = t * ((-2.0 * kEulerGamma) + hk + hnk);
        tail += add;
        if (std::abs(add) < 1e-18 * (std::abs(tail) + 1e-300) && k > 4) break;
    }

    const double log_sign = (n % 2 == 0) ? -1.0 : 1.0; // (-1)^{n+1}
    return finite + log_sign * lz * i_series(n, z) + sgn * tail;
}

// Scaled e^z K_n(z) by the trapezoidal rule on the cosh integral
// representation; spectrally convergent for |z| > 2, |arg z| <= pi/3.
cplx k_scaled_trapezoid(int n, cplx z) {
    const double az = std::abs(z);
    const double th = std::abs(std::arg(z));
    double h = std::min(std::sqrt(0.6 / az), 0.18);
    if (th > 0.15) h *= std::max(0.15, 1.0 - th / (0.5 * kPi));
    cplx sum = 0.5; // t = 0 node
    for (int j = 1; j < 200000; ++j) {
        const double t = j * h;
        const cplx w = std::exp(-z * (std::cosh(t) - 1.0)) * std::cosh(n * t);
        sum += w;
        if (std::abs(w) < 1e-19 * std::max(std::abs(sum), 1.0) && t > 1.0)
            return h * sum;
    }
    throw numerical_error("bessel: trapezoidal K evaluation did not terminate");
}

// J_n ascending series, usable to |z| ~ 14 (loses ~5 digits at the top end).
cplx j_series(int n, cplx z) {
    const cplx q = -0.25 * z * z;
    cplx term = std::pow(0.5 * z, n) / kFactorial[n];
    cplx sum = term;
    for (int k = 1; k < 90; ++k) {
        term *= q / (double(k) * double(k + n));
        sum += term;
        if (std::abs(term) < 1e-18 * (std::abs(sum) + 1e-300) && k > 4) break;
    }
    return sum;
}

// Y_n ascending series (finite part + log part + digamma tail).
cplx y_series(int n, cplx z) {
    const cplx q = 0.25 * z * z;
    const cplx lz = std::log(0.5 * z);

    cplx finite = 0.0;
    if (n > 0) {
        cplx t = -std::pow(0.5 * z, -n) / kPi;
        cplx pw = 1.0;
        for (int k = 0; k <= n - 1; ++k) {
            finite += t * (kFactorial[n - k - 1] / kFactorial[k]) * pw;
            pw *= q;
        }
    }

    cplx tail = 0.0;
    cplx t = -std::pow(0.5 * z, n) / (kPi * kFactorial[n]);
    double hk = 0.0, hnk = 0.0;
    for (int j = 1; j <= n; ++j) hnk += 1.0 / j;
    for (int k = 0; k < 90; ++k) {
        if (k > 0) {
            t *= -q / (double(k) * double(n + k));
            hk += 1.0 / k;
            hnk += 1.0 / (n + k);
        }
        const cplx add = t * ((-2.0 * kEulerGamma) + hk + hnk);
        tail += add;
        if (std::abs(add) < 1e-18 * (std::abs(tail) + 1e-300) && k > 4) break;
    }

    return finite + (2.0 / kPi) * lz * j_series(n, z) + tail;
}

// a_k(n) coefficients of the Hankel asymptotic expansion, with the 8^k k!
// denominators folded in.
double hankel_coeff(int n, int k, double prev) {
    const double mu = 4.0 * n * n;
    const double q = 2.0 * k - 1.0;
    return prev * (mu - q * q) / (8.0 * k);
}

// H_n^(1),(2)(z) by the large-argument expansion, |z| >= 14.
cplx hankel_asymptotic(int n, int kind, cplx z) {
    const cplx i(0.0, 1.0);
    const cplx pm = (kind == 1) ? i : -i;
    cplx sum = 0.0;
    double a = 1.0;
    cplx zpow = 1.0;
    double smallest = std::numeric_limits<double>::max();
    for (int k = 0; k < 40; ++k) {
        const cplx term = a * zpow * std::pow(pm, k);
        const double mag = std::abs(term);
        if (mag > smallest) break; // divergent tail reached
        smallest = mag;
        sum += term;
        if (mag < 1e-17 * std::abs(sum)) break;
        a = hankel_coeff(n, k + 1, a);
        zpow /= z;
    }
    const cplx omega = z - (0.5 * n + 0.25) * kPi;
    return std::sqrt(2.0 / (kPi * z)) * std::exp(pm * omega) * sum;
}

cplx hankel_complex(int n, int kind, cplx z) {
    if (std::abs(z) >= 14.0) return hankel_asymptotic(n, kind, z);
    const cplx jn = j_series(n, z);
    const cplx yn = y_series(n, z);
    const cplx i(0.0, 1.0);
    return (kind == 1) ? jn + i * yn : jn - i * yn;
}

// K_n on the closed upper half of the right half plane, |z| > 2,
// arg z in (pi/3, pi/2]: route through H^(2) on the lower-right octant.
cplx k_via_hankel(int n, cplx z) {
    const cplx i(0.0, 1.0);
    const cplx w = -i * z; // arg w in (-pi/6, 0]
    const cplx h2 = hankel_complex(n, 2, w);
    // e^{-n pi i/2} cycles 1, -i, -1, i
    static const cplx phase[4] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
    return -(0.5 * kPi) * i * phase[n] * h2;
}

cplx k_complex_upper(int order, cplx z) {
    if (std::abs(z) <= 2.0) return k_series(order, z);
    if (std::arg(z) <= kPi / 3.0)
        return k_scaled_trapezoid(order, z) * std::exp(-z);
    return k_via_hankel(order, z);
}

} // namespace

double k(int order, double u) {
    check_order(order);
    if (!(u > 0.0)) throw std::domain_error("bessel::k: argument must be > 0");
    if (u <= 2.0) return k_series(order, cplx(u, 0.0)).real();
    return k_scaled_trapezoid(order, cplx(u, 0.0)).real() * std::exp(-u);
}

double k_scaled(int order, double u) {
    check_order(order);
    if (!(u > 0.0)) throw std::domain_error("bessel::k_scaled: argument must be > 0");
    if (u <= 2.0) return k_series(order, cplx(u, 0.0)).real() * std::exp(u);
    return k_scaled_trapezoid(order, cplx(u, 0.0)).real();
}

std::complex<double> k_complex(int order, std::complex<double> z) {
    check_order(order);
    if (z == cplx(0.0, 0.0))
        throw std::domain_error("bessel::k_complex: singular at z = 0");
    if (z.real() < 0.0)
        throw std::domain_error("bessel::k_complex: Re z < 0 crosses the branch cut");
    if (z.imag() == 0.0) return cplx(k(order, z.real()), 0.0);
    if (z.imag() < 0.0) return std::conj(k_complex_upper(order, std::conj(z)));
    return k_complex_upper(order, z);
}

std::complex<double> k_complex_scaled(int order, std::complex<double> z) {
    return k_complex(order, z) * std::exp(z);
}

double k_half(double u) {
    if (!(u > 0.0)) throw std::domain_error("bessel::k_half: argument must be > 0");
    return std::sqrt(0.5 * kPi / u) * std::exp(-u);
}

double k_half_scaled(double u) {
    if (!(u > 0.0)) throw std::domain_error("bessel::k_half_scaled: argument must be > 0");
    return std::sqrt(0.5 * kPi / u);
}

double j(int order, double x) {
    check_order(order);
    if (!(x > 0.0)) throw std::domain_error("bessel::j: argument must be > 0");
    if (x < 14.0) return j_series(order, cplx(x, 0.0)).real();
    return hankel(order, 1, x).real();
}

double y(int order, double x) {
    check_order(order);
    if (!(x > 0.0)) throw std::domain_error("bessel::y: argument must be > 0");
    if (x < 14.0) return y_series(order, cplx(x, 0.0)).real();
    return hankel(order, 1, x).imag();
}

std::complex<double> hankel(int order, int kind, double x) {
    check_order(order);
    if (kind != 1 && kind != 2)
        throw std::domain_error("bessel::hankel: kind must be 1 or 2");
    if (!(x > 0.0)) throw std::domain_error("bessel::hankel: argument must be > 0");
    return hankel_complex(order, kind, cplx(x, 0.0));
}

std::complex<double> hankel2(int kind, double x) { return hankel(2, kind, x); }

BesselEval evaluate(int order, std::complex<double> z) {
    BesselEval ev;
    ev.order = order;
    ev.argument = z;
    ev.value = k_complex(order, z);
    ev.scaled_value = ev.value * std::exp(z);
    return ev;
}

} // namespace sqrtop::bessel
