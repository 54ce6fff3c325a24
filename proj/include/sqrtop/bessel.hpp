#pragma once

#include <complex>

namespace sqrtop::bessel {

// Modified Bessel functions of the third kind K_n for n in {0,1,2,3}.
//
// Evaluation: ascending series for |z| <= 2; for larger arguments the scaled
// function e^z K_n(z) is computed from the integral representation
// int_0^inf exp(-z(cosh t - 1)) cosh(nt) dt by the (spectrally convergent)
// trapezoidal rule. Scaled values are the canonical internal form; unscaled
// values are reconstructed on demand.

double k(int order, double u);        // K_n(u), u > 0
double k_scaled(int order, double u); // e^u K_n(u), finite up to u ~ 1e4

// Analytic continuation to Re z >= 0 (z != 0). On the positive imaginary
// axis the principal branch is taken via K_n(iu) = -(i pi/2) e^{-n pi i/2}
// H_n^(2)(u); the lower half plane follows by Schwarz reflection.
std::complex<double> k_complex(int order, std::complex<double> z);
std::complex<double> k_complex_scaled(int order, std::complex<double> z);

// K_{1/2} in its exact elementary form sqrt(pi/2u) e^{-u}.
double k_half(double u);
double k_half_scaled(double u);

// Bessel functions of the first/second kind, real argument, n in {0,1,2,3}.
double j(int order, double x);
double y(int order, double x);

// Hankel functions H_n^(1) = J + iY, H_n^(2) = J - iY for n in {0,1,2,3}.
std::complex<double> hankel(int order, int kind, double x);
// The order-2 pair used by the light-cone kernel.
std::complex<double> hankel2(int kind, double x);

struct BesselEval {
    int order = 0;
    std::complex<double> argument{};
    std::complex<double> value{};
    std::complex<double> scaled_value{}; // value * exp(argument)
};

BesselEval evaluate(int order, std::complex<double> z);

} // namespace sqrtop::bessel
