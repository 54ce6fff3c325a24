#pragma once

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <memory>

#include "sqrtop/quadrature.hpp"

namespace sqrtop {

// A strongly continuous one-parameter evolution family T(t) = exp(tA) with
// generator access. Matrix-backed handles serve the desk-scale test suite;
// spectral handles (periodic-grid heat semigroups) are built by the spectral
// module and plug into the same interface.
class SemigroupHandle {
public:
    using Vec = Eigen::VectorXcd;
    using ApplyFn = std::function<Vec(const Vec&)>;
    using EvolveFn = std::function<Vec(double, const Vec&)>;

    // T(t) = exp(tA). Growth metadata ||T(t)|| <= M exp(beta t); when omitted
    // it is estimated from the spectrum (exact for normal A).
    static SemigroupHandle matrix(const Eigen::MatrixXcd& A);
    static SemigroupHandle matrix(const Eigen::MatrixXcd& A, double M, double beta);
    static SemigroupHandle matrix(const Eigen::MatrixXd& A);

    // Custom backend (used by the spectral module).
    SemigroupHandle(int dimension, ApplyFn generator, EvolveFn evolve, double M,
                    double beta);

    Vec generator_apply(const Vec& v) const { return generator_(v); }
    Vec semigroup_apply(double t, const Vec& v) const;

    int dimension() const { return dim_; }
    double growth_bound() const { return beta_; }
    double growth_constant() const { return M_; }

    // Non-null for matrix-backed handles.
    const Eigen::MatrixXcd* generator_matrix() const { return A_ ? A_.get() : nullptr; }

private:
    int dim_ = 0;
    ApplyFn generator_;
    EvolveFn evolve_;
    double M_ = 1.0;
    double beta_ = 0.0;
    std::shared_ptr<Eigen::MatrixXcd> A_;
};

// Density of the one-sided 1/2-stable subordinator:
// f_{t,1/2}(s) = t s^{-3/2} / sqrt(4 pi) * exp(-t^2/(4s)), s > 0.
double subordination_density(double t, double s);

// Deformed-contour evaluation (1/pi) int_0^inf e^{-sr} sin(t sqrt(r)) dr by
// oscillatory quadrature; returns its difference from the closed form.
double density_bromwich_check(double t, double s);

// T_{1/2}(t) v = int_0^inf f_{t,1/2}(s) T(s) v ds.
SemigroupHandle::Vec subordinate_apply(const SemigroupHandle& sg, double t,
                                       const SemigroupHandle::Vec& v,
                                       double rel_tol = 1e-9);

// sqrt(-A) v via the alpha = 1/2 resolvent-integral representation,
// (1/pi) int_0^inf lambda^{-1/2} (lambda - A)^{-1} (-A v) dlambda, with the
// endpoint singularity removed by lambda = sigma^2. Matrix-backed handles
// with positive-definite -A only.
SemigroupHandle::Vec balakrishnan_sqrt_apply(const SemigroupHandle& sg,
                                             const SemigroupHandle::Vec& v,
                                             double rel_tol = 1e-9);

// (lambda - A)^{-1} v = int_0^inf e^{-lambda t} T(t) v dt, Re lambda > beta.
SemigroupHandle::Vec resolvent_from_semigroup(const SemigroupHandle& sg,
                                              std::complex<double> lambda,
                                              const SemigroupHandle::Vec& v,
                                              double rel_tol = 1e-10);

} // namespace sqrtop
