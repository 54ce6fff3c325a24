#include "sqrtop/semigroup.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <stdexcept>

#include "sqrtop/errors.hpp"

namespace sqrtop {

namespace {

constexpr double kPi = 3.14159265358979323846264338;

double spectral_abscissa(const Eigen::MatrixXcd& A) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A, false);
    double beta = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < A.rows(); ++i)
        beta = std::max(beta, es.eigenvalues()[i].real());
    return beta;
}

} // namespace

SemigroupHandle::SemigroupHandle(int dimension, ApplyFn generator,
                                 EvolveFn evolve, double M, double beta)
    : dim_(dimension),
      generator_(std::move(generator)),
      evolve_(std::move(evolve)),
      M_(M),
      beta_(beta) {}

SemigroupHandle SemigroupHandle::matrix(const Eigen::MatrixXcd& A, double M,
                                        double beta) {
    if (A.rows() != A.cols())
        throw std::invalid_argument("SemigroupHandle: generator must be square");
    auto Ap = std::make_shared<Eigen::MatrixXcd>(A);
    ApplyFn gen = [Ap](const Vec& v) -> Vec { return (*Ap) * v; };
    EvolveFn ev = [Ap](double t, const Vec& v) -> Vec {
        if (t == 0.0) return v;
        Eigen::MatrixXcd E = (t * (*Ap)).exp();
        return E * v;
    };
    SemigroupHandle h(static_cast<int>(A.rows()), std::move(gen), std::move(ev),
                      M, beta);
    h.A_ = Ap;
    return h;
}

SemigroupHandle SemigroupHandle::matrix(const Eigen::MatrixXcd& A) {
    return matrix(A, 1.0, spectral_abscissa(A));
}

SemigroupHandle SemigroupHandle::matrix(const Eigen::MatrixXd& A) {
    return matrix(Eigen::MatrixXcd(A.cast<std::complex<double>>()));
}

SemigroupHandle::Vec SemigroupHandle::semigroup_apply(double t, const Vec& v) const {
    if (t < 0.0) throw std::domain_error("semigroup_apply: t must be >= 0");
    if (t == 0.0) return v;
    return evolve_(t, v);
}

double subordination_density(double t, double s) {
    if (!(t > 0.0)) throw std::domain_error("subordination_density: t must be > 0");
    if (!(s > 0.0)) throw std::domain_error("subordination_density: s must be > 0");
    return t * std::pow(s, -1.5) / std::sqrt(4.0 * kPi) * std::exp(-t * t / (4.0 * s));
}

double density_bromwich_check(double t, double s) {
    if (!(t > 0.0) || !(s > 0.0))
        throw std::domain_error("density_bromwich_check: t, s must be > 0");
    // substitute r = q^2: (2/pi) int_0^inf q e^{-s q^2} sin(t q) dq
    const double qmax = std::sqrt(42.0 / s);
    auto f = [s, t](double q) { return q * std::exp(-s * q * q) * std::sin(t * q); };
    // panel per oscillation half-period, capped
    std::vector<double> pts{0.0};
    const double step = std::max(kPi / std::max(t, 1e-8), qmax / 64.0);
    for (double q = step; q < qmax; q += step) pts.push_back(q);
    pts.push_back(qmax);
    auto res = quad::integrate_panels(f, pts, {1e-11, 12});
    const double contour = (2.0 / kPi) * res.value;
    return contour - subordination_density(t, s);
}

SemigroupHandle::Vec subordinate_apply(const SemigroupHandle& sg, double t,
                                       const SemigroupHandle::Vec& v,
                                       double rel_tol) {
    if (t < 0.0) throw std::domain_error("subordinate_apply: t must be >= 0");
    if (t == 0.0) return v;

    const int n = sg.dimension();
    SemigroupHandle::Vec out(n);
    const double mode = t * t / 6.0; // maximum of the subordination density
    for (int i = 0; i < n; ++i) {
        auto fi = [&](double s) -> std::complex<double> {
            return subordination_density(t, s) * sg.semigroup_apply(s, v)[i];
        };
        auto res = quad::integrate_panels(
            fi, {0.0, mode, 4.0 * mode, std::numeric_limits<double>::infinity()},
            {rel_tol, 13});
        out[i] = res.value;
    }
    return out;
}

SemigroupHandle::Vec balakrishnan_sqrt_apply(const SemigroupHandle& sg,
                                             const SemigroupHandle::Vec& v,
                                             double rel_tol) {
    const Eigen::MatrixXcd* A = sg.generator_matrix();
    if (!A)
        throw std::invalid_argument(
            "balakrishnan_sqrt_apply: needs a matrix-backed handle");
    // -A must be positive definite (Hermitian part check at desk scale)
    Eigen::MatrixXcd H = -0.5 * (*A + A->adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw std::domain_error("balakrishnan_sqrt_apply: -A is not positive definite");

    const int n = sg.dimension();
    const Eigen::VectorXcd mAv = -(*A) * v;
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(n, n);

    // lambda = sigma^2 removes the endpoint singularity:
    // (1/pi) int lambda^{-1/2} R(lambda)(-Av) dlambda = (2/pi) int R(sigma^2)(-Av) dsigma
    const double scale = std::sqrt(es.eigenvalues().maxCoeff());
    SemigroupHandle::Vec out = SemigroupHandle::Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
        auto fi = [&](double sigma) -> std::complex<double> {
            Eigen::VectorXcd r = (sigma * sigma * I - (*A)).partialPivLu().solve(mAv);
            return r[i];
        };
        auto res = quad::integrate_panels(
            fi, {0.0, scale, 8.0 * scale, std::numeric_limits<double>::infinity()},
            {rel_tol, 13});
        out[i] = (2.0 / kPi) * res.value;
    }
    return out;
}

SemigroupHandle::Vec resolvent_from_semigroup(const SemigroupHandle& sg,
                                              std::complex<double> lambda,
                                              const SemigroupHandle::Vec& v,
                                              double rel_tol) {
    const double gap = lambda.real() - sg.growth_bound();
    if (!(gap > 0.0))
        throw std::domain_error(
            "resolvent_from_semigroup: Re(lambda) must exceed the growth bound");
    const int n = sg.dimension();
    const double tscale = 1.0 / gap;
    SemigroupHandle::Vec out(n);
    for (int i = 0; i < n; ++i) {
        auto fi = [&](double t) -> std::complex<double> {
            return std::exp(-lambda * t) * sg.semigroup_apply(t, v)[i];
        };
        auto res = quad::integrate_panels(
            fi, {0.0, tscale, 8.0 * tscale, std::numeric_limits<double>::infinity()},
            {rel_tol, 13});
        out[i] = res.value;
    }
    return out;
}

} // namespace sqrtop
