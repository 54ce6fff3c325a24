#include "sqrtop/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <stdexcept>

#include "sqrtop/errors.hpp"
#include "sqrtop/spline.hpp"

namespace sqrtop {

namespace {

constexpr double kPi = 3.14159265358979323846264338;

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

// In-place 3D DFT of one scalar component; sign -1 forward, +1 backward.
// The backward transform is normalized so forward-then-backward is identity.
void dft3(const PeriodicGrid& g, std::vector<cdouble>& data, int sign) {
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        plan = fftw_plan_dft_3d(g.dims[0], g.dims[1], g.dims[2],
                                reinterpret_cast<fftw_complex*>(data.data()),
                                reinterpret_cast<fftw_complex*>(data.data()),
                                sign == -1 ? FFTW_FORWARD : FFTW_BACKWARD,
                                FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(plan);
    }
    if (sign == +1) {
        const double inv = 1.0 / static_cast<double>(g.size());
        for (auto& v : data) v *= inv;
    }
}

} // namespace

void fft3(const PeriodicGrid& grid, std::vector<cdouble>& data, int sign) {
    if (static_cast<long long>(data.size()) != grid.size())
        throw std::invalid_argument("fft3: data size does not match grid");
    dft3(grid, data, sign);
}

Field apply_mode_multiplier(const Field& psi, const std::vector<cdouble>& modes) {
    const auto* pg = psi.periodic();
    if (!pg) throw std::invalid_argument("apply_mode_multiplier: periodic field expected");
    if (static_cast<long long>(modes.size()) != pg->size())
        throw std::invalid_argument("apply_mode_multiplier: mode array size mismatch");
    Field out = psi;
    for (int c = 0; c < psi.components(); ++c) {
        std::vector<cdouble> comp(pg->size());
        for (long long p = 0; p < pg->size(); ++p) comp[p] = psi.at(p, c);
        dft3(*pg, comp, -1);
        for (long long p = 0; p < pg->size(); ++p) comp[p] *= modes[p];
        dft3(*pg, comp, +1);
        for (long long p = 0; p < pg->size(); ++p) out.at(p, c) = comp[p];
    }
    return out;
}

SpectralBackend::SpectralBackend(PeriodicGrid grid, PhysicalParams params)
    : grid_(grid), params_(params) {
    grid_.validate();
    params_.validate();
}

double SpectralBackend::symbol(const Eigen::Vector3d& k, const PhysicalParams& p) {
    const double ck = p.c * p.hbar * k.norm();
    const double mc2 = p.rest_energy();
    return std::hypot(ck, mc2);
}

Field SpectralBackend::apply_multiplier(
    const Field& psi, const std::function<cdouble(const Eigen::Vector3d&)>& fn) const {
    const auto* pg = psi.periodic();
    if (!pg || !(*pg == grid_))
        throw std::invalid_argument("SpectralBackend: field not on this periodic grid");

    Field out = psi;
    for (int c = 0; c < psi.components(); ++c) {
        std::vector<cdouble> comp(grid_.size());
        for (long long p = 0; p < grid_.size(); ++p) comp[p] = psi.at(p, c);
        dft3(grid_, comp, -1);
        long long idx = 0;
        for (int ix = 0; ix < grid_.dims[0]; ++ix)
            for (int iy = 0; iy < grid_.dims[1]; ++iy)
                for (int iz = 0; iz < grid_.dims[2]; ++iz, ++idx)
                    comp[idx] *= fn(grid_.wavevector(ix, iy, iz));
        dft3(grid_, comp, +1);
        for (long long p = 0; p < grid_.size(); ++p) out.at(p, c) = comp[p];
    }
    return out;
}

Field SpectralBackend::apply(const Field& psi,
                             std::optional<Eigen::Vector3d> gauge_a) const {
    if (!gauge_a) {
        const PhysicalParams p = params_;
        return apply_multiplier(
            psi, [p](const Eigen::Vector3d& k) -> cdouble { return symbol(k, p); });
    }

    // e^{ia.x} Op e^{-ia.x}
    const Eigen::Vector3d a = *gauge_a;
    Field shifted = psi;
    long long idx = 0;
    for (int ix = 0; ix < grid_.dims[0]; ++ix)
        for (int iy = 0; iy < grid_.dims[1]; ++iy)
            for (int iz = 0; iz < grid_.dims[2]; ++iz, ++idx) {
                const cdouble ph = std::exp(cdouble(0.0, -a.dot(grid_.point(ix, iy, iz))));
                for (int c = 0; c < psi.components(); ++c)
                    shifted.at(idx, c) = psi.at(idx, c) * ph;
            }
    Field applied = apply(shifted);
    idx = 0;
    for (int ix = 0; ix < grid_.dims[0]; ++ix)
        for (int iy = 0; iy < grid_.dims[1]; ++iy)
            for (int iz = 0; iz < grid_.dims[2]; ++iz, ++idx) {
                const cdouble ph = std::exp(cdouble(0.0, a.dot(grid_.point(ix, iy, iz))));
                for (int c = 0; c < psi.components(); ++c) applied.at(idx, c) *= ph;
            }
    return applied;
}

Field SpectralBackend::evolve(const Field& psi, double t) const {
    if (t == 0.0) return psi;
    const PhysicalParams p = params_;
    Field out = psi;
    const int nc = psi.components();
    for (int c = 0; c < nc; ++c) {
        const double sign = (nc == 4 && c >= 2) ? +1.0 : -1.0; // beta block
        Field comp = psi.component(c);
        Field ev = apply_multiplier(comp, [p, t, sign](const Eigen::Vector3d& k) {
            return std::exp(cdouble(0.0, sign * t * symbol(k, p) / p.hbar));
        });
        if (nc == 1) return ev;
        out.set_component(c, ev);
    }
    return out;
}

double SpectralBackend::quadratic_form(const Field& psi) const {
    const auto* pg = psi.periodic();
    if (!pg || psi.components() != 1)
        throw std::invalid_argument("quadratic_form: scalar periodic field expected");
    std::vector<cdouble> comp(psi.data());
    dft3(grid_, comp, -1);
    double s = 0.0;
    long long idx = 0;
    for (int ix = 0; ix < grid_.dims[0]; ++ix)
        for (int iy = 0; iy < grid_.dims[1]; ++iy)
            for (int iz = 0; iz < grid_.dims[2]; ++iz, ++idx)
                s += symbol(grid_.wavevector(ix, iy, iz), params_) * std::norm(comp[idx]);
    // Parseval: |psi_hat|^2 carries an N factor relative to the lattice inner
    // product; normalize to <psi, Op psi> = sum_x conj(psi) (Op psi) h^3.
    return s * grid_.cell_volume() / static_cast<double>(grid_.size());
}

SemigroupHandle heat_semigroup_handle(const PeriodicGrid& grid,
                                      const PhysicalParams& params) {
    grid.validate();
    const double mu2 = params.mu() * params.mu();
    auto multiplier_apply = [grid, mu2](const SemigroupHandle::Vec& v,
                                        auto&& fn) -> SemigroupHandle::Vec {
        std::vector<cdouble> data(v.data(), v.data() + v.size());
        dft3(grid, data, -1);
        long long idx = 0;
        for (int ix = 0; ix < grid.dims[0]; ++ix)
            for (int iy = 0; iy < grid.dims[1]; ++iy)
                for (int iz = 0; iz < grid.dims[2]; ++iz, ++idx) {
                    const double k2 = grid.wavevector(ix, iy, iz).squaredNorm();
                    data[idx] *= fn(k2 + mu2);
                }
        dft3(grid, data, +1);
        return Eigen::Map<SemigroupHandle::Vec>(data.data(), v.size());
    };

    SemigroupHandle::ApplyFn gen = [multiplier_apply](const SemigroupHandle::Vec& v) {
        return multiplier_apply(v, [](double q) { return -q; });
    };
    SemigroupHandle::EvolveFn ev = [multiplier_apply](double t,
                                                      const SemigroupHandle::Vec& v) {
        return multiplier_apply(v, [t](double q) { return std::exp(-t * q); });
    };
    return SemigroupHandle(static_cast<int>(grid.size()), std::move(gen), std::move(ev),
                           1.0, -mu2);
}

RadialSpectralResult radial_apply_spectral(
    const RadialGrid& grid, std::span<const cdouble> psi, const PhysicalParams& params,
    const std::function<double(double)>& multiplier) {
    grid.validate();
    if (psi.size() != grid.size())
        throw std::invalid_argument("radial_apply_spectral: sample count mismatch");

    const double r_max = grid.r.back();
    const double edge = std::abs(psi.back());
    double peak = 0.0;
    for (const auto& v : psi) peak = std::max(peak, std::abs(v));
    if (peak > 0.0 && edge > 1e-7 * peak)
        throw accuracy_error(
            "radial_apply_spectral: field has not decayed at the grid edge",
            edge / peak);

    const PhysicalParams p = params;
    auto m = multiplier ? multiplier
                        : [p](double k) {
                              return SpectralBackend::symbol({k, 0.0, 0.0}, p);
                          };

    // spline of g(r) = r psi(r), pinned to 0 at the origin
    std::vector<double> xs;
    std::vector<cdouble> gs;
    xs.reserve(grid.size() + 1);
    gs.reserve(grid.size() + 1);
    if (grid.r.front() > 0.0) {
        xs.push_back(0.0);
        gs.push_back(0.0);
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        xs.push_back(grid.r[i]);
        gs.push_back(grid.r[i] * psi[i]);
    }
    CubicSpline<cdouble> g(xs, gs);

    static const double gl_x[4] = {-0.8611363115940526, -0.3399810435848563,
                                   0.3399810435848563, 0.8611363115940526};
    static const double gl_w[4] = {0.3478548451374538, 0.6521451548625461,
                                   0.6521451548625461, 0.3478548451374538};

    // fixed fine radial quadrature table for the sine transforms
    const int r_panels = 2048;
    std::vector<double> rq(4 * r_panels), wq(4 * r_panels);
    std::vector<cdouble> gq(4 * r_panels);
    {
        const double dr = r_max / r_panels;
        for (int pidx = 0; pidx < r_panels; ++pidx) {
            const double mid = (pidx + 0.5) * dr;
            for (int q = 0; q < 4; ++q) {
                const int idx = 4 * pidx + q;
                rq[idx] = mid + 0.5 * dr * gl_x[q];
                wq[idx] = 0.5 * dr * gl_w[q];
                gq[idx] = g(rq[idx]);
            }
        }
    }
    auto sine_transform = [&](double k) -> cdouble {
        cdouble acc = 0.0;
        for (std::size_t i = 0; i < rq.size(); ++i)
            acc += wq[i] * gq[i] * std::sin(k * rq[i]);
        return 4.0 * kPi / k * acc;
    };

    // k band chosen adaptively: march panels of half-period width and stop
    // once the integrand of the inverse transform has decayed away
    const double dk = kPi / r_max;
    const double k_cap = 1.5 * kPi * grid.size() / r_max;

    struct KNode {
        double k, w;
        cdouble weighted; // w * k * m(k) * psi_hat(k)
    };

    auto run = [&](int per_halfperiod) {
        std::vector<KNode> nodes;
        double peak_density = 0.0;
        int quiet = 0;
        for (int pidx = 0; pidx * dk < k_cap; ++pidx) {
            double panel_density = 0.0;
            const double step = dk / per_halfperiod;
            for (int sp = 0; sp < per_halfperiod; ++sp) {
                const double mid = pidx * dk + (sp + 0.5) * step;
                for (int q = 0; q < 4; ++q) {
                    KNode nd;
                    nd.k = mid + 0.5 * step * gl_x[q];
                    nd.w = 0.5 * step * gl_w[q];
                    const cdouble ft = sine_transform(nd.k);
                    nd.weighted = nd.w * nd.k * m(nd.k) * ft;
                    panel_density =
                        std::max(panel_density, nd.k * nd.k * m(nd.k) * std::abs(ft));
                    nodes.push_back(nd);
                }
            }
            peak_density = std::max(peak_density, panel_density);
            quiet = (panel_density < 1e-13 * peak_density) ? quiet + 1 : 0;
            if (quiet >= 3 && pidx >= 12) break;
        }

        std::vector<cdouble> out(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double r = grid.r[i];
            cdouble acc = 0.0;
            for (const auto& nd : nodes) {
                const double kern = (r > 0.0) ? std::sin(nd.k * r) / r : nd.k;
                acc += nd.weighted * kern;
            }
            out[i] = acc / (2.0 * kPi * kPi);
        }
        return out;
    };

    RadialSpectralResult res;
    res.values = run(3);
    const auto coarse = run(2);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        num += grid.weight[i] * std::norm(res.values[i] - coarse[i]);
        den += grid.weight[i] * std::norm(res.values[i]);
    }
    res.error_estimate = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    return res;
}

} // namespace sqrtop
