#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <random>

#include "sqrtop/field.hpp"
#include "sqrtop/spectral.hpp"
#include "sqrtop/spline.hpp"

using namespace sqrtop;

namespace {

constexpr double kPi = 3.14159265358979323846;

Field gaussian3d(const PeriodicGrid& g, double sigma) {
    Field f(g);
    const Eigen::Vector3d c(0.5 * g.extent(0), 0.5 * g.extent(1), 0.5 * g.extent(2));
    long long idx = 0;
    for (int ix = 0; ix < g.dims[0]; ++ix)
        for (int iy = 0; iy < g.dims[1]; ++iy)
            for (int iz = 0; iz < g.dims[2]; ++iz, ++idx) {
                const double r2 = (g.point(ix, iy, iz) - c).squaredNorm();
                f.at(idx) = std::exp(-r2 / (2.0 * sigma * sigma));
            }
    return f;
}

Field plane_wave(const PeriodicGrid& g, int mx, int my, int mz) {
    Field f(g);
    const Eigen::Vector3d k = g.wavevector(mx, my, mz);
    long long idx = 0;
    for (int ix = 0; ix < g.dims[0]; ++ix)
        for (int iy = 0; iy < g.dims[1]; ++iy)
            for (int iz = 0; iz < g.dims[2]; ++iz, ++idx)
                f.at(idx) = std::exp(cdouble(0.0, k.dot(g.point(ix, iy, iz))));
    return f;
}

} // namespace

TEST_CASE("symbol values") {
    PhysicalParams p;
    CHECK(SpectralBackend::symbol({0, 0, 0}, p) == doctest::Approx(p.rest_energy()));
    PhysicalParams massless = p;
    massless.m = 0.0;
    CHECK(SpectralBackend::symbol({2.0, 0, 0}, massless) ==
          doctest::Approx(massless.c * massless.hbar * 2.0));
    CHECK(SpectralBackend::symbol({1.0, 0, 0}, p) == doctest::Approx(1.4142136).epsilon(1e-7));
}

TEST_CASE("single mode and constant are eigenfunctions") {
    PeriodicGrid g{{16, 16, 16}, {0.7, 0.7, 0.7}};
    PhysicalParams p;
    SpectralBackend sb(g, p);

    Field one = Field::constant(g, 1.0);
    Field r1 = sb.apply(one);
    for (long long i = 0; i < g.size(); ++i)
        CHECK(std::abs(r1.at(i) - p.rest_energy()) < 1e-12);

    Field pw = plane_wave(g, 3, 1, 0);
    const double want = SpectralBackend::symbol(g.wavevector(3, 1, 0), p);
    Field r2 = sb.apply(pw);
    for (long long i = 0; i < g.size(); i += 91)
        CHECK(std::abs(r2.at(i) - want * pw.at(i)) < 1e-11 * want);
}

TEST_CASE("Parseval form of the quadratic form") {
    PeriodicGrid g{{12, 12, 12}, {0.9, 0.9, 0.9}};
    PhysicalParams p;
    SpectralBackend sb(g, p);
    Field psi = gaussian3d(g, 1.3);

    const Field op = sb.apply(psi);
    cdouble direct = 0.0;
    for (long long i = 0; i < g.size(); ++i)
        direct += std::conj(psi.at(i)) * op.at(i);
    direct *= g.cell_volume();

    const double via_modes = sb.quadratic_form(psi);
    CHECK(std::abs(direct.imag()) < 1e-12 * std::abs(direct.real()));
    CHECK(direct.real() == doctest::Approx(via_modes).epsilon(1e-12));
}

TEST_CASE("applying twice gives the Klein-Gordon multiplier") {
    PeriodicGrid g{{12, 12, 12}, {0.8, 0.8, 0.8}};
    PhysicalParams p;
    p.m = 1.4;
    SpectralBackend sb(g, p);
    Field psi = gaussian3d(g, 1.1);

    const Field twice = sb.apply(sb.apply(psi));
    const Field kg = sb.apply_multiplier(psi, [&p](const Eigen::Vector3d& k) -> cdouble {
        const double s = SpectralBackend::symbol(k, p);
        return s * s;
    });
    CHECK(relative_l2_error(twice, kg) < 1e-12);
}

TEST_CASE("evolution is unitary, phases single modes, and undoes itself") {
    PeriodicGrid g{{16, 16, 16}, {0.6, 0.6, 0.6}};
    PhysicalParams p;
    SpectralBackend sb(g, p);
    Field psi = gaussian3d(g, 1.0);

    Field same = sb.evolve(psi, 0.0);
    CHECK(relative_l2_error(same, psi) == 0.0);

    Field fw = sb.evolve(psi, 0.8);
    CHECK(fw.norm() == doctest::Approx(psi.norm()).epsilon(1e-12));
    Field back = sb.evolve(fw, -0.8);
    CHECK(relative_l2_error(back, psi) < 1e-12);

    Field pw = plane_wave(g, 2, 0, 0);
    const double s = SpectralBackend::symbol(g.wavevector(2, 0, 0), p);
    Field ev = sb.evolve(pw, 1.0);
    const cdouble phase = std::exp(cdouble(0.0, -s / p.hbar));
    for (long long i = 0; i < g.size(); i += 137)
        CHECK(std::abs(ev.at(i) - phase * pw.at(i)) < 1e-12);

    // spinor lower block rotates with the opposite sign
    Field spinor(g, 4);
    spinor.set_component(0, pw);
    spinor.set_component(3, pw);
    Field evs = sb.evolve(spinor, 1.0);
    for (long long i = 0; i < g.size(); i += 271) {
        CHECK(std::abs(evs.at(i, 0) - phase * pw.at(i)) < 1e-12);
        CHECK(std::abs(evs.at(i, 3) - std::conj(phase) * pw.at(i)) < 1e-12);
    }
}

TEST_CASE("constant gauge shift commutes with evolution") {
    PeriodicGrid g{{24, 24, 24}, {0.6, 0.6, 0.6}};
    PhysicalParams p;
    SpectralBackend sb(g, p);
    Field psi = gaussian3d(g, 1.3);
    const Eigen::Vector3d a = g.wavevector(2, 1, 0); // lattice-commensurate shift

    Field mod = psi;
    long long idx = 0;
    for (int ix = 0; ix < g.dims[0]; ++ix)
        for (int iy = 0; iy < g.dims[1]; ++iy)
            for (int iz = 0; iz < g.dims[2]; ++iz, ++idx)
                mod.at(idx) = psi.at(idx) * std::exp(cdouble(0, a.dot(g.point(ix, iy, iz))));

    // evolve(e^{iax} psi) vs e^{iax} * (gauge-shifted evolution of psi)
    Field lhs = sb.evolve(mod, 0.7);
    Field shifted_ev = sb.apply_multiplier(psi, [&](const Eigen::Vector3d& k) {
        const double s = SpectralBackend::symbol(k + a, p);
        return std::exp(cdouble(0.0, -0.7 * s / p.hbar));
    });
    idx = 0;
    Field rhs(g);
    for (int ix = 0; ix < g.dims[0]; ++ix)
        for (int iy = 0; iy < g.dims[1]; ++iy)
            for (int iz = 0; iz < g.dims[2]; ++iz, ++idx)
                rhs.at(idx) =
                    shifted_ev.at(idx) * std::exp(cdouble(0, a.dot(g.point(ix, iy, iz))));
    // equality holds on the band-limited content; the residual is the
    // negligible spectral weight wrapped across the Nyquist boundary
    CHECK(relative_l2_error(lhs, rhs) < 1e-5);
}

TEST_CASE("radial oracle: windowed constant, squared operator, 3D cross-check") {
    PhysicalParams p;
    RadialGrid rg = RadialGrid::graded(14.0, 220, 2.0);

    // windowed constant: mc^2 on the interior
    std::vector<cdouble> win(rg.size());
    for (std::size_t i = 0; i < rg.size(); ++i) {
        const double r = rg.r[i];
        win[i] = 0.5 * (1.0 - std::tanh((r - 6.0) / 0.8));
    }
    auto res = radial_apply_spectral(rg, win, p);
    for (std::size_t i = 0; i < rg.size(); ++i) {
        if (rg.r[i] < 1.5)
            CHECK(std::abs(res.values[i] - p.rest_energy()) < 5e-3);
    }

    // gaussian: apply twice ~ (-Lap + mu^2) psi via finite differences
    std::vector<cdouble> gauss(rg.size());
    for (std::size_t i = 0; i < rg.size(); ++i)
        gauss[i] = std::exp(-0.5 * rg.r[i] * rg.r[i]);
    auto once = radial_apply_spectral(rg, gauss, p);
    auto twice = radial_apply_spectral(rg, once.values, p);
    // exact: (-Lap + mu^2) e^{-r^2/2} = (3 - r^2 + mu^2) e^{-r^2/2}
    for (std::size_t i = 0; i < rg.size(); i += 17) {
        const double r = rg.r[i];
        if (r > 6.0) continue;
        const cdouble want = (3.0 - r * r + 1.0) * std::exp(-0.5 * r * r);
        CHECK(std::abs(twice.values[i] - want) < 2e-3);
    }

    // 3D periodic cross-check on the same gaussian
    PeriodicGrid pg{{32, 32, 32}, {0.55, 0.55, 0.55}};
    SpectralBackend sb(pg, p);
    Field f3 = gaussian3d(pg, 1.0);
    Field r3 = sb.apply(f3);
    const Eigen::Vector3d c(0.5 * pg.extent(0), 0.5 * pg.extent(1), 0.5 * pg.extent(2));
    double worst = 0.0;
    long long idx = 0;
    CubicSpline<cdouble> interp(
        std::span<const double>(rg.r.data(), rg.size()),
        std::span<const cdouble>(once.values.data(), rg.size()));
    for (int ix = 0; ix < pg.dims[0]; ++ix)
        for (int iy = 0; iy < pg.dims[1]; ++iy)
            for (int iz = 0; iz < pg.dims[2]; ++iz, ++idx) {
                const double r = (pg.point(ix, iy, iz) - c).norm();
                if (r > 5.0 || r < 0.05) continue; // spline support starts off-origin
                worst = std::max(worst, std::abs(r3.at(idx) - interp(r)));
            }
    CHECK(worst < 1e-4);

    // insufficient decay is reported
    std::vector<cdouble> flat(rg.size(), 1.0);
    CHECK_THROWS_AS(radial_apply_spectral(rg, flat, p), accuracy_error);
}

TEST_CASE("heat semigroup handle matches the gaussian mode decay") {
    PeriodicGrid g{{12, 12, 12}, {0.8, 0.8, 0.8}};
    PhysicalParams p;
    auto sg = heat_semigroup_handle(g, p);

    Field pw = plane_wave(g, 1, 2, 0);
    SemigroupHandle::Vec v =
        Eigen::Map<const SemigroupHandle::Vec>(pw.data().data(), g.size());
    const double q = g.wavevector(1, 2, 0).squaredNorm() + 1.0;
    const auto evolved = sg.semigroup_apply(0.3, v);
    CHECK((evolved - std::exp(-0.3 * q) * v).norm() <= 1e-12 * v.norm());
    const auto gen = sg.generator_apply(v);
    CHECK((gen + q * v).norm() <= 1e-12 * v.norm());
}

TEST_CASE("field file round trip and malformed input diagnostics") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "sqrtop_field_test";
    fs::create_directories(dir);

    PeriodicGrid g{{6, 5, 4}, {0.5, 0.6, 0.7}};
    Field f(g, 4);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    for (auto& v : f.data()) v = cdouble(gauss(rng), gauss(rng));
    const fs::path p1 = dir / "spinor.sqfld";
    write_field(p1, f);
    Field back = read_field(p1);
    CHECK(back.components() == 4);
    CHECK(back.same_grid(f));
    CHECK(relative_l2_error(back, f) < 1e-15);

    RadialGrid rg = RadialGrid::graded(8.0, 32);
    Field fr(rg);
    for (auto& v : fr.data()) v = cdouble(gauss(rng), 0.0);
    const fs::path p2 = dir / "radial.sqfld";
    write_field(p2, fr);
    Field back2 = read_field(p2);
    CHECK(back2.radial() != nullptr);
    CHECK(relative_l2_error(back2, fr) < 1e-15);

    const fs::path bad = dir / "bad.sqfld";
    {
        std::ofstream os(bad);
        os << "sqfld 1\nkind periodic3d\ndims 4 4 4\nspacing 0.5 0.5 0.5\n"
           << "components 1\ndata\n1.0 oops\n";
    }
    try {
        read_field(bad);
        CHECK(false);
    } catch (const parse_error& e) {
        CHECK(e.byte_offset() > 0);
    }
}
