#pragma once

#include <functional>
#include <span>
#include <optional>

#include "sqrtop/field.hpp"
#include "sqrtop/params.hpp"
#include "sqrtop/semigroup.hpp"

namespace sqrtop {

// Fourier-multiplier reference implementation of the square-root operator and
// its evolution on periodic grids: the ground truth the kernel route is
// measured against.
class SpectralBackend {
public:
    SpectralBackend(PeriodicGrid grid, PhysicalParams params);

    const PeriodicGrid& grid() const { return grid_; }
    const PhysicalParams& params() const { return params_; }

    static double symbol(const Eigen::Vector3d& k, const PhysicalParams& p);

    // Multiply every Fourier mode by fn(k); exact for band-limited fields.
    Field apply_multiplier(const Field& psi,
                           const std::function<cdouble(const Eigen::Vector3d&)>& fn) const;

    // Op(symbol), optionally conjugated: e^{ia.x} Op e^{-ia.x} psi.
    Field apply(const Field& psi,
                std::optional<Eigen::Vector3d> gauge_a = std::nullopt) const;

    // exp(-i t symbol(k)/hbar) per mode; for spinor fields the lower block
    // evolves with the opposite phase sign.
    Field evolve(const Field& psi, double t) const;

    // <psi, Op psi> computed mode-wise (selfadjointness diagnostics).
    double quadratic_form(const Field& psi) const;

private:
    PeriodicGrid grid_;
    PhysicalParams params_;
};

// In-place 3D DFT of one scalar component; sign -1 forward, +1 backward
// (backward is normalized so the round trip is the identity).
void fft3(const PeriodicGrid& grid, std::vector<cdouble>& data, int sign);

// Multiply each Fourier mode of a scalar field by the given per-mode array
// (mode index = grid.index of the frequency triple).
Field apply_mode_multiplier(const Field& psi, const std::vector<cdouble>& modes);

// Heat semigroup exp(s(Lap - mu^2)) on a periodic grid as a SemigroupHandle
// (vectors are flattened scalar fields; s carries length^2 units).
SemigroupHandle heat_semigroup_handle(const PeriodicGrid& grid,
                                      const PhysicalParams& params);

struct RadialSpectralResult {
    std::vector<cdouble> values;
    double error_estimate = 0.0;
};

// High-accuracy 1D oracle: the 3D operator on radial functions through the
// spherical sine transform. `multiplier` defaults to the square-root symbol.
RadialSpectralResult radial_apply_spectral(
    const RadialGrid& grid, std::span<const cdouble> psi, const PhysicalParams& params,
    const std::function<double(double)>& multiplier = {});

} // namespace sqrtop
