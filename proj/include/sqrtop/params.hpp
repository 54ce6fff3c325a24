#pragma once

#include <stdexcept>

namespace sqrtop {

// Physical constants. Natural units (everything 1) are the default; SI-style
// sets are accepted, all formulas keep the constants explicit.
struct PhysicalParams {
    double m = 1.0;    // mass
    double c = 1.0;    // speed of light
    double hbar = 1.0; // reduced Planck constant
    double e = 1.0;    // charge

    // inverse Compton wavelength
    double mu() const { return m * c / hbar; }
    double rest_energy() const { return m * c * c; }
    double hbar_c() const { return hbar * c; }

    void validate() const {
        if (!(m >= 0.0)) throw std::domain_error("PhysicalParams: m must be >= 0");
        if (!(c > 0.0)) throw std::domain_error("PhysicalParams: c must be > 0");
        if (!(hbar > 0.0)) throw std::domain_error("PhysicalParams: hbar must be > 0");
    }
};

} // namespace sqrtop
