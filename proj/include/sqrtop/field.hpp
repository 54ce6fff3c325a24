#pragma once

#include <Eigen/Core>

#include <array>
#include <complex>
#include <filesystem>
#include <variant>
#include <vector>

namespace sqrtop {

using cdouble = std::complex<double>;

// Uniform periodic box [0, N*h)^3, row-major storage with z fastest.
struct PeriodicGrid {
    std::array<int, 3> dims{};
    std::array<double, 3> spacing{};

    long long size() const {
        return static_cast<long long>(dims[0]) * dims[1] * dims[2];
    }
    double cell_volume() const { return spacing[0] * spacing[1] * spacing[2]; }
    double extent(int axis) const { return dims[axis] * spacing[axis]; }

    long long index(int ix, int iy, int iz) const {
        return (static_cast<long long>(ix) * dims[1] + iy) * dims[2] + iz;
    }
    Eigen::Vector3d point(int ix, int iy, int iz) const {
        return {ix * spacing[0], iy * spacing[1], iz * spacing[2]};
    }
    // FFT wavevector of mode (mx,my,mz), components in (-pi/h, pi/h].
    Eigen::Vector3d wavevector(int mx, int my, int mz) const;
    // Minimal-image displacement of lattice offset (ix,iy,iz).
    Eigen::Vector3d displacement(int ix, int iy, int iz) const;

    bool operator==(const PeriodicGrid&) const = default;
    void validate() const;
};

// Radial sample set with quadrature weights for int f(r) 4 pi r^2 dr.
struct RadialGrid {
    std::vector<double> r;
    std::vector<double> weight;

    // Graded mesh clustering at the origin: r_j = r_max (j/n)^grading.
    static RadialGrid graded(double r_max, int n, double grading = 2.0);

    std::size_t size() const { return r.size(); }
    bool operator==(const RadialGrid&) const = default;
    void validate() const;
};

using GridDesc = std::variant<PeriodicGrid, RadialGrid>;

// Sampled complex field: 1 component (scalar) or 4 (spinor), point-major.
class Field {
public:
    Field() = default;
    Field(PeriodicGrid g, int components = 1);
    Field(RadialGrid g, int components = 1);

    static Field constant(const PeriodicGrid& g, cdouble value, int components = 1);
    static Field constant(const RadialGrid& g, cdouble value, int components = 1);

    int components() const { return components_; }
    long long points() const;
    const GridDesc& grid() const { return grid_; }
    const PeriodicGrid* periodic() const { return std::get_if<PeriodicGrid>(&grid_); }
    const RadialGrid* radial() const { return std::get_if<RadialGrid>(&grid_); }

    cdouble& at(long long point, int comp = 0) { return data_[point * components_ + comp]; }
    cdouble at(long long point, int comp = 0) const { return data_[point * components_ + comp]; }
    std::vector<cdouble>& data() { return data_; }
    const std::vector<cdouble>& data() const { return data_; }

    // Extract/insert one spinor component as a scalar field.
    Field component(int comp) const;
    void set_component(int comp, const Field& scalar);

    // L2 norm under the grid measure.
    double norm() const;
    double max_abs() const;

    bool same_grid(const Field& other) const { return grid_ == other.grid_; }

private:
    GridDesc grid_;
    int components_ = 1;
    std::vector<cdouble> data_;
};

double relative_l2_error(const Field& got, const Field& want);

// Plain-text field file, format documented in the README (kind, dims/radii,
// spacing, components header followed by "re im" samples).
Field read_field(const std::filesystem::path& path);
void write_field(const std::filesystem::path& path, const Field& f);

} // namespace sqrtop
