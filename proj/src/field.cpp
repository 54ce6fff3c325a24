#include "sqrtop/field.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sqrtop/errors.hpp"

namespace sqrtop {

namespace {
constexpr double kPi = 3.14159265358979323846264338;
}

Eigen::Vector3d PeriodicGrid::wavevector(int mx, int my, int mz) const {
    auto comp = [](int m, int n, double h) {
        int f = (m <= n / 2) ? m : m - n; // wrap to (-n/2, n/2]
        return 2.0 * kPi * f / (n * h);
    };
    return {comp(mx, dims[0], spacing[0]), comp(my, dims[1], spacing[1]),
            comp(mz, dims[2], spacing[2])};
}

Eigen::Vector3d PeriodicGrid::displacement(int ix, int iy, int iz) const {
    auto comp = [](int i, int n, double h) {
        int f = (i <= n / 2) ? i : i - n;
        return f * h;
    };
    return {comp(ix, dims[0], spacing[0]), comp(iy, dims[1], spacing[1]),
            comp(iz, dims[2], spacing[2])};
}

void PeriodicGrid::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 2) throw std::invalid_argument("PeriodicGrid: dims must be >= 2");
        if (!(spacing[a] > 0.0))
            throw std::invalid_argument("PeriodicGrid: spacing must be > 0");
    }
}

RadialGrid RadialGrid::graded(double r_max, int n, double grading) {
    if (!(r_max > 0.0) || n < 8)
        throw std::invalid_argument("RadialGrid::graded: bad parameters");
    RadialGrid g;
    g.r.resize(n);
    for (int j = 0; j < n; ++j)
        g.r[j] = r_max * std::pow(double(j + 1) / n, grading);
    g.weight.resize(n);
    for (int j = 0; j < n; ++j) {
        const double lo = (j == 0) ? 0.0 : 0.5 * (g.r[j - 1] + g.r[j]);
        const double hi = (j + 1 == n) ? g.r[j] : 0.5 * (g.r[j] + g.r[j + 1]);
        g.weight[j] = 4.0 * kPi * g.r[j] * g.r[j] * (hi - lo);
    }
    return g;
}

void RadialGrid::validate() const {
    if (r.size() < 3 || r.size() != weight.size())
        throw std::invalid_argument("RadialGrid: need >= 3 samples with weights");
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!(r[i] >= 0.0) || (i > 0 && !(r[i] > r[i - 1])))
            throw std::invalid_argument("RadialGrid: radii must be increasing and >= 0");
    }
}

Field::Field(PeriodicGrid g, int components) : grid_(g), components_(components) {
    g.validate();
    if (components != 1 && components != 4)
        throw std::invalid_argument("Field: components must be 1 or 4");
    data_.assign(g.size() * components, cdouble{});
}

Field::Field(RadialGrid g, int components) : grid_(g), components_(components) {
    g.validate();
    if (components != 1 && components != 4)
        throw std::invalid_argument("Field: components must be 1 or 4");
    data_.assign(g.size() * components, cdouble{});
}

Field Field::constant(const PeriodicGrid& g, cdouble value, int components) {
    Field f(g, components);
    for (auto& v : f.data_) v = value;
    return f;
}

Field Field::constant(const RadialGrid& g, cdouble value, int components) {
    Field f(g, components);
    for (auto& v : f.data_) v = value;
    return f;
}

long long Field::points() const {
    return static_cast<long long>(data_.size()) / components_;
}

Field Field::component(int comp) const {
    if (comp < 0 || comp >= components_)
        throw std::invalid_argument("Field::component: index out of range");
    Field out;
    out.grid_ = grid_;
    out.components_ = 1;
    out.data_.resize(points());
    for (long long p = 0; p < points(); ++p) out.data_[p] = at(p, comp);
    return out;
}

void Field::set_component(int comp, const Field& scalar) {
    if (!same_grid(scalar) || scalar.components() != 1)
        throw std::invalid_argument("Field::set_component: grid/component mismatch");
    for (long long p = 0; p < points(); ++p) at(p, comp) = scalar.at(p);
}

double Field::norm() const {
    double s = 0.0;
    if (const auto* pg = periodic()) {
        for (const auto& v : data_) s += std::norm(v);
        s *= pg->cell_volume();
    } else {
        const auto& rg = std::get<RadialGrid>(grid_);
        for (long long p = 0; p < points(); ++p)
            for (int c = 0; c < components_; ++c)
                s += rg.weight[p] * std::norm(at(p, c));
    }
    return std::sqrt(s);
}

double Field::max_abs() const {
    double m = 0.0;
    for (const auto& v : data_) m = std::max(m, std::abs(v));
    return m;
}

double relative_l2_error(const Field& got, const Field& want) {
    if (!got.same_grid(want) || got.components() != want.components())
        throw std::invalid_argument("relative_l2_error: field layout mismatch");
    Field diff = got;
    for (std::size_t i = 0; i < diff.data().size(); ++i)
        diff.data()[i] -= want.data()[i];
    const double denom = want.norm();
    return denom > 0.0 ? diff.norm() / denom : diff.norm();
}

namespace {

// Tracks byte offsets for parse diagnostics.
struct LineReader {
    std::ifstream in;
    long long offset = 0;

    explicit LineReader(const std::filesystem::path& p) : in(p) {
        if (!in) throw parse_error("cannot open field file: " + p.string(), 0);
    }
    bool next(std::string& line) {
        if (!std::getline(in, line)) return false;
        offset += static_cast<long long>(line.size()) + 1;
        return true;
    }
};

[[noreturn]] void bad(const LineReader& lr, const std::string& msg) {
    throw parse_error("malformed field file: " + msg, lr.offset);
}

} // namespace

Field read_field(const std::filesystem::path& path) {
    LineReader lr(path);
    std::string line;

    if (!lr.next(line) || line != "sqfld 1") bad(lr, "missing 'sqfld 1' magic");
    if (!lr.next(line)) bad(lr, "missing 'kind' line");

    Field out;
    int components = 1;
    if (line == "kind periodic3d") {
        PeriodicGrid g;
        if (!lr.next(line) ||
            std::sscanf(line.c_str(), "dims %d %d %d", &g.dims[0], &g.dims[1],
                        &g.dims[2]) != 3)
            bad(lr, "expected 'dims Nx Ny Nz'");
        if (!lr.next(line) ||
            std::sscanf(line.c_str(), "spacing %lf %lf %lf", &g.spacing[0],
                        &g.spacing[1], &g.spacing[2]) != 3)
            bad(lr, "expected 'spacing hx hy hz'");
        if (!lr.next(line) || std::sscanf(line.c_str(), "components %d", &components) != 1)
            bad(lr, "expected 'components n'");
        try {
            out = Field(g, components);
        } catch (const std::invalid_argument& e) {
            bad(lr, e.what());
        }
    } else if (line == "kind radial1d") {
        std::size_t count = 0;
        if (!lr.next(line) || std::sscanf(line.c_str(), "count %zu", &count) != 1)
            bad(lr, "expected 'count n'");
        if (!lr.next(line) || std::sscanf(line.c_str(), "components %d", &components) != 1)
            bad(lr, "expected 'components n'");
        if (!lr.next(line) || line != "radii") bad(lr, "expected 'radii'");
        RadialGrid g;
        g.r.resize(count);
        g.weight.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            if (!lr.next(line) ||
                std::sscanf(line.c_str(), "%lf %lf", &g.r[i], &g.weight[i]) != 2)
                bad(lr, "expected 'radius weight' sample line");
        }
        try {
            out = Field(g, components);
        } catch (const std::invalid_argument& e) {
            bad(lr, e.what());
        }
    } else {
        bad(lr, "unknown grid kind");
    }

    if (!lr.next(line) || line != "data") bad(lr, "expected 'data'");
    for (auto& v : out.data()) {
        double re = 0.0, im = 0.0;
        if (!(lr.in >> re >> im)) bad(lr, "truncated or non-numeric sample data");
        v = cdouble(re, im);
    }
    return out;
}

void write_field(const std::filesystem::path& path, const Field& f) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write field file: " + path.string());
    os.precision(17);
    os << "sqfld 1\n";
    if (const auto* pg = f.periodic()) {
        os << "kind periodic3d\n";
        os << "dims " << pg->dims[0] << ' ' << pg->dims[1] << ' ' << pg->dims[2] << '\n';
        os << "spacing " << pg->spacing[0] << ' ' << pg->spacing[1] << ' '
           << pg->spacing[2] << '\n';
        os << "components " << f.components() << '\n';
    } else {
        const auto& rg = *f.radial();
        os << "kind radial1d\n";
        os << "count " << rg.size() << '\n';
        os << "components " << f.components() << '\n';
        os << "radii\n";
        for (std::size_t i = 0; i < rg.size(); ++i)
            os << rg.r[i] << ' ' << rg.weight[i] << '\n';
    }
    os << "data\n";
    for (const auto& v : f.data()) os << v.real() << ' ' << v.imag() << '\n';
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

} // namespace sqrtop
