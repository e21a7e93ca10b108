#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "divtime/geometry.hpp"
#include "divtime/util.hpp"

namespace divtime {

// Uniform space-time grid. Nodes per axis = nx[d]+1, time nodes = nt+1.
struct GridSpec {
    int dim = 2;
    std::array<int, 3> nx{16, 16, 1};
    int nt = 8;
    Box box;
    double t0 = 0, t1 = 1;
    int qorder = 3;  // Gauss-Legendre points per cell axis

    double h(int d) const { return box.width(d) / nx[d]; }
    double dt() const { return nt > 0 ? (t1 - t0) / nt : 0.0; }
    double time(int it) const { return t0 + it * dt(); }
    Vec node(int ix, int iy) const {
        return vec2(box.lo[0] + ix * h(0), box.lo[1] + iy * h(1));
    }
    std::size_t slice_nodes() const {
        std::size_t n = 1;
        for (int d = 0; d < dim; ++d) n *= nx[d] + 1;
        return n;
    }
    std::size_t total_nodes() const { return slice_nodes() * (nt + 1); }
    void validate() const;

    static GridSpec square(const Box& b, int n, int nt_, double t0_ = 0, double t1_ = 1,
                           int qorder_ = 3);
};

using SpaceTimeFn = std::function<double(double, const Vec&)>;

class ScalarField {
  public:
    GridSpec grid;
    std::vector<double> v;
    SpaceTimeFn src;  // optional analytic source

    ScalarField() = default;
    explicit ScalarField(const GridSpec& g) : grid(g), v(g.total_nodes(), 0.0) {}
    ScalarField(const GridSpec& g, SpaceTimeFn f) : ScalarField(g) { fill(std::move(f)); }

    void fill(SpaceTimeFn f);
    double& at(int it, int ix, int iy) {
        return v[(static_cast<std::size_t>(it) * (grid.nx[1] + 1) + iy) * (grid.nx[0] + 1) + ix];
    }
    double at(int it, int ix, int iy) const {
        return v[(static_cast<std::size_t>(it) * (grid.nx[1] + 1) + iy) * (grid.nx[0] + 1) + ix];
    }
    // Bicubic (Catmull-Rom) interpolation in space at time level it.
    double interp(int it, const Vec& x) const;
    // Analytic value when a source is attached, else interpolation.
    double value(int it, const Vec& x) const {
        return src ? src(grid.time(it), x) : interp(it, x);
    }
    double max_abs() const;
};

class VectorField {
  public:
    GridSpec grid;
    std::vector<ScalarField> comp;

    VectorField() = default;
    explicit VectorField(const GridSpec& g) : grid(g), comp(g.dim, ScalarField(g)) {}
    double max_abs() const;
};

// Weighted-norm index vector (k, p, beta, kappa, alpha, b); +infinity in the
// distortion slots means unweighted.
struct NormSpec {
    int k = 0;
    double p = 2;
    double beta = std::numeric_limits<double>::infinity();
    int kappa = 0;
    double alpha = std::numeric_limits<double>::infinity();
    double b = 0;

    std::string str() const;
    void validate() const;
};

// ---------------------------------------------------------------------------
// Finite differences (4th order interior, one-sided 4th order at box edges)
// ---------------------------------------------------------------------------
ScalarField derivative(const ScalarField& f, int axis);  // axis 0..dim-1 space, -1 time
ScalarField divergence(const VectorField& u);
VectorField gradient(const ScalarField& f);
ScalarField time_derivative(const ScalarField& f, int order = 1);
VectorField time_derivative(const VectorField& f, int order = 1);

// ---------------------------------------------------------------------------
// Quadrature over a time slice of the moving domain.
//
// Cells fully inside use tensor Gauss-Legendre of grid.qorder; cells cut by
// the boundary are split 4x per axis and sampled with indicator weighting.
// `depth` adds extra refinement levels on cut cells (used by the blow-up
// detector for negative weights).
// ---------------------------------------------------------------------------
double integrate_slice(const GridSpec& g, const MovingDomain& dom, int it,
                       const std::function<double(const Vec&)>& f, int depth = 0);

double slice_area(const GridSpec& g, const MovingDomain& dom, int it);
double slice_mean(const ScalarField& f, const MovingDomain& dom, int it);
// Subtracts the slice mean (indicator-restricted) at every time level.
void project_slice_mean_zero(ScalarField& f, const MovingDomain& dom);

// ‖f‖ in the weighted space indexed by spec, on slice `it`. Returns +inf when
// the negative-power weight diverges on the discrete grid (with a warning on
// stderr); never silently truncates.
double weighted_norm(const ScalarField& f, const MovingDomain& dom, const NormSpec& spec,
                     int it);
double weighted_norm(const VectorField& f, const MovingDomain& dom, const NormSpec& spec,
                     int it);
// L^q-in-time reduction of per-slice norms (trapezoid over grid times).
double lq_time_norm(const std::vector<double>& slice_norms, double q, double dt);

// CSV with per-slice norms: columns t, norm, spec.
void write_slice_norm_csv(const std::string& path, const ScalarField& f,
                          const MovingDomain& dom, const NormSpec& spec);

}  // namespace divtime
