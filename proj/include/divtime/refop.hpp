#pragma once

#include <functional>

#include "divtime/util.hpp"

namespace divtime {

// Cube with center z and side length 2*half (paper convention Q(z, delta)).
struct Cube {
    Vec center{};
    double half = 1;
};

// Smooth bump c_n * exp(-1/(1-|x|^2)) supported in B(0,1), integral one.
class Bump {
  public:
    explicit Bump(int dim);
    int dim() const { return dim_; }
    double operator()(const Vec& x) const;
    // Mass-one rescaling onto B(center, half): half^{-n} b((x-z)/half).
    double scaled(const Cube& q, const Vec& x) const;
    double raw(double s2) const { return bump_profile(s2); }
    double norm_const() const { return c_; }

  private:
    int dim_;
    double c_;
};

const Bump& unit_bump(int dim);

// Scalar sample source for the reference integrators.
using PointFn = std::function<double(const Vec&)>;
using VecPointFn = std::function<Vec(const Vec&)>;

struct RefQuadOpts {
    int ny = 64;        // y-grid points per axis over the support box
    int nr = 16;        // Gauss-Legendre nodes for the line integral
    Box support;        // support box of f (integration window)
    bool exclude_singular_cell = true;
};

// Reference Bogovskij integral on the unit ball:
//   B f(x) = int f(y)(x-y) int_1^inf b(y + r(x-y)) r^{n-1} dr dy.
// The r-integral is truncated at r* = (1+|y|)/|x-y| and computed with the
// clustering substitution r = 1 + s^2 (r*-1). The y-cell containing x is
// excluded and replaced by the average of the four nearest cell values.
Vec bogovskij_unit(int dim, const PointFn& f, const Vec& x, const RefQuadOpts& opts);

// Scaled/translated cube version with div B_Q f = f - b_Q int f.
Vec bogovskij_cube(const Cube& q, int dim, const PointFn& f, const Vec& x,
                   const RefQuadOpts& opts);

// Poincare integral (adjoint): B* f(x) = -int b(y)(x-y) . int_0^1 f(y+r(x-y)) dr dy.
double poincare_adjoint_unit(int dim, const VecPointFn& f, const Vec& x, int ny = 48,
                             int nr = 16);
double poincare_adjoint_cube(const Cube& q, int dim, const VecPointFn& f, const Vec& x,
                             int ny = 48, int nr = 16);

// ---------------------------------------------------------------------------
// Fast polar-form evaluator (2D), physical coordinates.
//
// B_Q g(x) = int_phi w [ (A(xi,w)/half) M1 + B(xi,w) M0 ] dphi with radial
// moments M0 = int g(x-s w) ds, M1 = int g(x-s w) s ds of g along each ray.
// The angular integrand is smooth; rays that miss the bump ball contribute
// nothing and are skipped (cone restriction).
// ---------------------------------------------------------------------------
struct PolarOpts {
    int nphi = 32;       // angular samples over the active cone
    double step = 0.01;  // radial sampling step for g
    Box support;         // box containing supp g
};

Vec bogovskij_cube_polar(const Cube& q, const PointFn& g, const Vec& x, const PolarOpts& opts);

}  // namespace divtime
