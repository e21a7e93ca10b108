#include "divtime/refop.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace divtime {

Bump::Bump(int dim) : dim_(dim) {
    // Normalize by high-order radial quadrature.
    const Quad1D& q = gauss_legendre(64);
    double s = 0;
    for (int i = 0; i < 64; ++i) {
        double r = 0.5 * (1 + q.x[i]);
        double w = 0.5 * q.w[i];
        double shell = dim == 1 ? 2.0 : (dim == 2 ? 2 * M_PI * r : 4 * M_PI * r * r);
        s += w * shell * bump_profile(r * r);
    }
    c_ = 1.0 / s;
}

double Bump::operator()(const Vec& x) const {
    double s2 = 0;
    for (int d = 0; d < dim_; ++d) s2 += x[d] * x[d];
    return c_ * bump_profile(s2);
}

double Bump::scaled(const Cube& q, const Vec& x) const {
    double s2 = 0;
    for (int d = 0; d < dim_; ++d) {
        double u = (x[d] - q.center[d]) / q.half;
        s2 += u * u;
    }
    return c_ * bump_profile(s2) / std::pow(q.half, dim_);
}

const Bump& unit_bump(int dim) {
    static std::mutex mu;
    static std::map<int, Bump> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(dim);
    if (it == cache.end()) it = cache.emplace(dim, Bump(dim)).first;
    return it->second;
}

namespace {

// Integrand of the outer y-integral: f(y)(x-y) * int_1^{r*} b(y+r(x-y)) r^{n-1} dr.
Vec ray_kernel(int dim, const Bump& b, const PointFn& f, const Vec& x, const Vec& y, int nr) {
    Vec out{};
    double fy = f(y);
    if (fy == 0) return out;
    Vec w{};
    double dist2 = 0;
    for (int d = 0; d < dim; ++d) {
        w[d] = x[d] - y[d];
        dist2 += w[d] * w[d];
    }
    double dist = std::sqrt(dist2);
    if (dist < 1e-14) return out;
    double ynorm = norm2(y, dim);
    double rstar = (1.0 + ynorm) / dist;
    if (rstar <= 1.0) return out;

    const Quad1D& q = gauss_legendre(nr);
    double acc = 0;
    // substitution r = 1 + s^2 (r*-1), s in (0,1): clusters nodes near r = 1
    for (int i = 0; i < nr; ++i) {
        double s = 0.5 * (1 + q.x[i]);
        double r = 1.0 + s * s * (rstar - 1.0);
        double jac = 2.0 * s * (rstar - 1.0) * 0.5;
        Vec z{};
        for (int d = 0; d < dim; ++d) z[d] = y[d] + r * w[d];
        double bv = b(z);
        if (bv == 0) continue;
        acc += q.w[i] * jac * bv * std::pow(r, dim - 1);
    }
    for (int d = 0; d < dim; ++d) out[d] = fy * w[d] * acc;
    return out;
}

}  // namespace

Vec bogovskij_unit(int dim, const PointFn& f, const Vec& x, const RefQuadOpts& opts) {
    const Bump& b = unit_bump(dim);
    const Box& box = opts.support;
    int ny = opts.ny;
    std::array<int, 3> n{ny, dim > 1 ? ny : 1, 1};
    Vec h{};
    for (int d = 0; d < dim; ++d) h[d] = box.width(d) / n[d];
    double cellvol = 1;
    for (int d = 0; d < dim; ++d) cellvol *= h[d];

    // Midpoint rule over cells, excluding the cell containing x; its
    // contribution is replaced by the average of the nearest evaluated cells.
    Vec total{};
    Vec near_sum{};
    int near_cnt = 0;
    long long skip_ix = -1, skip_iy = -1;
    if (opts.exclude_singular_cell) {
        skip_ix = static_cast<long long>(std::floor((x[0] - box.lo[0]) / h[0]));
        if (dim > 1) skip_iy = static_cast<long long>(std::floor((x[1] - box.lo[1]) / h[1]));
    }
    for (int iy = 0; iy < n[1]; ++iy) {
        for (int ix = 0; ix < n[0]; ++ix) {
            Vec y = vec2(box.lo[0] + (ix + 0.5) * h[0],
                         dim > 1 ? box.lo[1] + (iy + 0.5) * h[1] : 0.0);
            if (ix == skip_ix && (dim == 1 || iy == skip_iy)) continue;
            Vec val = ray_kernel(dim, b, f, x, y, opts.nr);
            bool near = std::abs(ix - skip_ix) <= 1 && (dim == 1 || std::abs(iy - skip_iy) <= 1) &&
                        (std::abs(ix - skip_ix) + (dim == 1 ? 0 : std::abs(iy - skip_iy)) == 1);
            if (near) {
                for (int d = 0; d < dim; ++d) near_sum[d] += val[d];
                ++near_cnt;
            }
            for (int d = 0; d < dim; ++d) total[d] += val[d] * cellvol;
        }
    }
    if (opts.exclude_singular_cell && near_cnt > 0 && skip_ix >= 0 && skip_ix < n[0] &&
        (dim == 1 || (skip_iy >= 0 && skip_iy < n[1]))) {
        for (int d = 0; d < dim; ++d) total[d] += near_sum[d] / near_cnt * cellvol;
    }
    return total;
}

Vec bogovskij_cube(const Cube& q, int dim, const PointFn& f, const Vec& x,
                   const RefQuadOpts& opts) {
    // B_Q f = half * B_{B(0,1)}(f o tau^{-1}) o tau, tau(x) = (x-z)/half.
    auto fhat = [&](const Vec& yh) {
        Vec y{};
        for (int d = 0; d < dim; ++d) y[d] = q.center[d] + q.half * yh[d];
        return f(y);
    };
    Vec xh{};
    for (int d = 0; d < dim; ++d) xh[d] = (x[d] - q.center[d]) / q.half;
    RefQuadOpts o = opts;
    o.support.dim = dim;
    for (int d = 0; d < dim; ++d) {
        o.support.lo[d] = (opts.support.lo[d] - q.center[d]) / q.half;
        o.support.hi[d] = (opts.support.hi[d] - q.center[d]) / q.half;
    }
    Vec r = bogovskij_unit(dim, fhat, xh, o);
    for (int d = 0; d < dim; ++d) r[d] *= q.half;
    return r;
}

double poincare_adjoint_unit(int dim, const VecPointFn& f, const Vec& x, int ny, int nr) {
    const Bump& b = unit_bump(dim);
    const Quad1D& qy = gauss_legendre(std::min(ny, 64));
    const Quad1D& qr = gauss_legendre(nr);
    int m = static_cast<int>(qy.x.size());
    double total = 0;
    auto body = [&](const Vec& y, double wy) {
        double bv = b(y);
        if (bv == 0) return;
        Vec w{};
        for (int d = 0; d < dim; ++d) w[d] = x[d] - y[d];
        double acc = 0;
        for (int i = 0; i < nr; ++i) {
            double r = 0.5 * (1 + qr.x[i]);
            Vec z{};
            for (int d = 0; d < dim; ++d) z[d] = y[d] + r * w[d];
            Vec fv = f(z);
            acc += 0.5 * qr.w[i] * dot(fv, w, dim);
        }
        total += -wy * bv * acc;
    };
    if (dim == 1) {
        for (int i = 0; i < m; ++i) body(vec2(qy.x[i], 0), qy.w[i]);
    } else {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                body(vec2(qy.x[i], qy.x[j]), qy.w[i] * qy.w[j]);
    }
    return total;
}

double poincare_adjoint_cube(const Cube& q, int dim, const VecPointFn& f, const Vec& x,
                             int ny, int nr) {
    auto fhat = [&](const Vec& yh) {
        Vec y{};
        for (int d = 0; d < dim; ++d) y[d] = q.center[d] + q.half * yh[d];
        return f(y);
    };
    Vec xh{};
    for (int d = 0; d < dim; ++d) xh[d] = (x[d] - q.center[d]) / q.half;
    return q.half * poincare_adjoint_unit(dim, fhat, xh, ny, nr);
}

// ---------------------------------------------------------------------------
// Fast polar path
// ---------------------------------------------------------------------------
namespace {

// Chord moments of the unit bump along xi + v w, v >= 0:
//   A = int b dv, B = int b v dv.
inline void bump_chord_moments(const Bump& b, const Vec& xi, double wx, double wy,
                               double& A, double& B) {
    A = 0;
    B = 0;
    double xw = xi[0] * wx + xi[1] * wy;
    double xi2 = xi[0] * xi[0] + xi[1] * xi[1];
    double disc = xw * xw - xi2 + 1.0;
    if (disc <= 0) return;
    double sq = std::sqrt(disc);
    double v0 = std::max(0.0, -xw - sq), v1 = -xw + sq;
    if (v1 <= v0) return;
    const Quad1D& q = gauss_legendre(10);
    double c = b.norm_const();
    for (std::size_t i = 0; i < q.x.size(); ++i) {
        double v = v0 + (v1 - v0) * 0.5 * (1 + q.x[i]);
        double px = xi[0] + v * wx, py = xi[1] + v * wy;
        double bv = c * bump_profile(px * px + py * py);
        double wq = 0.5 * (v1 - v0) * q.w[i];
        A += wq * bv;
        B += wq * bv * v;
    }
}

// Largest s with x - s w still inside box (ray-box exit length).
inline double ray_box_exit(const Box& box, const Vec& x, double wx, double wy) {
    double tmax = std::numeric_limits<double>::infinity();
    auto axis = [&](double xd, double wd, double lo, double hi) {
        if (std::abs(wd) < 1e-15) {
            if (xd < lo || xd > hi) tmax = 0;
            return;
        }
        double a = (xd - lo) / wd, b = (xd - hi) / wd;
        if (a > b) std::swap(a, b);
        tmax = std::min(tmax, b);
        if (a > 0) tmax = std::min(tmax, std::numeric_limits<double>::infinity());
    };
    // direction of travel is -w; param s >= 0 along x - s w
    auto clip = [&](double xd, double wd, double lo, double hi) {
        // need lo <= xd - s*wd <= hi
        if (std::abs(wd) < 1e-15) {
            if (xd < lo || xd > hi) tmax = std::min(tmax, 0.0);
            return;
        }
        double s1 = (xd - lo) / wd, s2 = (xd - hi) / wd;
        double smax = std::max(s1, s2);
        tmax = std::min(tmax, smax);
    };
    (void)axis;
    clip(x[0], wx, box.lo[0], box.hi[0]);
    clip(x[1], wy, box.lo[1], box.hi[1]);
    return std::max(0.0, tmax);
}

}  // namespace

Vec bogovskij_cube_polar(const Cube& q, const PointFn& g, const Vec& x, const PolarOpts& opts) {
    const Bump& b = unit_bump(2);
    Vec xi = vec2((x[0] - q.center[0]) / q.half, (x[1] - q.center[1]) / q.half);
    double xin = std::hypot(xi[0], xi[1]);

    // Active cone of directions whose forward ray meets the bump ball.
    double phi0 = 0, width = 2 * M_PI;
    if (xin > 1.0) {
        phi0 = std::atan2(-xi[1], -xi[0]);
        width = 2 * std::asin(std::min(1.0, 1.0 / xin)) + 0.2 / xin;
    }
    int nphi = std::max(12, opts.nphi);
    double dphi = width / nphi;

    Vec out{};
    for (int ip = 0; ip < nphi; ++ip) {
        double phi = phi0 - width / 2 + (ip + 0.5) * dphi;
        double wx = std::cos(phi), wy = std::sin(phi);
        double A, B;
        bump_chord_moments(b, xi, wx, wy, A, B);
        if (A == 0 && B == 0) continue;

        double smax = ray_box_exit(opts.support, x, wx, wy);
        if (smax <= 0) continue;
        int ns = std::max(4, static_cast<int>(std::ceil(smax / opts.step)));
        if (ns % 2) ++ns;
        double hs = smax / ns;
        // composite Simpson for M0 = int g ds and M1 = int g s ds
        double m0 = 0, m1 = 0;
        for (int i = 0; i <= ns; ++i) {
            double s = i * hs;
            double gv = g(vec2(x[0] - s * wx, x[1] - s * wy));
            if (gv == 0) continue;
            double w = (i == 0 || i == ns) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            m0 += w * gv;
            m1 += w * gv * s;
        }
        m0 *= hs / 3.0;
        m1 *= hs / 3.0;

        double radial = (A / q.half) * m1 + B * m0;
        out[0] += dphi * wx * radial;
        out[1] += dphi * wy * radial;
    }
    return out;
}

}  // namespace divtime
