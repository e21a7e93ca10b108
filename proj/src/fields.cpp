#include "divtime/fields.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace divtime {

void GridSpec::validate() const {
    for (int d = 0; d < dim; ++d)
        if (nx[d] < 4) throw std::invalid_argument("GridSpec: need >= 4 cells per axis");
    if (nt < 4) throw std::invalid_argument("GridSpec: need >= 4 time steps");
    if (qorder < 1) throw std::invalid_argument("GridSpec: quadrature order >= 1");
}

GridSpec GridSpec::square(const Box& b, int n, int nt_, double t0_, double t1_, int qorder_) {
    GridSpec g;
    g.dim = b.dim;
    g.box = b;
    g.nx = {n, n, 1};
    g.nt = nt_;
    g.t0 = t0_;
    g.t1 = t1_;
    g.qorder = qorder_;
    g.validate();
    return g;
}

void ScalarField::fill(SpaceTimeFn f) {
    for (int it = 0; it <= grid.nt; ++it) {
        double t = grid.time(it);
        for (int iy = 0; iy <= grid.nx[1]; ++iy)
            for (int ix = 0; ix <= grid.nx[0]; ++ix)
                at(it, ix, iy) = f(t, grid.node(ix, iy));
    }
    src = std::move(f);
}

namespace {
inline double cr_w(double a, double fm1, double f0, double f1, double f2) {
    // Catmull-Rom cubic through 4 points, parameter a in [0,1] between f0,f1.
    return f0 + 0.5 * a * (f1 - fm1 + a * (2 * fm1 - 5 * f0 + 4 * f1 - f2 +
                                           a * (3 * (f0 - f1) + f2 - fm1)));
}
}  // namespace

double ScalarField::interp(int it, const Vec& x) const {
    const int nx = grid.nx[0], ny = grid.nx[1];
    double fx = (x[0] - grid.box.lo[0]) / grid.h(0);
    double fy = (x[1] - grid.box.lo[1]) / grid.h(1);
    int ix = std::clamp(static_cast<int>(std::floor(fx)), 0, nx - 1);
    int iy = std::clamp(static_cast<int>(std::floor(fy)), 0, ny - 1);
    double ax = fx - ix, ay = fy - iy;
    auto node = [&](int i, int j) {
        return at(it, std::clamp(i, 0, nx), std::clamp(j, 0, ny));
    };
    double rows[4];
    for (int j = -1; j <= 2; ++j)
        rows[j + 1] = cr_w(ax, node(ix - 1, iy + j), node(ix, iy + j), node(ix + 1, iy + j),
                           node(ix + 2, iy + j));
    return cr_w(ay, rows[0], rows[1], rows[2], rows[3]);
}

double ScalarField::max_abs() const {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double VectorField::max_abs() const {
    double m = 0;
    for (const auto& c : comp) m = std::max(m, c.max_abs());
    return m;
}

std::string NormSpec::str() const {
    auto d = [](double v) {
        return std::isinf(v) ? std::string("inf") : fmt_g(v);
    };
    return "(" + std::to_string(k) + "," + fmt_g(p) + "," + d(beta) + "," +
           std::to_string(kappa) + "," + d(alpha) + "," + fmt_g(b) + ")";
}

void NormSpec::validate() const {
    if (p <= 1 || !(p < std::numeric_limits<double>::infinity()))
        throw std::invalid_argument("NormSpec: p in (1,inf)");
    if (k < 0 || kappa < 0) throw std::invalid_argument("NormSpec: k, kappa >= 0 here");
    if (!(beta > 0) || !(alpha > 0)) throw std::invalid_argument("NormSpec: distortions > 0");
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------
namespace {

// 4th-order first derivative along a 1D line of values.
void d1_line(const double* f, double* out, int n, double h, std::ptrdiff_t stride) {
    auto F = [&](int i) { return f[i * stride]; };
    if (n < 5) throw std::invalid_argument("derivative: need >= 5 nodes");
    const double c = 1.0 / (12.0 * h);
    out[0] = c * (-25 * F(0) + 48 * F(1) - 36 * F(2) + 16 * F(3) - 3 * F(4));
    out[1] = c * (-3 * F(0) - 10 * F(1) + 18 * F(2) - 6 * F(3) + F(4));
    for (int i = 2; i < n - 2; ++i)
        out[i] = c * (F(i - 2) - 8 * F(i - 1) + 8 * F(i + 1) - F(i + 2));
    out[n - 2] = -c * (-3 * F(n - 1) - 10 * F(n - 2) + 18 * F(n - 3) - 6 * F(n - 4) + F(n - 5));
    out[n - 1] = -c * (-25 * F(n - 1) + 48 * F(n - 2) - 36 * F(n - 3) + 16 * F(n - 4) - 3 * F(n - 5));
}

}  // namespace

ScalarField derivative(const ScalarField& f, int axis) {
    const GridSpec& g = f.grid;
    ScalarField out(g);
    const int nxn = g.nx[0] + 1, nyn = g.nx[1] + 1;
    std::vector<double> line;
    if (axis == 0) {
        line.resize(nxn);
        for (int it = 0; it <= g.nt; ++it)
            for (int iy = 0; iy < nyn; ++iy) {
                d1_line(&f.v[(static_cast<std::size_t>(it) * nyn + iy) * nxn], line.data(), nxn,
                        g.h(0), 1);
                for (int ix = 0; ix < nxn; ++ix) out.at(it, ix, iy) = line[ix];
            }
    } else if (axis == 1) {
        line.resize(nyn);
        for (int it = 0; it <= g.nt; ++it)
            for (int ix = 0; ix < nxn; ++ix) {
                d1_line(&f.v[static_cast<std::size_t>(it) * nyn * nxn + ix], line.data(), nyn,
                        g.h(1), nxn);
                for (int iy = 0; iy < nyn; ++iy) out.at(it, ix, iy) = line[iy];
            }
    } else if (axis == -1) {
        line.resize(g.nt + 1);
        std::ptrdiff_t stride = static_cast<std::ptrdiff_t>(nyn) * nxn;
        for (int iy = 0; iy < nyn; ++iy)
            for (int ix = 0; ix < nxn; ++ix) {
                d1_line(&f.v[static_cast<std::size_t>(iy) * nxn + ix], line.data(), g.nt + 1,
                        g.dt(), stride);
                for (int it = 0; it <= g.nt; ++it) out.at(it, ix, iy) = line[it];
            }
    } else {
        throw std::invalid_argument("derivative: bad axis");
    }
    return out;
}

ScalarField divergence(const VectorField& u) {
    ScalarField out(u.grid);
    for (int d = 0; d < u.grid.dim; ++d) {
        ScalarField dd = derivative(u.comp[d], d);
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += dd.v[i];
    }
    return out;
}

VectorField gradient(const ScalarField& f) {
    VectorField out(f.grid);
    for (int d = 0; d < f.grid.dim; ++d) out.comp[d] = derivative(f, d);
    return out;
}

ScalarField time_derivative(const ScalarField& f, int order) {
    ScalarField out = f;
    for (int i = 0; i < order; ++i) out = derivative(out, -1);
    return out;
}

VectorField time_derivative(const VectorField& f, int order) {
    VectorField out = f;
    for (auto& c : out.comp) c = time_derivative(c, order);
    return out;
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------
namespace {

// Integrate f over one axis-aligned cell intersected with the slice.
double cell_quad(const MovingDomain& dom, double t, const Vec& lo, double hx, double hy,
                 int order, const std::function<double(const Vec&)>& f, bool cut, int splits) {
    const Quad1D& q = gauss_legendre(order);
    if (!cut) {
        double s = 0;
        for (int a = 0; a < order; ++a)
            for (int b = 0; b < order; ++b) {
                Vec x = vec2(lo[0] + hx * 0.5 * (1 + q.x[a]), lo[1] + hy * 0.5 * (1 + q.x[b]));
                s += q.w[a] * q.w[b] * f(x);
            }
        return s * hx * hy * 0.25;
    }
    double s = 0;
    double sx = hx / splits, sy = hy / splits;
    for (int cx = 0; cx < splits; ++cx)
        for (int cy = 0; cy < splits; ++cy) {
            Vec clo = vec2(lo[0] + cx * sx, lo[1] + cy * sy);
            for (int a = 0; a < order; ++a)
                for (int b = 0; b < order; ++b) {
                    Vec x = vec2(clo[0] + sx * 0.5 * (1 + q.x[a]),
                                 clo[1] + sy * 0.5 * (1 + q.x[b]));
                    if (!dom.contains(t, x)) continue;
                    s += q.w[a] * q.w[b] * f(x);
                }
        }
    return s * sx * sy * 0.25;
}

}  // namespace

double integrate_slice(const GridSpec& g, const MovingDomain& dom, int it,
                       const std::function<double(const Vec&)>& f, int depth) {
    double t = g.time(it);
    const auto& ds = dom.dist_slice(t);
    double hx = g.h(0), hy = g.h(1);
    double diag = std::hypot(hx, hy);
    int splits = 4 << depth;

    const int ncy = g.nx[1], ncx = g.nx[0];
    std::vector<double> partial(ncy, 0.0);
    parallel_for(ncy, [&](std::size_t iy) {
        std::vector<double> cells(ncx, 0.0);
        for (int ix = 0; ix < ncx; ++ix) {
            Vec lo = g.node(static_cast<int>(ix), static_cast<int>(iy));
            Vec c = vec2(lo[0] + hx / 2, lo[1] + hy / 2);
            double dc = ds.at(c);
            if (dc > diag) {
                cells[ix] = cell_quad(dom, t, lo, hx, hy, g.qorder, f, false, 1);
            } else {
                // Cut or outside-near cell; indicator-weighted subdivision.
                bool anynear = dc > 0;
                if (!anynear) {
                    // check corners for interior presence
                    for (int k = 0; k < 4 && !anynear; ++k) {
                        Vec x = vec2(lo[0] + (k & 1) * hx, lo[1] + ((k >> 1) & 1) * hy);
                        anynear = ds.at(x) > 0 || dom.contains(t, x);
                    }
                }
                if (anynear)
                    cells[ix] = cell_quad(dom, t, lo, hx, hy, g.qorder, f, true, splits);
            }
        }
        partial[iy] = tree_sum(cells);
    });
    return tree_sum(partial);
}

double slice_area(const GridSpec& g, const MovingDomain& dom, int it) {
    return integrate_slice(g, dom, it, [](const Vec&) { return 1.0; });
}

double slice_mean(const ScalarField& f, const MovingDomain& dom, int it) {
    return integrate_slice(f.grid, dom, it,
                           [&](const Vec& x) { return f.value(it, x); });
}

void project_slice_mean_zero(ScalarField& f, const MovingDomain& dom) {
    const GridSpec& g = f.grid;
    for (int it = 0; it <= g.nt; ++it) {
        double t = g.time(it);
        double area = slice_area(g, dom, it);
        if (area <= 0) throw std::runtime_error("project_slice_mean_zero: empty slice");
        for (int pass = 0; pass < 3; ++pass) {
            double m = slice_mean(f, dom, it);
            if (std::abs(m) < 1e-14 * (1 + f.max_abs())) break;
            double shift = m / area;
            for (int iy = 0; iy <= g.nx[1]; ++iy)
                for (int ix = 0; ix <= g.nx[0]; ++ix)
                    if (dom.contains(t, g.node(ix, iy))) f.at(it, ix, iy) -= shift;
            f.src = nullptr;  // node values no longer match the analytic source
        }
    }
}

// ---------------------------------------------------------------------------
// Weighted norms
// ---------------------------------------------------------------------------
namespace {

double weighted_norm_impl(const std::vector<const ScalarField*>& parts,
                          const std::vector<std::array<int, 2>>& idx,  // (l, lambda)
                          const MovingDomain& dom, const NormSpec& spec, int it) {
    const GridSpec& g = parts[0]->grid;
    double t = g.time(it);
    const auto& ds = dom.dist_slice(t);
    double total = 0;
    bool has_negative = false;

    for (std::size_t m = 0; m < parts.size(); ++m) {
        auto [l, lambda] = idx[m];
        double e = 0;
        if (std::isfinite(spec.beta)) e += (l - spec.k) / spec.beta;
        if (std::isfinite(spec.alpha)) e += (lambda - spec.kappa) / spec.alpha;
        e -= spec.b;
        double pe = spec.p * e;
        if (pe < 0) has_negative = true;
        const ScalarField* fp = parts[m];
        auto integrand = [&](const Vec& x) {
            double val = std::abs(fp->interp(it, x));
            if (pe == 0) return std::pow(val, spec.p);
            double d = ds.at(x);
            if (d <= 0) return 0.0;
            return std::pow(val, spec.p) * std::pow(d, pe);
        };
        double q0 = integrate_slice(g, dom, it, integrand, pe < 0 ? 1 : 0);
        if (pe < 0) {
            double q1 = integrate_slice(g, dom, it, integrand, 2);
            if (std::abs(q1) > 1.8 * std::abs(q0) + 1e-300) {
                std::fprintf(stderr,
                             "[divtime] weighted_norm: non-integrable weight d^%g on the "
                             "discrete grid; reporting +inf\n", pe);
                return std::numeric_limits<double>::infinity();
            }
            q0 = q1;
        }
        total += q0;
    }
    (void)has_negative;
    return std::pow(total, 1.0 / spec.p);
}

}  // namespace

double weighted_norm(const ScalarField& f, const MovingDomain& dom, const NormSpec& spec,
                     int it) {
    spec.validate();
    std::vector<ScalarField> storage;
    std::vector<std::array<int, 2>> idx;
    std::vector<ScalarField> tder;
    tder.push_back(f);
    for (int lam = 1; lam <= spec.kappa; ++lam) tder.push_back(time_derivative(tder.back()));
    for (int lam = 0; lam <= spec.kappa; ++lam) {
        for (int l = 0; l <= spec.k; ++l) {
            // every spatial multi-index of order l: d^a_x d^(l-a)_y
            for (int a = 0; a <= l; ++a) {
                ScalarField cur = tder[lam];
                for (int i = 0; i < a; ++i) cur = derivative(cur, 0);
                for (int i = 0; i < l - a; ++i) cur = derivative(cur, 1);
                storage.push_back(std::move(cur));
                idx.push_back({l, lam});
            }
        }
    }
    std::vector<const ScalarField*> parts;
    for (const auto& s : storage) parts.push_back(&s);
    return weighted_norm_impl(parts, idx, dom, spec, it);
}

double weighted_norm(const VectorField& f, const MovingDomain& dom, const NormSpec& spec,
                     int it) {
    double s = 0;
    for (const auto& c : f.comp) {
        double n = weighted_norm(c, dom, spec, it);
        if (std::isinf(n)) return n;
        s += std::pow(n, spec.p);
    }
    return std::pow(s, 1.0 / spec.p);
}

double lq_time_norm(const std::vector<double>& slice_norms, double q, double dt) {
    if (slice_norms.empty()) return 0;
    std::vector<double> acc(slice_norms.size());
    for (std::size_t i = 0; i < slice_norms.size(); ++i) {
        double w = (i == 0 || i + 1 == slice_norms.size()) ? 0.5 : 1.0;
        if (std::isinf(slice_norms[i])) return std::numeric_limits<double>::infinity();
        acc[i] = w * std::pow(slice_norms[i], q) * dt;
    }
    return std::pow(tree_sum(acc), 1.0 / q);
}

void write_slice_norm_csv(const std::string& path, const ScalarField& f,
                          const MovingDomain& dom, const NormSpec& spec) {
    std::ofstream out(path);
    out << "t,norm,spec\n";
    for (int it = 0; it <= f.grid.nt; ++it)
        out << fmt_g(f.grid.time(it)) << "," << fmt_g(weighted_norm(f, dom, spec, it)) << ","
            << spec.str() << "\n";
}

}  // namespace divtime
