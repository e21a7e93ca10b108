#include "divtime/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "divtime/expr.hpp"
#include "json.hpp"

namespace divtime {

// ---------------------------------------------------------------------------
// GraphPatch
// ---------------------------------------------------------------------------
Vec GraphPatch::to_local(const Vec& x) const {
    Vec d{}, r{};
    for (int i = 0; i < dim; ++i) d[i] = x[i] - trans[i];
    for (int i = 0; i < dim; ++i) {
        double s = 0;
        for (int j = 0; j < dim; ++j) s += rot[i * dim + j] * d[j];
        r[i] = s;
    }
    return r;
}

Vec GraphPatch::to_global(const Vec& xloc) const {
    Vec r{};
    for (int j = 0; j < dim; ++j) {
        double s = 0;
        for (int i = 0; i < dim; ++i) s += rot[i * dim + j] * xloc[i];  // R^T
        r[j] = s + trans[j];
    }
    return r;
}

Vec GraphPatch::normal_dir() const {
    Vec r{};
    for (int j = 0; j < dim; ++j) r[j] = rot[(dim - 1) * dim + j];
    return r;
}

bool GraphPatch::covers_lateral(const Vec& xloc, double pad) const {
    for (int d = 0; d < dim - 1; ++d)
        if (xloc[d] < rect.lo[d] - pad || xloc[d] > rect.hi[d] + pad) return false;
    return true;
}

bool GraphPatch::covers(const Vec& xloc, double pad) const {
    if (!covers_lateral(xloc, pad)) return false;
    double v = xloc[dim - 1];
    return v >= box_bottom - pad && v <= box_top + pad;
}

double GraphPatch::psi(double t, const Vec& xloc) const { return graph(t, xloc); }

double GraphPatch::sampled_time_quotient(int nu, int ns) const {
    if (t1 <= t0) return 0;
    double q = 0;
    for (int iu = 0; iu <= nu; ++iu) {
        Vec u{};
        u[0] = rect.lo[0] + (rect.hi[0] - rect.lo[0]) * iu / nu;
        double prev_t = t0, prev_v = graph(t0, u);
        for (int is = 1; is <= ns; ++is) {
            double t = t0 + (t1 - t0) * is / ns;
            double v = graph(t, u);
            double dt = t - prev_t;
            if (dt > 0) q = std::max(q, std::abs(v - prev_v) / std::pow(dt, alpha));
            prev_t = t;
            prev_v = v;
        }
    }
    return q;
}

double GraphPatch::sampled_space_quotient(int nu, int ns) const {
    double q = 0;
    for (int is = 0; is <= ns; ++is) {
        double t = t0 + (t1 > t0 ? (t1 - t0) * is / ns : 0.0);
        Vec u{};
        u[0] = rect.lo[0];
        double prev_u = u[0], prev_v = graph(t, u);
        for (int iu = 1; iu <= nu; ++iu) {
            Vec uu{};
            uu[0] = rect.lo[0] + (rect.hi[0] - rect.lo[0]) * iu / nu;
            double v = graph(t, uu);
            double du = uu[0] - prev_u;
            if (du > 0) q = std::max(q, std::abs(v - prev_v) / std::pow(du, beta));
            prev_u = uu[0];
            prev_v = v;
        }
        if (t1 <= t0) break;
    }
    return q;
}

// ---------------------------------------------------------------------------
// Distance modulus
// ---------------------------------------------------------------------------
double ModulusOfContinuity::operator()(double eps) const {
    if (numeric) {
        double h = delta_min;
        for (std::size_t i = 0; i < num_eps.size(); ++i)
            if (num_eps[i] <= eps) h = std::max(h, num_delta[i]);
        return std::min(h, t_span);
    }
    if (l_time <= 0) return t_span;  // time-independent domain
    double h = std::pow(eps / (M * l_time), 1.0 / alpha);
    return std::clamp(h, delta_min, t_span);
}

// ---------------------------------------------------------------------------
// MovingDomain
// ---------------------------------------------------------------------------
struct MovingDomain::Cache {
    std::mutex mu;
    std::map<long long, std::shared_ptr<DistSlice>> slices;
    double pitch = 0;
    double inradius = -1;
};

MovingDomain::MovingDomain() : cache_(std::make_shared<Cache>()) {}

void MovingDomain::set_resolution(double pitch) {
    std::lock_guard<std::mutex> lock(cache_->mu);
    if (pitch != cache_->pitch) {
        cache_->pitch = pitch;
        cache_->slices.clear();
        cache_->inradius = -1;
    }
}

double MovingDomain::resolution() const {
    std::lock_guard<std::mutex> lock(cache_->mu);
    if (cache_->pitch <= 0) {
        double diag = std::hypot(bbox.width(0), bbox.width(1));
        cache_->pitch = diag / 512.0;
    }
    return cache_->pitch;
}

bool MovingDomain::inside_core(const Vec& x) const {
    for (const Box& b : core)
        if (b.contains(x)) return true;
    return false;
}

bool MovingDomain::contains(double t, const Vec& x) const {
    if (t < t0 - 1e-12 || t > t1 + 1e-12)
        throw std::domain_error("contains: t outside the domain time span");
    if (!bbox.contains(x)) return false;
    if (analytic_inside) return analytic_inside(t, x);
    if (inside_core(x)) return true;
    int yes = 0, no = 0;
    for (const GraphPatch& p : patches) {
        if (t < p.t0 || t > p.t1) continue;
        Vec xl = p.to_local(x);
        if (!p.covers(xl)) continue;
        if (xl[p.dim - 1] < p.psi(t, xl)) ++yes;
        else ++no;
    }
    return yes > no;
}

std::vector<Vec> MovingDomain::boundary_samples(double t, double pitch) const {
    std::vector<Vec> out;
    if (analytic_boundary) {
        analytic_boundary(t, pitch, out);
        return out;
    }
    // Fallback: sample every patch graph over its rectangle.
    for (const GraphPatch& p : patches) {
        if (t < p.t0 || t > p.t1) continue;
        double w = p.rect.hi[0] - p.rect.lo[0];
        int n = std::max(2, static_cast<int>(std::ceil(w / pitch)));
        for (int i = 0; i <= n; ++i) {
            Vec u{};
            u[0] = p.rect.lo[0] + w * i / n;
            double v = p.psi(t, u);
            if (v < p.box_bottom || v > p.box_top) continue;
            Vec loc = u;
            loc[p.dim - 1] = v;
            out.push_back(p.to_global(loc));
        }
    }
    return out;
}

namespace {

// Bucketed nearest-neighbor over a fixed point cloud.
struct NnGrid {
    Vec lo{};
    double cell = 1;
    int nx = 1, ny = 1;
    std::vector<std::vector<int>> buckets;
    const std::vector<Vec>* pts = nullptr;

    void build(const std::vector<Vec>& p, const Box& box, double cell_size) {
        pts = &p;
        cell = cell_size;
        lo = box.lo;
        nx = std::max(1, static_cast<int>(std::ceil(box.width(0) / cell)));
        ny = std::max(1, static_cast<int>(std::ceil(box.width(1) / cell)));
        buckets.assign(static_cast<std::size_t>(nx) * ny, {});
        for (int i = 0; i < static_cast<int>(p.size()); ++i) {
            int cx = std::clamp(static_cast<int>((p[i][0] - lo[0]) / cell), 0, nx - 1);
            int cy = std::clamp(static_cast<int>((p[i][1] - lo[1]) / cell), 0, ny - 1);
            buckets[static_cast<std::size_t>(cy) * nx + cx].push_back(i);
        }
    }

    double nearest(const Vec& x) const {
        int cx = std::clamp(static_cast<int>((x[0] - lo[0]) / cell), 0, nx - 1);
        int cy = std::clamp(static_cast<int>((x[1] - lo[1]) / cell), 0, ny - 1);
        double best = std::numeric_limits<double>::infinity();
        int max_ring = std::max(nx, ny);
        for (int ring = 0; ring <= max_ring; ++ring) {
            if (best < (ring - 1) * cell && ring > 0) break;
            bool any = false;
            for (int dy = -ring; dy <= ring; ++dy) {
                for (int dx = -ring; dx <= ring; ++dx) {
                    if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
                    int bx = cx + dx, by = cy + dy;
                    if (bx < 0 || bx >= nx || by < 0 || by >= ny) continue;
                    any = true;
                    for (int i : buckets[static_cast<std::size_t>(by) * nx + bx]) {
                        const Vec& p = (*pts)[i];
                        double d = std::hypot(p[0] - x[0], p[1] - x[1]);
                        best = std::min(best, d);
                    }
                }
            }
            if (!any && ring > 0 && best < std::numeric_limits<double>::infinity()) break;
        }
        return best;
    }
};

}  // namespace

std::shared_ptr<MovingDomain::DistSlice> MovingDomain::build_slice(double t) const {
    double p = resolution();
    auto s = std::make_shared<DistSlice>();
    s->t = t;
    s->pitch = p;
    s->origin = bbox.lo;
    s->nx = static_cast<int>(std::ceil(bbox.width(0) / p)) + 1;
    s->ny = static_cast<int>(std::ceil(bbox.width(1) / p)) + 1;
    s->d.assign(static_cast<std::size_t>(s->nx) * s->ny, 0.0f);

    auto samples = boundary_samples(t, p * 0.75);
    NnGrid nn;
    nn.build(samples, bbox, std::max(4 * p, std::max(bbox.width(0), bbox.width(1)) / 64));

    for (int iy = 0; iy < s->ny; ++iy) {
        for (int ix = 0; ix < s->nx; ++ix) {
            Vec x = vec2(bbox.lo[0] + ix * p, bbox.lo[1] + iy * p);
            if (!contains(t, x)) continue;
            s->d[static_cast<std::size_t>(iy) * s->nx + ix] =
                static_cast<float>(nn.nearest(x));
        }
    }
    return s;
}

double MovingDomain::DistSlice::at(const Vec& x) const {
    double fx = (x[0] - origin[0]) / pitch;
    double fy = (x[1] - origin[1]) / pitch;
    int ix = static_cast<int>(std::floor(fx));
    int iy = static_cast<int>(std::floor(fy));
    if (ix < 0 || iy < 0 || ix >= nx - 1 || iy >= ny - 1) return 0.0;
    double ax = fx - ix, ay = fy - iy;
    auto v = [&](int i, int j) { return static_cast<double>(d[static_cast<std::size_t>(j) * nx + i]); };
    return (1 - ax) * (1 - ay) * v(ix, iy) + ax * (1 - ay) * v(ix + 1, iy) +
           (1 - ax) * ay * v(ix, iy + 1) + ax * ay * v(ix + 1, iy + 1);
}

const MovingDomain::DistSlice& MovingDomain::dist_slice(double t) const {
    long long key = std::llround((t - t0) * (1 << 22));
    {
        std::lock_guard<std::mutex> lock(cache_->mu);
        auto it = cache_->slices.find(key);
        if (it != cache_->slices.end()) return *it->second;
    }
    auto s = build_slice(t);
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto [it, ok] = cache_->slices.emplace(key, s);
    return *it->second;
}

double MovingDomain::slice_distance(double t, const Vec& x) const {
    if (!bbox.contains(x)) return 0.0;
    long long key = std::llround((t - t0) * (1 << 22));
    {
        std::lock_guard<std::mutex> lock(cache_->mu);
        auto it = cache_->slices.find(key);
        if (it != cache_->slices.end()) {
            auto s = it->second;
            double v = s->at(x);
            // Near the boundary the lattice zero-extension underestimates;
            // callers accept error up to the sampling pitch.
            return v;
        }
    }
    if (!contains(t, x)) return 0.0;
    auto samples = boundary_samples(t, resolution() * 0.75);
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& s : samples) best = std::min(best, std::hypot(s[0] - x[0], s[1] - x[1]));
    return best;
}

bool MovingDomain::time_independent() const {
    for (const GraphPatch& p : patches)
        if (p.holder_const_time > 0) return false;
    return true;
}

double MovingDomain::min_inradius(int nt_samples) const {
    {
        std::lock_guard<std::mutex> lock(cache_->mu);
        if (cache_->inradius >= 0) return cache_->inradius;
    }
    double r = std::numeric_limits<double>::infinity();
    int nt = time_independent() ? 1 : nt_samples;
    for (int it = 0; it < nt; ++it) {
        double t = nt == 1 ? t0 : t0 + (t1 - t0) * it / (nt - 1);
        const DistSlice& s = dist_slice(t);
        float m = 0;
        for (float v : s.d) m = std::max(m, v);
        r = std::min(r, static_cast<double>(m));
    }
    std::lock_guard<std::mutex> lock(cache_->mu);
    cache_->inradius = r;
    return r;
}

ThetaFit MovingDomain::estimate_theta(const std::vector<double>& eps_grid,
                                      int nt_samples) const {
    if (eps_grid.size() < 3) throw std::invalid_argument("estimate_theta: need >= 3 eps");
    double eps_min = *std::min_element(eps_grid.begin(), eps_grid.end());
    double eps_max = *std::max_element(eps_grid.begin(), eps_grid.end());
    double pf = eps_min / 6.0;

    std::vector<double> area_max(eps_grid.size(), 0.0);
    int nt = time_independent() ? 1 : nt_samples;
    for (int itau = 0; itau < nt; ++itau) {
        double t = nt == 1 ? t0 : t0 + (t1 - t0) * itau / (nt - 1);
        auto samples = boundary_samples(t, pf * 0.5);
        NnGrid nn;
        nn.build(samples, bbox, std::max(4 * pf, std::max(bbox.width(0), bbox.width(1)) / 96));
        const DistSlice& coarse = dist_slice(t);

        int nx = static_cast<int>(std::ceil(bbox.width(0) / pf)) + 1;
        int ny = static_cast<int>(std::ceil(bbox.width(1) / pf)) + 1;
        std::vector<double> area(eps_grid.size(), 0.0);
        double cell = pf * pf;
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                Vec x = vec2(bbox.lo[0] + ix * pf, bbox.lo[1] + iy * pf);
                double dc = coarse.at(x);
                bool near = dc < eps_max + 3 * coarse.pitch;
                if (!near && dc > 0) continue;  // deep interior
                if (!contains(t, x)) continue;
                double d = dc > eps_max + 3 * coarse.pitch ? dc : nn.nearest(x);
                for (std::size_t k = 0; k < eps_grid.size(); ++k)
                    if (d < eps_grid[k]) area[k] += cell;
            }
        }
        for (std::size_t k = 0; k < eps_grid.size(); ++k)
            area_max[k] = std::max(area_max[k], area[k]);
    }

    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < eps_grid.size(); ++k) {
        if (area_max[k] <= 0) continue;
        lx.push_back(std::log(eps_grid[k]));
        ly.push_back(std::log(area_max[k]));
    }
    if (lx.size() < 3) throw std::runtime_error("estimate_theta: fewer than 3 usable eps");
    auto [a, b] = linear_fit(lx, ly);
    return ThetaFit{b, std::exp(a)};
}

ModulusOfContinuity MovingDomain::modulus(double M, double dt_min) const {
    if (M <= 1) throw std::invalid_argument("modulus: require M > 1");
    ModulusOfContinuity m;
    m.M = M;
    m.delta_min = dt_min;
    m.t_span = t1 - t0;
    double worst_alpha = 1, worst_const = 0;
    for (const GraphPatch& p : patches) {
        if (p.holder_const_time > 0) {
            worst_alpha = std::min(worst_alpha, p.alpha);
            worst_const = std::max(worst_const, p.holder_const_time);
        }
    }
    m.alpha = worst_alpha;
    m.l_time = worst_const;
    if (worst_const > 0 && worst_alpha <= 0) {
        // alpha = 0: estimate the modulus from sampled distance differences.
        m.numeric = true;
        const int nlag = 48, ngrid = 20;
        std::vector<double> worst(nlag + 1, 0.0);
        std::vector<const DistSlice*> slices;
        for (int i = 0; i <= nlag; ++i)
            slices.push_back(&dist_slice(t0 + (t1 - t0) * i / nlag));
        for (int lag = 1; lag <= nlag; ++lag) {
            double w = 0;
            for (int i = 0; i + lag <= nlag; ++i) {
                for (int gy = 1; gy < ngrid; ++gy)
                    for (int gx = 1; gx < ngrid; ++gx) {
                        Vec x = vec2(bbox.lo[0] + bbox.width(0) * gx / ngrid,
                                     bbox.lo[1] + bbox.width(1) * gy / ngrid);
                        w = std::max(w, std::abs(slices[i]->at(x) - slices[i + lag]->at(x)));
                    }
            }
            worst[lag] = std::max(worst[lag - 1], w);
        }
        for (int k = 10; k >= 0; --k) {
            double eps = (t1 - t0) * std::pow(0.5, k) * 0.0 + std::pow(2.0, -k);
            int best_lag = 0;
            for (int lag = 1; lag <= nlag; ++lag)
                if (worst[lag] < eps / M) best_lag = lag;
            m.num_eps.push_back(eps);
            m.num_delta.push_back(std::max(dt_min, (t1 - t0) * best_lag / nlag));
        }
    }
    return m;
}

void validate_patches(const MovingDomain& dom) {
    for (std::size_t i = 0; i < dom.patches.size(); ++i) {
        const GraphPatch& p = dom.patches[i];
        // psi must stay inside the chart box (and hence be positive).
        int nu = 33, ns = p.holder_const_time > 0 ? 17 : 1;
        for (int is = 0; is < ns; ++is) {
            double t = p.t0 + (ns > 1 ? (p.t1 - p.t0) * is / (ns - 1) : 0.0);
            for (int iu = 0; iu <= nu; ++iu) {
                Vec u{};
                u[0] = p.rect.lo[0] + (p.rect.hi[0] - p.rect.lo[0]) * iu / nu;
                double v = p.psi(t, u);
                if (!(v > 0) || v <= p.box_bottom || v >= p.box_top)
                    throw std::invalid_argument("patch " + std::to_string(i) +
                                                ": psi leaves the chart box");
            }
        }
        if (p.holder_const_time > 0 && p.sampled_time_quotient() > p.holder_const_time * (1 + 1e-9))
            throw std::invalid_argument("patch " + std::to_string(i) +
                                        ": time Holder quotient exceeds declared constant");
        if (p.sampled_space_quotient() > p.holder_const_space * (1 + 1e-9))
            throw std::invalid_argument("patch " + std::to_string(i) +
                                        ": space Holder quotient exceeds declared constant");
    }
}

// ---------------------------------------------------------------------------
// Builtins
// ---------------------------------------------------------------------------
namespace {

// alpha-Holder wobble on [0,1], range [-1,1]. Smooth sine for alpha >= 1,
// truncated Weierstrass sum otherwise.
struct Wobble {
    double alpha = 1;
    double operator()(double t) const {
        if (alpha >= 1.0) return std::sin(2 * M_PI * t);
        double s = 0, norm = 0;
        for (int k = 0; k <= 6; ++k) {
            double a = std::pow(2.0, -alpha * k);
            s += a * std::cos(std::pow(2.0, k) * 2 * M_PI * t + 0.7 * k);
            norm += a;
        }
        return s / norm;
    }
};

GraphPatch flat_patch(Vec tdir, Vec ndir, Vec trans, double u_lo, double u_hi,
                      double height, double v_lo, double v_hi) {
    GraphPatch p;
    p.dim = 2;
    p.rot = {tdir[0], tdir[1], 0, ndir[0], ndir[1], 0, 0, 0, 1};
    p.trans = trans;
    p.rect.dim = 1;
    p.rect.lo = vec2(u_lo, 0);
    p.rect.hi = vec2(u_hi, 0);
    p.box_bottom = v_lo;
    p.box_top = v_hi;
    p.graph = [height](double, const Vec&) { return height; };
    p.alpha = 1;
    p.beta = 1;
    p.holder_const_time = 0;
    p.holder_const_space = 1e-12;
    return p;
}

// Corner chart: outward diagonal direction nd (unit), graph psi(u) = L - |u|.
GraphPatch corner_patch(Vec q, Vec nd, double L, double u_half, double v_lo) {
    Vec td = vec2(-nd[1], nd[0]);
    GraphPatch p;
    p.dim = 2;
    p.rot = {td[0], td[1], 0, nd[0], nd[1], 0, 0, 0, 1};
    p.trans = vec2(q[0] - L * nd[0], q[1] - L * nd[1]);
    p.rect.dim = 1;
    p.rect.lo = vec2(-u_half, 0);
    p.rect.hi = vec2(u_half, 0);
    p.box_bottom = v_lo;
    p.box_top = L + 0.05;
    p.graph = [L](double, const Vec& u) { return L - std::abs(u[0]); };
    p.alpha = 1;
    p.beta = 1;
    p.holder_const_time = 0;
    p.holder_const_space = 1.0 + 1e-9;
    return p;
}

// Implicit chart: boundary height found by bisection of an inside predicate
// along the local normal line (inside below, outside above in the box).
GraphPatch implicit_patch(Vec tdir, Vec ndir, Vec trans, double u_lo, double u_hi,
                          double v_lo, double v_hi,
                          std::function<bool(double, const Vec&)> inside,
                          double tspan_0, double tspan_1) {
    GraphPatch p;
    p.dim = 2;
    p.rot = {tdir[0], tdir[1], 0, ndir[0], ndir[1], 0, 0, 0, 1};
    p.trans = trans;
    p.rect.dim = 1;
    p.rect.lo = vec2(u_lo, 0);
    p.rect.hi = vec2(u_hi, 0);
    p.box_bottom = v_lo;
    p.box_top = v_hi;
    p.t0 = tspan_0;
    p.t1 = tspan_1;
    GraphPatch probe = p;  // copy of the frame for coordinate transforms
    p.graph = [probe, inside, v_lo, v_hi](double t, const Vec& u) {
        Vec loc = u;
        double lo = v_lo + 1e-9, hi = v_hi - 1e-9;
        loc[1] = lo;
        if (!inside(t, probe.to_global(loc))) return v_lo;  // degenerate
        loc[1] = hi;
        if (inside(t, probe.to_global(loc))) return v_hi;
        for (int it = 0; it < 48; ++it) {
            double mid = 0.5 * (lo + hi);
            loc[1] = mid;
            (inside(t, probe.to_global(loc)) ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    return p;
}

void measure_holder(GraphPatch& p, double alpha, bool time_dep) {
    p.alpha = alpha;
    p.beta = 1;
    p.holder_const_space = p.sampled_space_quotient(96, time_dep ? 9 : 1) * 1.25 + 1e-9;
    p.holder_const_time = time_dep ? p.sampled_time_quotient(24, 48) * 1.25 + 1e-9 : 0.0;
}

MovingDomain make_unit_square() {
    MovingDomain d;
    d.name = "unit-square";
    d.t0 = 0;
    d.t1 = 1;
    d.theta = 1;
    d.bbox = Box{2, vec2(-0.06, -0.06), vec2(1.06, 1.06)};
    d.core = {Box{2, vec2(0.14, 0.14), vec2(0.86, 0.86)}};
    d.analytic_inside = [](double, const Vec& x) {
        return x[0] > 0 && x[0] < 1 && x[1] > 0 && x[1] < 1;
    };
    d.analytic_boundary = [](double, double pitch, std::vector<Vec>& out) {
        int n = std::max(8, static_cast<int>(std::ceil(1.0 / pitch)));
        for (int i = 0; i <= n; ++i) {
            double s = static_cast<double>(i) / n;
            out.push_back(vec2(s, 0));
            out.push_back(vec2(s, 1));
            out.push_back(vec2(0, s));
            out.push_back(vec2(1, s));
        }
    };
    // Sides.
    d.patches.push_back(flat_patch(vec2(1, 0), vec2(0, 1), vec2(0, 0), 0.12, 0.88, 1.0, 0.1, 1.12));
    d.patches.push_back(flat_patch(vec2(1, 0), vec2(0, -1), vec2(0, 1), 0.12, 0.88, 1.0, 0.1, 1.12));
    d.patches.push_back(flat_patch(vec2(0, 1), vec2(1, 0), vec2(0, 0), 0.12, 0.88, 1.0, 0.1, 1.12));
    d.patches.push_back(flat_patch(vec2(0, 1), vec2(-1, 0), vec2(1, 0), 0.12, 0.88, 1.0, 0.1, 1.12));
    // Corners.
    double r2 = std::sqrt(0.5);
    d.patches.push_back(corner_patch(vec2(1, 1), vec2(r2, r2), 0.7, 0.34, 0.2));
    d.patches.push_back(corner_patch(vec2(0, 1), vec2(-r2, r2), 0.7, 0.34, 0.2));
    d.patches.push_back(corner_patch(vec2(0, 0), vec2(-r2, -r2), 0.7, 0.34, 0.2));
    d.patches.push_back(corner_patch(vec2(1, 0), vec2(r2, -r2), 0.7, 0.34, 0.2));
    return d;
}

MovingDomain make_disk() {
    MovingDomain d;
    d.name = "cylinder-disk";
    d.t0 = 0;
    d.t1 = 1;
    d.theta = 1;
    const double R = 0.75;
    d.bbox = Box{2, vec2(-0.8, -0.8), vec2(0.8, 0.8)};
    d.core = {Box{2, vec2(-0.45 * R, -0.45 * R), vec2(0.45 * R, 0.45 * R)}};
    d.analytic_inside = [R](double, const Vec& x) {
        return x[0] * x[0] + x[1] * x[1] < R * R;
    };
    d.analytic_boundary = [R](double, double pitch, std::vector<Vec>& out) {
        int n = std::max(16, static_cast<int>(std::ceil(2 * M_PI * R / pitch)));
        for (int i = 0; i < n; ++i) {
            double a = 2 * M_PI * i / n;
            out.push_back(vec2(R * std::cos(a), R * std::sin(a)));
        }
    };
    for (int k = 0; k < 4; ++k) {
        double a = k * M_PI / 2;
        Vec nd = vec2(std::cos(a), std::sin(a));
        Vec td = vec2(-nd[1], nd[0]);
        GraphPatch p;
        p.dim = 2;
        p.rot = {td[0], td[1], 0, nd[0], nd[1], 0, 0, 0, 1};
        p.trans = vec2(0, 0);
        p.rect.dim = 1;
        p.rect.lo = vec2(-0.75 * R, 0);
        p.rect.hi = vec2(0.75 * R, 0);
        p.box_bottom = -0.5 * R;
        p.box_top = 1.1 * R;
        p.graph = [R](double, const Vec& u) { return std::sqrt(R * R - u[0] * u[0]); };
        p.alpha = 1;
        p.beta = 1;
        p.holder_const_time = 0;
        p.holder_const_space = 1.2;
        d.patches.push_back(p);
    }
    return d;
}

MovingDomain make_moving_cusp(double alpha, double beta) {
    MovingDomain d;
    d.name = "moving-cusp";
    d.t0 = 0;
    d.t1 = 1;
    d.theta = 1;  // Lipschitz except one power cusp
    const double A = 0.15, ytop = 2.0;
    Wobble w{alpha};
    auto c = [A, w](double t) { return A * w(t); };
    auto bfun = [c, beta](double t, double x) {
        return std::pow(std::abs(x - c(t)), beta);
    };
    d.bbox = Box{2, vec2(-1.05, -0.05), vec2(1.05, 2.05)};
    double core_ylo = std::pow(0.7, beta) + 0.1;
    d.core = {Box{2, vec2(-0.55, core_ylo), vec2(0.55, 1.9)}};
    d.analytic_inside = [bfun, ytop](double t, const Vec& x) {
        return x[0] > -1 && x[0] < 1 && x[1] < ytop && x[1] > bfun(t, x[0]);
    };
    d.analytic_boundary = [bfun, c, beta, ytop](double t, double pitch, std::vector<Vec>& out) {
        int n = std::max(16, static_cast<int>(std::ceil(2.0 / pitch)));
        double ct = c(t);
        for (int i = 0; i <= n; ++i) {
            double x = -1 + 2.0 * i / n;
            out.push_back(vec2(x, bfun(t, x)));          // cusp graph
            out.push_back(vec2(x, ytop));                // top
        }
        // Extra cusp samples uniform in height (the graph is steep near the tip).
        int m = std::max(16, static_cast<int>(std::ceil(1.0 / pitch)));
        for (int i = 1; i <= m; ++i) {
            double y = 1.0 * i / m;
            double off = std::pow(y, 1.0 / beta);
            if (ct + off < 1) out.push_back(vec2(ct + off, y));
            if (ct - off > -1) out.push_back(vec2(ct - off, y));
        }
        int nw = std::max(4, static_cast<int>(std::ceil(1.0 / pitch)));
        for (int i = 0; i <= nw; ++i) {
            double ylo_r = bfun(t, 1.0), ylo_l = bfun(t, -1.0);
            double yr = ylo_r + (ytop - ylo_r) * i / nw;
            double yl = ylo_l + (ytop - ylo_l) * i / nw;
            out.push_back(vec2(1, yr));
            out.push_back(vec2(-1, yl));
        }
    };

    // Bottom cusp chart (domain above the curve; local frame flips y).
    {
        GraphPatch p;
        p.dim = 2;
        p.rot = {1, 0, 0, 0, -1, 0, 0, 0, 1};
        p.trans = vec2(0, ytop);
        p.rect.dim = 1;
        p.rect.lo = vec2(-0.85, 0);
        p.rect.hi = vec2(0.85, 0);
        p.box_bottom = 0.12;
        p.box_top = ytop + 0.1;
        p.graph = [bfun, ytop](double t, const Vec& u) { return ytop - bfun(t, u[0]); };
        p.alpha = alpha * beta;  // horizontal alpha-motion of a beta-graph
        p.beta = beta;
        p.holder_const_space = 1.0 + 1e-9;
        p.holder_const_time = std::pow(A * 2.6, beta) * 1.1;
        d.patches.push_back(p);
    }
    // Top and walls.
    d.patches.push_back(flat_patch(vec2(1, 0), vec2(0, 1), vec2(0, 0), -0.85, 0.85, ytop, 1.08, ytop + 0.1));
    d.patches.push_back(flat_patch(vec2(0, 1), vec2(1, 0), vec2(0, 0), 1.3, 1.9, 1.0, 0.3, 1.06));
    d.patches.push_back(flat_patch(vec2(0, 1), vec2(-1, 0), vec2(0, 0), 1.3, 1.9, 1.0, 0.3, 1.06));
    // Top corners.
    double r2 = std::sqrt(0.5);
    d.patches.push_back(corner_patch(vec2(1, ytop), vec2(r2, r2), 0.8, 0.4, 0.2));
    d.patches.push_back(corner_patch(vec2(-1, ytop), vec2(-r2, r2), 0.8, 0.4, 0.2));
    // Wall/cusp junction charts (implicit graphs).
    {
        auto inside = d.analytic_inside;
        double L = 0.85;
        Vec qr = vec2(1.0, 1.0), nr = vec2(r2, -r2);
        d.patches.push_back(implicit_patch(vec2(r2, r2), nr,
                                           vec2(qr[0] - L * nr[0], qr[1] - L * nr[1]),
                                           -0.42, 0.42, 0.15, L + 0.3, inside, 0, 1));
        Vec ql = vec2(-1.0, 1.0), nl = vec2(-r2, -r2);
        d.patches.push_back(implicit_patch(vec2(-r2, r2), nl,
                                           vec2(ql[0] - L * nl[0], ql[1] - L * nl[1]),
                                           -0.42, 0.42, 0.15, L + 0.3, inside, 0, 1));
        measure_holder(d.patches[d.patches.size() - 2], alpha, alpha > 0);
        measure_holder(d.patches[d.patches.size() - 1], alpha, alpha > 0);
    }
    return d;
}

MovingDomain make_star_wobble(double alpha) {
    MovingDomain d;
    d.name = "star-wobble";
    d.t0 = 0;
    d.t1 = 1;
    d.theta = 1;
    const double R0 = 0.75, a = 0.12;
    const int m = 5;
    Wobble w{alpha};
    auto radius = [R0, a, m, w](double t, double phi) {
        return R0 * (1 + a * std::cos(m * phi) * w(t));
    };
    d.bbox = Box{2, vec2(-0.9, -0.9), vec2(0.9, 0.9)};
    d.core = {Box{2, vec2(-0.22, -0.22), vec2(0.22, 0.22)}};
    d.analytic_inside = [radius](double t, const Vec& x) {
        double r = std::hypot(x[0], x[1]);
        if (r < 1e-12) return true;
        return r < radius(t, std::atan2(x[1], x[0]));
    };
    d.analytic_boundary = [radius](double t, double pitch, std::vector<Vec>& out) {
        int n = std::max(32, static_cast<int>(std::ceil(2 * M_PI * 0.9 / pitch)));
        for (int i = 0; i < n; ++i) {
            double phi = 2 * M_PI * i / n;
            double r = radius(t, phi);
            out.push_back(vec2(r * std::cos(phi), r * std::sin(phi)));
        }
    };
    for (int k = 0; k < 8; ++k) {
        double aang = k * M_PI / 4;
        Vec nd = vec2(std::cos(aang), std::sin(aang));
        Vec td = vec2(-nd[1], nd[0]);
        auto p = implicit_patch(td, nd, vec2(0, 0), -0.34, 0.34, -0.3, 0.95,
                                d.analytic_inside, 0, 1);
        measure_holder(p, alpha, alpha > 0);
        d.patches.push_back(p);
    }
    return d;
}

}  // namespace

MovingDomain MovingDomain::builtin(const std::string& spec) {
    std::string name = spec;
    std::vector<double> args;
    auto lp = spec.find('(');
    if (lp != std::string::npos) {
        name = spec.substr(0, lp);
        auto rp = spec.rfind(')');
        std::string list = spec.substr(lp + 1, rp == std::string::npos ? std::string::npos
                                                                       : rp - lp - 1);
        std::size_t pos = 0;
        while (pos < list.size()) {
            auto comma = list.find(',', pos);
            args.push_back(std::stod(list.substr(pos, comma - pos)));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    if (name == "unit-square") return make_unit_square();
    if (name == "cylinder-disk") return make_disk();
    if (name == "moving-cusp") {
        double al = args.size() > 0 ? args[0] : 1.0;
        double be = args.size() > 1 ? args[1] : 0.5;
        if (be <= 0.25 || be > 1) throw std::invalid_argument("moving-cusp: beta in (0.25,1]");
        return make_moving_cusp(al, be);
    }
    if (name == "star-wobble") return make_star_wobble(args.size() > 0 ? args[0] : 0.5);
    throw std::invalid_argument("unknown builtin domain '" + name + "'");
}

MovingDomain MovingDomain::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open domain spec " + path);
    nlohmann::json j;
    in >> j;
    if (j.contains("builtin")) {
        MovingDomain d = builtin(j["builtin"].get<std::string>());
        if (j.contains("time_span")) {
            d.t0 = j["time_span"][0].get<double>();
            d.t1 = j["time_span"][1].get<double>();
        }
        return d;
    }
    MovingDomain d;
    d.dim = j.value("dimension", 2);
    if (d.dim != 2) throw std::invalid_argument("only dimension 2 domain specs are supported");
    d.t0 = j["time_span"][0].get<double>();
    d.t1 = j["time_span"][1].get<double>();
    d.theta = j.value("theta", 1.0);
    auto bb = j.at("bbox");
    d.bbox = Box{2, vec2(bb["lo"][0], bb["lo"][1]), vec2(bb["hi"][0], bb["hi"][1])};
    for (const auto& cj : j.value("core", nlohmann::json::array()))
        d.core.push_back(Box{2, vec2(cj["lo"][0], cj["lo"][1]), vec2(cj["hi"][0], cj["hi"][1])});
    for (const auto& pj : j.at("patches")) {
        GraphPatch p;
        p.dim = 2;
        auto r = pj.at("rotation");
        p.rot = {r[0], r[1], 0, r[2], r[3], 0, 0, 0, 1};
        p.trans = vec2(pj.at("translation")[0], pj.at("translation")[1]);
        p.rect.dim = 1;
        p.rect.lo = vec2(pj.at("rect")[0], 0);
        p.rect.hi = vec2(pj.at("rect")[1], 0);
        p.box_bottom = pj.at("box")[0];
        p.box_top = pj.at("box")[1];
        p.t0 = pj.value("time_interval", nlohmann::json::array({d.t0, d.t1}))[0];
        p.t1 = pj.value("time_interval", nlohmann::json::array({d.t0, d.t1}))[1];
        Expression e = parse_expression(pj.at("graph").get<std::string>());
        p.graph = [e](double t, const Vec& u) { return e.eval(t, u); };
        p.alpha = pj.value("alpha", 1.0);
        p.beta = pj.value("beta", 1.0);
        p.holder_const_time = pj.value("holder_const_time", 0.0);
        p.holder_const_space = pj.value("holder_const_space", 1.0);
        d.patches.push_back(p);
    }
    validate_patches(d);
    return d;
}

}  // namespace divtime
