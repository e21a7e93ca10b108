#include "divtime/assembly.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace divtime {

namespace {
inline double bicubic_on(const std::vector<double>& v, const GridSpec& g, const Vec& x) {
    const int nx = g.nx[0], ny = g.nx[1];
    double fx = (x[0] - g.box.lo[0]) / g.h(0);
    double fy = (x[1] - g.box.lo[1]) / g.h(1);
    int ix = std::clamp(static_cast<int>(std::floor(fx)), 0, nx - 1);
    int iy = std::clamp(static_cast<int>(std::floor(fy)), 0, ny - 1);
    double ax = fx - ix, ay = fy - iy;
    auto node = [&](int i, int j) {
        i = std::clamp(i, 0, nx);
        j = std::clamp(j, 0, ny);
        return v[static_cast<std::size_t>(j) * (nx + 1) + i];
    };
    auto cr = [](double a, double fm1, double f0, double f1, double f2) {
        return f0 + 0.5 * a * (f1 - fm1 + a * (2 * fm1 - 5 * f0 + 4 * f1 - f2 +
                                               a * (3 * (f0 - f1) + f2 - fm1)));
    };
    double rows[4];
    for (int j = -1; j <= 2; ++j)
        rows[j + 1] =
            cr(ax, node(ix - 1, iy + j), node(ix, iy + j), node(ix + 1, iy + j), node(ix + 2, iy + j));
    return cr(ay, rows[0], rows[1], rows[2], rows[3]);
}
}  // namespace

double AssembledOperator::BPrime::value(int comp, int it, const Vec& x) const {
    const auto& arr = comp == 0 ? bx[it] : by[it];
    return bicubic_on(arr, sub, x);
}

double AssembledOperator::BPrime::f0_value(int it, const Vec& x) const {
    return bicubic_on(f0[it], sub, x);
}

// ---------------------------------------------------------------------------
// Collar
// ---------------------------------------------------------------------------
double CollarPatch::mu(const Vec& xloc) const {
    const GraphPatch& p = op.patch();
    double w = lateral_margin;
    double u = xloc[0];
    double m = smooth_step((u - p.rect.lo[0]) / w) * smooth_step((p.rect.hi[0] - u) / w);
    if (m == 0) return 0;
    double v = xloc[p.dim - 1];
    m *= smooth_step((v - p.box_bottom) / (0.5 * delta));
    if (v > p.box_top) return 0;
    return m;
}

void AssembledOperator::build_collar() {
    // Collar scale: limited by the shallowest chart depth and the inradius.
    double depth = 1e300;
    for (const GraphPatch& p : dom_->patches) {
        double pmin = 1e300;
        int nt = p.holder_const_time > 0 ? 9 : 1;
        for (int is = 0; is < nt; ++is) {
            double t = p.t0 + (nt > 1 ? (p.t1 - p.t0) * is / (nt - 1) : 0.0);
            for (int iu = 0; iu <= 32; ++iu) {
                Vec u{};
                u[0] = p.rect.lo[0] + (p.rect.hi[0] - p.rect.lo[0]) * iu / 32.0;
                pmin = std::min(pmin, p.psi(t, u));
            }
        }
        depth = std::min(depth, pmin - p.box_bottom);
    }
    double delta = opt_.delta > 0 ? opt_.delta
                                  : std::min(depth / 17.0, dom_->min_inradius() / 8.0);
    delta_ = delta;
    double step = delta_ / (2 * opt_.sub_per_delta);
    for (const GraphPatch& p : dom_->patches) {
        CollarPatch cp(p, step, delta_);
        cp.lateral_margin = 0.08 * (p.rect.hi[0] - p.rect.lo[0]);
        collar_.push_back(cp);
    }
}

double AssembledOperator::eta(int i, const Vec& x_global) const {
    Vec xl = collar_[i].op.patch().to_local(x_global);
    double mi = collar_[i].mu(xl);
    if (mi == 0) return 0;
    double s = 0;
    for (const CollarPatch& cp : collar_) s += cp.mu(cp.op.patch().to_local(x_global));
    return mi / s;
}

// ---------------------------------------------------------------------------
// Canonical bump fields for the interior stage: B_{Q(0,delta)} applied to the
// neighbor bumps, on a local lattice, translated wherever needed.
// ---------------------------------------------------------------------------
struct AssembledOperator::CanonicalBumpField {
    double delta = 0, pitch = 0, r_bump = 0;
    int n = 0;  // lattice nodes per axis
    Vec origin{};
    // offset index o = (oy+1)*3 + (ox+1); per offset, two components
    std::array<std::vector<double>, 9> wx, wy;
    std::array<double, 9> bump_norm{};

    // evaluates B_{Q(z,delta)}(b centered at z + off*delta) at x, given the
    // discrete normalization of that bump
    Vec eval(const Vec& z, int ox, int oy, const Vec& x, double norm_scale) const {
        Vec loc = vec2(x[0] - z[0], x[1] - z[1]);
        if (std::abs(loc[0]) > -origin[0] - 1e-12 || std::abs(loc[1]) > -origin[1] - 1e-12)
            return Vec{};
        int o = (oy + 1) * 3 + (ox + 1);
        GridSpec fake;
        fake.dim = 2;
        fake.nx = {n - 1, n - 1, 1};
        fake.box = Box{2, origin, vec2(-origin[0], -origin[1])};
        double sx = bicubic_on(wx[o], fake, loc);
        double sy = bicubic_on(wy[o], fake, loc);
        double s = norm_scale / bump_norm[o];
        return vec2(sx * s, sy * s);
    }

    static std::shared_ptr<CanonicalBumpField> build(double delta, double pitch);
};

std::shared_ptr<AssembledOperator::CanonicalBumpField>
AssembledOperator::CanonicalBumpField::build(double delta, double pitch) {
    auto cf = std::make_shared<CanonicalBumpField>();
    cf->delta = delta;
    cf->pitch = pitch;
    cf->r_bump = 0.45 * delta;
    double ext = 1.7 * delta;
    cf->n = 2 * static_cast<int>(std::ceil(ext / pitch)) + 1;
    cf->origin = vec2(-std::ceil(ext / pitch) * pitch, -std::ceil(ext / pitch) * pitch);

    Cube q{vec2(0, 0), delta};
    for (int oy = -1; oy <= 1; ++oy)
        for (int ox = -1; ox <= 1; ++ox) {
            int o = (oy + 1) * 3 + (ox + 1);
            Vec cb = vec2(ox * delta, oy * delta);
            auto bumpfn = [&](const Vec& y) {
                double r2 = 0;
                r2 += (y[0] - cb[0]) * (y[0] - cb[0]);
                r2 += (y[1] - cb[1]) * (y[1] - cb[1]);
                return bump_profile(r2 / (cf->r_bump * cf->r_bump));
            };
            // analytic mass of the raw profile (for rescaling to discrete norms)
            const Quad1D& gq = gauss_legendre(48);
            double mass = 0;
            for (std::size_t a = 0; a < gq.x.size(); ++a) {
                double r = cf->r_bump * 0.5 * (1 + gq.x[a]);
                mass += 0.5 * cf->r_bump * gq.w[a] * 2 * M_PI * r *
                        bump_profile(r * r / (cf->r_bump * cf->r_bump));
            }
            cf->bump_norm[o] = mass;  // integral of the unnormalized profile

            PolarOpts po;
            po.nphi = 48;
            po.step = delta / 16;
            po.support = Box{2, vec2(cb[0] - cf->r_bump, cb[1] - cf->r_bump),
                             vec2(cb[0] + cf->r_bump, cb[1] + cf->r_bump)};
            cf->wx[o].assign(static_cast<std::size_t>(cf->n) * cf->n, 0.0);
            cf->wy[o].assign(static_cast<std::size_t>(cf->n) * cf->n, 0.0);
            parallel_for(cf->n, [&](std::size_t iy) {
                for (int ix = 0; ix < cf->n; ++ix) {
                    Vec x = vec2(cf->origin[0] + ix * cf->pitch, cf->origin[1] + iy * cf->pitch);
                    Vec v = bogovskij_cube_polar(q, bumpfn, x, po);
                    cf->wx[o][iy * cf->n + ix] = v[0];
                    cf->wy[o][iy * cf->n + ix] = v[1];
                }
            });
        }
    return cf;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------
AssembledOperator::AssembledOperator(const MovingDomain& dom, const GridSpec& grid, Options opt)
    : dom_(&dom), grid_(grid), opt_(opt) {
    if (dom.dim != 2) throw std::invalid_argument("assembly: 2-D domains only");
    dom.set_resolution(0.5 * std::min(grid.h(0), grid.h(1)));
    build_collar();

    slabs_ = SlabComplex::build(dom, delta_, 2.9 * delta_);

    double r_min = opt_.r_min > 0 ? opt_.r_min : 2 * std::max(grid.h(0), grid.h(1));
    cover_ = CylinderCover::build(dom, grid, opt_.M, opt_.Mp, r_min);

    // internal subgrid
    double pitch = delta_ / opt_.sub_per_delta;
    int nsx = std::min(420, static_cast<int>(std::ceil(dom.bbox.width(0) / pitch)));
    int nsy = std::min(420, static_cast<int>(std::ceil(dom.bbox.width(1) / pitch)));
    sub_ = grid_;
    sub_.nx = {nsx, nsy, 1};
    sub_.box = dom.bbox;

    wfields_ = CanonicalBumpField::build(delta_, delta_ / opt_.sub_per_delta);
    check_geometry();
}

void AssembledOperator::check_geometry() const {
    // Xi must sit inside {d > 4 delta}: sample cube corners of every slab.
    for (int s = 0; s < slabs_.n_slabs; ++s) {
        if (slabs_.slabs[s].empty) continue;
        double t0 = std::max(dom_->t0, slabs_.t_begin + (s - 0.5) * slabs_.delta);
        double t1 = std::min(dom_->t1, slabs_.t_begin + (s + 1.5) * slabs_.delta);
        for (double t : {t0, 0.5 * (t0 + t1), t1}) {
            const auto& ds = dom_->dist_slice(t);
            for (const Vec& z : slabs_.slabs[s].cubes.centers) {
                for (int cx = -1; cx <= 1; cx += 2)
                    for (int cy = -1; cy <= 1; cy += 2) {
                        Vec y = vec2(z[0] + cx * slabs_.delta, z[1] + cy * slabs_.delta);
                        if (ds.at(y) <= 4 * delta_ - 2 * ds.pitch)
                            throw std::runtime_error(
                                "assembly: interior slab violates the 4-delta separation");
                    }
            }
        }
    }
    // Near the boundary the collar partition must resolve to phi*eta = 1.
    for (int it = 0; it <= 2; ++it) {
        double t = dom_->t0 + (dom_->t1 - dom_->t0) * it / 2.0;
        auto samples = dom_->boundary_samples(t, 8 * dom_->resolution());
        for (const Vec& bs : samples) {
            // pull the sample slightly inward along the distance gradient
            Vec x = bs;
            bool ok = false;
            for (const CollarPatch& cp : collar_) {
                Vec xl = cp.op.patch().to_local(x);
                if (!cp.op.patch().covers_lateral(xl, -2 * cp.lateral_margin)) continue;
                if (xl[1] <= cp.op.patch().box_bottom || xl[1] >= cp.op.patch().box_top)
                    continue;
                ok = true;
            }
            if (!ok)
                throw std::runtime_error("assembly: boundary point not covered by any chart");
        }
    }
}

// ---------------------------------------------------------------------------
// B'
// ---------------------------------------------------------------------------
AssembledOperator::PatchSlice AssembledOperator::patch_integral(int ip, int it,
                                                                const ScalarField& f) const {
    const CollarPatch& cp = collar_[ip];
    const GraphPatch& p = cp.op.patch();
    double t = grid_.time(it);
    PatchSlice ps;
    double pitch = delta_ / opt_.sub_per_delta;
    ps.u0 = p.rect.lo[0];
    ps.v0 = p.box_bottom;
    ps.du = pitch;
    ps.dv = pitch;
    ps.nu = static_cast<int>(std::ceil((p.rect.hi[0] - p.rect.lo[0]) / pitch)) + 1;
    ps.nv = static_cast<int>(std::ceil((p.box_top - p.box_bottom) / pitch)) + 1;
    ps.g.assign(static_cast<std::size_t>(ps.nu) * ps.nv, 0.0);

    parallel_for(ps.nu, [&](std::size_t iu) {
        Vec u{};
        u[0] = ps.u0 + iu * ps.du;
        double psi = p.psi(t, u);
        double vtop = std::min(psi, p.box_top);
        auto integrand = [&](double s) {
            Vec loc = u;
            loc[1] = s;
            Vec xg = p.to_global(loc);
            double e = this->eta(ip, xg);
            if (e == 0) return 0.0;
            return e * f.value(it, xg);
        };
        // cumulative Simpson from the graph downward
        double acc = 0;
        int kv_top = std::min(ps.nv - 1, static_cast<int>(std::floor((vtop - ps.v0) / ps.dv)));
        // partial cell [v_k, vtop]
        std::vector<double> col(ps.nv, 0.0);
        for (int k = ps.nv - 1; k > kv_top; --k) col[k] = 0.0;
        if (kv_top >= 0) {
            double vk = ps.v0 + kv_top * ps.dv;
            double hseg = vtop - vk;
            if (hseg > 1e-14)
                acc += hseg / 6.0 *
                       (integrand(vk) + 4 * integrand(vk + hseg / 2) + integrand(vtop));
            col[kv_top] = acc;
            for (int k = kv_top - 1; k >= 0; --k) {
                double va = ps.v0 + k * ps.dv, vb = va + ps.dv;
                acc += ps.dv / 6.0 *
                       (integrand(va) + 4 * integrand(0.5 * (va + vb)) + integrand(vb));
                col[k] = acc;
            }
        }
        for (int k = 0; k < ps.nv; ++k) ps.g[static_cast<std::size_t>(k) * ps.nu + iu] = col[k];
    });
    return ps;
}

double AssembledOperator::PatchSlice::value(double u, double v) const {
    double fu = (u - u0) / du, fv = (v - v0) / dv;
    int iu = std::clamp(static_cast<int>(std::floor(fu)), 0, nu - 2);
    int iv = std::clamp(static_cast<int>(std::floor(fv)), 0, nv - 2);
    double au = fu - iu, av = fv - iv;
    auto g0 = [&](int a, int b) {
        a = std::clamp(a, 0, nu - 1);
        b = std::clamp(b, 0, nv - 1);
        return g[static_cast<std::size_t>(b) * nu + a];
    };
    return (1 - au) * (1 - av) * g0(iu, iv) + au * (1 - av) * g0(iu + 1, iv) +
           (1 - au) * av * g0(iu, iv + 1) + au * av * g0(iu + 1, iv + 1);
}

std::shared_ptr<AssembledOperator::BPrime> AssembledOperator::apply_bprime(
    const ScalarField& f) const {
    auto bp = std::make_shared<BPrime>();
    bp->sub = sub_;
    int nt = grid_.nt;
    bp->bx.assign(nt + 1, {});
    bp->by.assign(nt + 1, {});
    bp->f0.assign(nt + 1, {});
    std::size_t nn = sub_.slice_nodes();

    for (int it = 0; it <= nt; ++it) {
        double t = grid_.time(it);
        // 1. chart integrals E_i
        std::vector<PatchSlice> E(collar_.size());
        for (std::size_t ip = 0; ip < collar_.size(); ++ip)
            E[ip] = patch_integral(static_cast<int>(ip), it, f);

        // 2. f0 and the boundary part of B' on the subgrid
        std::vector<double>&fx = bp->bx[it], &fy = bp->by[it], &f0 = bp->f0[it];
        fx.assign(nn, 0.0);
        fy.assign(nn, 0.0);
        f0.assign(nn, 0.0);
        const auto& ds = dom_->dist_slice(t);

        parallel_for(sub_.nx[1] + 1, [&](std::size_t iy) {
            for (int ix = 0; ix <= sub_.nx[0]; ++ix) {
                Vec x = sub_.node(ix, static_cast<int>(iy));
                std::size_t idx = iy * (sub_.nx[0] + 1) + ix;
                if (ds.at(x) <= 0 && !dom_->contains(t, x)) continue;
                double fv = f.value(it, x);
                double phi_eta = 0, grad_term = 0;
                double ex = 0, ey = 0;
                for (std::size_t ip = 0; ip < collar_.size(); ++ip) {
                    const CollarPatch& cp = collar_[ip];
                    const GraphPatch& pp = cp.op.patch();
                    Vec xl = pp.to_local(x);
                    double e = eta(ip, x);
                    double gval = 0;
                    bool need_g = cp.mu(xl) > 0;
                    if (!need_g) continue;
                    gval = E[ip].value(xl[0], xl[1]);
                    double phi = cp.phi_local(xl[1]);
                    double dphi = cp.phi_local_d(xl[1]);
                    phi_eta += phi * e;
                    // E_i = -G * n; grad phi_i = phi' * n  =>  grad phi . E = -phi' G
                    grad_term += -dphi * gval;
                    Vec nd = pp.normal_dir();
                    ex += phi * (-gval) * nd[0];
                    ey += phi * (-gval) * nd[1];
                }
                f0[idx] = fv * (1.0 - phi_eta) - grad_term;
                fx[idx] = ex;
                fy[idx] = ey;
            }
        });

        // 3. project the interior argument to lattice mean zero on the
        //    dominant slab and check support
        int jmain = slabs_.slab_of(t);
        const auto& slab = slabs_.slabs[jmain - 1];
        if (slab.empty) throw std::runtime_error("assembly: empty interior slab");
        auto f0_interp = [&](const Vec& x) { return bicubic_on(f0, sub_, x); };
        std::vector<double> masses(slab.cubes.size());
        parallel_for(masses.size(), [&](std::size_t i) {
            masses[i] = slab.family->mass(static_cast<int>(i), f0_interp);
        });
        double m = tree_sum(masses);
        for (int iy = 0; iy <= sub_.nx[1]; ++iy)
            for (int ix = 0; ix <= sub_.nx[0]; ++ix) {
                Vec x = sub_.node(ix, iy);
                double b = slab.family->bump(0, x);
                if (b != 0) f0[static_cast<std::size_t>(iy) * (sub_.nx[0] + 1) + ix] -= m * b;
            }
        bp->worst_f0_mean = std::max(bp->worst_f0_mean, std::abs(m));

        // 4. interior operator on the subgrid, accumulated per cube
        for (int js : slabs_.active(t)) {
            double w = slabs_.eta(js, t);
            if (w == 0) continue;
            const auto& sl = slabs_.slabs[js - 1];
            if (sl.empty)
                throw std::runtime_error("assembly: active slab without cubes");
            ChainDecomposition dec = ChainDecomposition::compute(
                sl.cubes, *sl.family, f0_interp, opt_.mean_tol);
            int ncube = sl.cubes.size();
            double pitch = sub_.h(0);
            double win = 1.7 * delta_;
            int wn = static_cast<int>(std::ceil(win / pitch));

            struct Buf {
                int ix0, iy0, n;
                std::vector<double> vx, vy;
            };
            std::vector<Buf> bufs(ncube);
            parallel_for(ncube, [&](std::size_t ci) {
                const Vec& z = sl.cubes.centers[ci];
                Buf& b = bufs[ci];
                b.ix0 = std::max(0, static_cast<int>((z[0] - sub_.box.lo[0]) / pitch) - wn);
                b.iy0 = std::max(0, static_cast<int>((z[1] - sub_.box.lo[1]) / pitch) - wn);
                b.n = 2 * wn + 2;
                b.vx.assign(static_cast<std::size_t>(b.n) * b.n, 0.0);
                b.vy.assign(static_cast<std::size_t>(b.n) * b.n, 0.0);

                // data part: B_{Q_i}(f0 sigma_i)
                auto gi = [&](const Vec& y) {
                    double s = sl.family->sigma(static_cast<int>(ci), y);
                    return s == 0 ? 0.0 : s * bicubic_on(f0, sub_, y);
                };
                Cube q{z, delta_};
                PolarOpts po;
                po.nphi = 20;
                po.step = delta_ / opt_.sub_per_delta;
                po.support = Box{2, vec2(z[0] - 0.75 * delta_, z[1] - 0.75 * delta_),
                                 vec2(z[0] + 0.75 * delta_, z[1] + 0.75 * delta_)};
                auto coefs = dec.bump_coefs(sl.cubes, static_cast<int>(ci));
                for (int oy = 0; oy < b.n; ++oy)
                    for (int ox = 0; ox < b.n; ++ox) {
                        int gx = b.ix0 + ox, gy = b.iy0 + oy;
                        if (gx > sub_.nx[0] || gy > sub_.nx[1]) continue;
                        Vec x = sub_.node(gx, gy);
                        if (std::abs(x[0] - z[0]) > win + pitch ||
                            std::abs(x[1] - z[1]) > win + pitch)
                            continue;
                        Vec val{};
                        if (std::abs(x[0] - z[0]) < 1.35 * delta_ &&
                            std::abs(x[1] - z[1]) < 1.35 * delta_)
                            val = bogovskij_cube_polar(q, gi, x, po);
                        for (const auto& [mcube, c] : coefs) {
                            Vec zo = sl.cubes.centers[mcube];
                            int oxs = static_cast<int>(std::llround((zo[0] - z[0]) / delta_));
                            int oys = static_cast<int>(std::llround((zo[1] - z[1]) / delta_));
                            if (std::abs(oxs) > 1 || std::abs(oys) > 1)
                                throw std::runtime_error("assembly: non-neighbor bump transfer");
                            Vec wv = wfields_->eval(z, oxs, oys, x, c);
                            val[0] += wv[0];
                            val[1] += wv[1];
                        }
                        b.vx[static_cast<std::size_t>(oy) * b.n + ox] += val[0];
                        b.vy[static_cast<std::size_t>(oy) * b.n + ox] += val[1];
                    }
            });
            for (int ci = 0; ci < ncube; ++ci) {
                const Buf& b = bufs[ci];
                for (int oy = 0; oy < b.n; ++oy)
                    for (int ox = 0; ox < b.n; ++ox) {
                        int gx = b.ix0 + ox, gy = b.iy0 + oy;
                        if (gx > sub_.nx[0] || gy > sub_.nx[1]) continue;
                        std::size_t idx = static_cast<std::size_t>(gy) * (sub_.nx[0] + 1) + gx;
                        fx[idx] += w * b.vx[static_cast<std::size_t>(oy) * b.n + ox];
                        fy[idx] += w * b.vy[static_cast<std::size_t>(oy) * b.n + ox];
                    }
            }
        }
    }
    return bp;
}

VectorField AssembledOperator::bprime_field(const BPrime& bp) const {
    VectorField out(grid_);
    for (int it = 0; it <= grid_.nt; ++it)
        for (int iy = 0; iy <= grid_.nx[1]; ++iy)
            for (int ix = 0; ix <= grid_.nx[0]; ++ix) {
                Vec x = grid_.node(ix, iy);
                out.comp[0].at(it, ix, iy) = bp.value(0, it, x);
                out.comp[1].at(it, ix, iy) = bp.value(1, it, x);
            }
    return out;
}

double AssembledOperator::f_piece(const BPrime& bp, const ScalarField& f, int j, int it,
                                  const Vec& x) const {
    double t = grid_.time(it);
    auto chi = cover_.chi(j, t, x);
    if (chi.val == 0 && chi.grad[0] == 0 && chi.grad[1] == 0) return 0.0;
    double v = chi.val * f.value(it, x);
    v += chi.grad[0] * bp.value(0, it, x) + chi.grad[1] * bp.value(1, it, x);
    return v;
}

VectorField AssembledOperator::apply(const ScalarField& f) const {
    std::shared_ptr<BPrime> bp;
    return apply(f, bp);
}

VectorField AssembledOperator::apply(const ScalarField& f, std::shared_ptr<BPrime>& bp_out) const {
    bp_out = apply_bprime(f);
    const BPrime& bp = *bp_out;
    VectorField out(grid_);
    double h = std::min(grid_.h(0), grid_.h(1));
    double fscale = f.max_abs() + 1e-300;

    for (int it = 0; it <= grid_.nt; ++it) {
        double t = grid_.time(it);
        const auto& act = cover_.active_at_time(it);

        struct Buf {
            int ix0, iy0, nx, ny;
            std::vector<double> vx, vy;
            bool used = false;
        };
        std::vector<Buf> bufs(act.size());

        parallel_for(act.size(), [&](std::size_t k) {
            int j = act[k];
            const WhitneyCylinder& c = cover_.cyl[j];
            Vec cc = c.center();
            double reach = 1.3 * c.r + h;

            // prune: probe |f_j| on a coarse lattice
            double probe = 0;
            for (int a = -2; a <= 2; ++a)
                for (int b = -2; b <= 2; ++b) {
                    Vec y = vec2(cc[0] + a * 0.55 * c.r, cc[1] + b * 0.55 * c.r);
                    probe = std::max(probe, std::abs(f_piece(bp, f, j, it, y)));
                }
            if (probe < 1e-13 * fscale) return;

            Buf& bf = bufs[k];
            bf.used = true;
            bf.ix0 = std::max(0, static_cast<int>(std::floor((cc[0] - reach - grid_.box.lo[0]) /
                                                             grid_.h(0))));
            bf.iy0 = std::max(0, static_cast<int>(std::floor((cc[1] - reach - grid_.box.lo[1]) /
                                                             grid_.h(1))));
            int ix1 = std::min(grid_.nx[0],
                               static_cast<int>(std::ceil((cc[0] + reach - grid_.box.lo[0]) /
                                                          grid_.h(0))));
            int iy1 = std::min(grid_.nx[1],
                               static_cast<int>(std::ceil((cc[1] + reach - grid_.box.lo[1]) /
                                                          grid_.h(1))));
            bf.nx = ix1 - bf.ix0 + 1;
            bf.ny = iy1 - bf.iy0 + 1;
            if (bf.nx <= 0 || bf.ny <= 0) {
                bf.used = false;
                return;
            }
            bf.vx.assign(static_cast<std::size_t>(bf.nx) * bf.ny, 0.0);
            bf.vy.assign(static_cast<std::size_t>(bf.ny) * bf.nx, 0.0);

            Cube q{cc, c.r / 2};
            PolarOpts po;
            po.nphi = c.r > 16 * h ? 32 : 20;
            po.step = std::clamp(c.r / 24, h / 2, h);
            po.support = Box{2, vec2(cc[0] - 1.3 * c.r, cc[1] - 1.3 * c.r),
                             vec2(cc[0] + 1.3 * c.r, cc[1] + 1.3 * c.r)};
            auto fj = [&](const Vec& y) { return f_piece(bp, f, j, it, y); };
            for (int oy = 0; oy < bf.ny; ++oy)
                for (int ox = 0; ox < bf.nx; ++ox) {
                    Vec x = grid_.node(bf.ix0 + ox, bf.iy0 + oy);
                    Vec v = bogovskij_cube_polar(q, fj, x, po);
                    bf.vx[static_cast<std::size_t>(oy) * bf.nx + ox] = v[0];
                    bf.vy[static_cast<std::size_t>(oy) * bf.nx + ox] = v[1];
                }
        });

        for (std::size_t k = 0; k < act.size(); ++k) {
            const Buf& bf = bufs[k];
            if (!bf.used) continue;
            for (int oy = 0; oy < bf.ny; ++oy)
                for (int ox = 0; ox < bf.nx; ++ox) {
                    out.comp[0].at(it, bf.ix0 + ox, bf.iy0 + oy) +=
                        bf.vx[static_cast<std::size_t>(oy) * bf.nx + ox];
                    out.comp[1].at(it, bf.ix0 + ox, bf.iy0 + oy) +=
                        bf.vy[static_cast<std::size_t>(oy) * bf.nx + ox];
                }
        }
    }
    return out;
}

double AssembledOperator::pairing(const VectorField& a, const VectorField& b) const {
    std::vector<double> per_t(grid_.nt + 1);
    for (int it = 0; it <= grid_.nt; ++it) {
        per_t[it] = integrate_slice(grid_, *dom_, it, [&](const Vec& x) {
            double s = 0;
            for (int d = 0; d < grid_.dim; ++d)
                s += a.comp[d].interp(it, x) * b.comp[d].interp(it, x);
            return s;
        });
        if (it == 0 || it == grid_.nt) per_t[it] *= 0.5;
    }
    return tree_sum(per_t) * grid_.dt();
}

}  // namespace divtime
