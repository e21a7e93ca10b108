#include "divtime/chainop.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace divtime {

CubeComplex CubeComplex::build(int dim, double delta, std::vector<Vec> centers) {
    CubeComplex cx;
    cx.dim = dim;
    cx.delta = delta;
    cx.centers = std::move(centers);
    int n = cx.size();
    if (n == 0) throw std::invalid_argument("CubeComplex: empty");

    double rthr = std::sqrt(static_cast<double>(dim)) * delta * (1 + 1e-9);
    cx.nbrs.assign(n, {});
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d = 0;
            for (int d2 = 0; d2 < dim; ++d2) {
                double u = cx.centers[i][d2] - cx.centers[j][d2];
                d += u * u;
            }
            if (std::sqrt(d) <= rthr) {
                cx.nbrs[i].push_back(j);
                cx.nbrs[j].push_back(i);
            }
        }
    for (auto& v : cx.nbrs) std::sort(v.begin(), v.end());

    // BFS from cube 0; lowest-index tie break comes from sorted adjacency.
    cx.parent.assign(n, -2);
    cx.parent[0] = -1;
    std::deque<int> q{0};
    cx.bfs_order.clear();
    while (!q.empty()) {
        int i = q.front();
        q.pop_front();
        cx.bfs_order.push_back(i);
        for (int j : cx.nbrs[i])
            if (cx.parent[j] == -2) {
                cx.parent[j] = i;
                q.push_back(j);
            }
    }
    if (static_cast<int>(cx.bfs_order.size()) != n) {
        int stranded = 0;
        for (int i = 0; i < n; ++i)
            if (cx.parent[i] == -2) {
                stranded = i;
                break;
            }
        throw std::invalid_argument("CubeComplex: disconnected (stranded cube " +
                                    std::to_string(stranded) + ")");
    }

    cx.hull.dim = dim;
    for (int d = 0; d < dim; ++d) {
        double lo = 1e300, hi = -1e300;
        for (const Vec& z : cx.centers) {
            lo = std::min(lo, z[d] - delta);
            hi = std::max(hi, z[d] + delta);
        }
        cx.hull.lo[d] = lo;
        cx.hull.hi[d] = hi;
    }
    return cx;
}

CubeComplex CubeComplex::from_lattice(int dim, double delta, const Vec& anchor, const Box& scan,
                                      const std::function<bool(const Vec&)>& keep) {
    std::vector<Vec> cs;
    long i0 = static_cast<long>(std::floor((scan.lo[0] - anchor[0]) / delta));
    long i1 = static_cast<long>(std::ceil((scan.hi[0] - anchor[0]) / delta));
    long j0 = dim > 1 ? static_cast<long>(std::floor((scan.lo[1] - anchor[1]) / delta)) : 0;
    long j1 = dim > 1 ? static_cast<long>(std::ceil((scan.hi[1] - anchor[1]) / delta)) : 0;
    for (long j = j0; j <= j1; ++j)
        for (long i = i0; i <= i1; ++i) {
            Vec z = vec2(anchor[0] + i * delta, dim > 1 ? anchor[1] + j * delta : 0.0);
            if (keep(z)) cs.push_back(z);
        }
    return build(dim, delta, std::move(cs));
}

std::vector<int> CubeComplex::chain(int j) const {
    std::vector<int> c{j};
    while (parent[c.back()] >= 0) c.push_back(parent[c.back()]);
    return c;
}

bool CubeComplex::inside_s(const Vec& x) const {
    for (const Vec& z : centers) {
        bool in = true;
        for (int d = 0; d < dim; ++d)
            if (std::abs(x[d] - z[d]) >= delta) {
                in = false;
                break;
            }
        if (in) return true;
    }
    return false;
}

bool CubeComplex::inside_s_dilate(const Vec& x) const {
    double thr = 2 * delta * std::sqrt(static_cast<double>(dim));
    for (const Vec& z : centers) {
        double d2 = 0;
        for (int d = 0; d < dim; ++d) {
            double gap = std::max(0.0, std::abs(x[d] - z[d]) - delta);
            d2 += gap * gap;
        }
        if (std::sqrt(d2) < thr) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// PartitionFamily
// ---------------------------------------------------------------------------
PartitionFamily::PartitionFamily(const CubeComplex& cx, int quad_per_cube)
    : cx_(&cx),
      step_(cx.delta / quad_per_cube),
      mollify_w_(cx.delta / 4),
      bump_r_(0.45 * cx.delta) {
    // Quadrature lattice: midpoints covering the union of cubes.
    const Box& hull = cx.hull;
    int nx = static_cast<int>(std::llround(hull.width(0) / step_));
    int ny = cx.dim > 1 ? static_cast<int>(std::llround(hull.width(1) / step_)) : 1;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            Vec x = vec2(hull.lo[0] + (i + 0.5) * step_,
                         cx.dim > 1 ? hull.lo[1] + (j + 0.5) * step_ : 0.0);
            if (cx.inside_s(x)) qpts_.push_back(x);
        }
    // Analytic bump normalization: raw profile mass over the bump ball.
    const Quad1D& gq = gauss_legendre(48);
    double mass = 0;
    for (std::size_t a = 0; a < gq.x.size(); ++a) {
        double r = 0.5 * (1 + gq.x[a]);
        double shell = cx.dim == 1 ? 2.0 : 2 * M_PI * r;
        mass += 0.5 * gq.w[a] * shell * bump_profile(r * r);
    }
    mass *= std::pow(bump_r_, cx.dim);
    bump_scale_ = 1.0 / mass;
}

double PartitionFamily::raw_m(int i, const Vec& x) const {
    double m = 1;
    double half = cx_->delta / 2;
    for (int d = 0; d < cx_->dim; ++d) {
        double u = std::abs(x[d] - cx_->centers[i][d]);
        m *= smooth_step((half + mollify_w_ / 2 - u) / mollify_w_);
        if (m == 0) return 0;
    }
    return m;
}

double PartitionFamily::sigma_sum(const Vec& x) const {
    double s = 0;
    for (int i = 0; i < cx_->size(); ++i) s += raw_m(i, x);
    return s;
}

double PartitionFamily::sigma(int i, const Vec& x) const {
    double m = raw_m(i, x);
    if (m == 0) return 0;
    return m / sigma_sum(x);
}

double PartitionFamily::bump(int i, const Vec& x) const {
    double r2 = 0;
    for (int d = 0; d < cx_->dim; ++d) {
        double u = (x[d] - cx_->centers[i][d]) / bump_r_;
        r2 += u * u;
    }
    double v = bump_profile(r2);
    return v == 0 ? 0 : v * bump_scale_;
}

double PartitionFamily::mass(int i, const std::function<double(const Vec&)>& f) const {
    // supp sigma_i lies in Q(z_i, 0.65 delta); 3x3 panels, 5-point GL each.
    const Quad1D& q = gauss_legendre(5);
    const double ext = 0.66 * cx_->delta;
    const int np = 3;
    double panel = 2 * ext / np;
    const Vec& z = cx_->centers[i];
    double acc = 0;
    for (int py = 0; py < (cx_->dim > 1 ? np : 1); ++py)
        for (int px = 0; px < np; ++px) {
            double x0 = z[0] - ext + px * panel;
            double y0 = cx_->dim > 1 ? z[1] - ext + py * panel : 0.0;
            for (std::size_t a = 0; a < q.x.size(); ++a) {
                double xa = x0 + panel * 0.5 * (1 + q.x[a]);
                if (cx_->dim == 1) {
                    Vec p = vec2(xa, 0);
                    double s = sigma(i, p);
                    if (s != 0) acc += 0.5 * panel * q.w[a] * s * f(p);
                    continue;
                }
                for (std::size_t b = 0; b < q.x.size(); ++b) {
                    Vec p = vec2(xa, y0 + panel * 0.5 * (1 + q.x[b]));
                    double s = sigma(i, p);
                    if (s != 0) acc += 0.25 * panel * panel * q.w[a] * q.w[b] * s * f(p);
                }
            }
        }
    return acc;
}

double PartitionFamily::bump_sigma_mass(int j) const {
    if (bsm_.empty()) {
        bsm_.assign(cx_->size(), -1);
    }
    if (bsm_[j] < 0) {
        auto broot = [&](const Vec& x) { return bump(0, x); };
        bsm_[j] = mass(j, broot);
    }
    return bsm_[j];
}

double PartitionFamily::integrate(const std::function<double(const Vec&)>& f) const {
    std::vector<double> vals(qpts_.size());
    for (std::size_t k = 0; k < qpts_.size(); ++k) vals[k] = f(qpts_[k]);
    return tree_sum(vals) * std::pow(step_, cx_->dim);
}

// ---------------------------------------------------------------------------
// Decomposition
// ---------------------------------------------------------------------------
ChainDecomposition ChainDecomposition::compute(const CubeComplex& cx,
                                               const PartitionFamily& fam, const PointFn& f,
                                               double mean_tol) {
    ChainDecomposition dec;
    int n = cx.size();
    dec.sigma_mass.assign(n, 0.0);
    parallel_for(n, [&](std::size_t i) { dec.sigma_mass[i] = fam.mass(static_cast<int>(i), f); });
    double scale = 0;
    const auto& qp = fam.quad_points();
    std::size_t stride = std::max<std::size_t>(1, qp.size() / 2048);
    for (std::size_t k = 0; k < qp.size(); k += stride) scale = std::max(scale, std::abs(f(qp[k])));
    dec.total_mass = tree_sum(dec.sigma_mass);
    double vol = static_cast<double>(fam.quad_points().size()) *
                 std::pow(fam.quad_step(), cx.dim);
    if (std::abs(dec.total_mass) > mean_tol * std::max(scale * vol, 1e-300))
        throw std::invalid_argument("chain decompose: input is not mean-zero (|int f| = " +
                                    fmt_g(std::abs(dec.total_mass)) + ")");
    // Subtree masses over the BFS tree (children accumulate into parents).
    dec.subtree_mass = dec.sigma_mass;
    for (auto it = cx.bfs_order.rbegin(); it != cx.bfs_order.rend(); ++it) {
        int i = *it;
        if (cx.parent[i] >= 0) dec.subtree_mass[cx.parent[i]] += dec.subtree_mass[i];
    }
    return dec;
}

std::vector<std::pair<int, double>> ChainDecomposition::bump_coefs(const CubeComplex& cx,
                                                                   int i) const {
    // T_i f = f sigma_i - <f,sigma_i> b_i + sum_{children c} S_c (b_c - b_i)
    std::vector<std::pair<int, double>> out;
    double own = -sigma_mass[i];
    for (int c : cx.nbrs[i]) {
        if (cx.parent[c] != i) continue;
        out.emplace_back(c, subtree_mass[c]);
        own -= subtree_mass[c];
    }
    out.emplace_back(i, own);
    return out;
}

PointFn ChainDecomposition::t_piece(const CubeComplex& cx, const PartitionFamily& fam,
                                    const PointFn& f, int i) const {
    auto coefs = bump_coefs(cx, i);
    return [&cx, &fam, f, i, coefs](const Vec& x) {
        double v = 0;
        double s = fam.sigma(i, x);
        if (s != 0) v += f(x) * s;
        for (const auto& [m, c] : coefs) v += c * fam.bump(m, x);
        return v;
    };
}

// ---------------------------------------------------------------------------
// Apply / adjoint
// ---------------------------------------------------------------------------
Vec chain_apply_at(const CubeComplex& cx, const PartitionFamily& fam,
                   const ChainDecomposition& dec, const PointFn& f, const Vec& x,
                   const ChainApplyOpts& opts) {
    Vec out{};
    double reach = 2.75 * cx.delta;  // supp T_i f and its hull toward Q_i
    for (int i = 0; i < cx.size(); ++i) {
        bool near = true;
        for (int d = 0; d < cx.dim; ++d)
            if (std::abs(x[d] - cx.centers[i][d]) > reach) {
                near = false;
                break;
            }
        if (!near) continue;
        PointFn ti = dec.t_piece(cx, fam, f, i);
        Cube q{cx.centers[i], cx.delta};
        PolarOpts po;
        po.nphi = opts.nphi;
        po.step = opts.step_rel * cx.delta;
        po.support.dim = cx.dim;
        for (int d = 0; d < cx.dim; ++d) {
            po.support.lo[d] = cx.centers[i][d] - 2.1 * cx.delta;
            po.support.hi[d] = cx.centers[i][d] + 2.1 * cx.delta;
        }
        Vec v = bogovskij_cube_polar(q, ti, x, po);
        for (int d = 0; d < cx.dim; ++d) out[d] += v[d];
    }
    return out;
}

double chain_apply_adjoint_at(const CubeComplex& cx, const PartitionFamily& fam,
                              const VecPointFn& g, const Vec& x, ChainAdjointSession& session,
                              int ny, int nr) {
    // B* g = sum_i T_i^* (B*_{Q_i} g);
    // T_i^* h = sigma_i (h - <b_i,h>) + sum_{(j,k): c_j(k)=i} <b_prev - b_i, h> sigma_j.
    int n = cx.size();
    auto pair_val = [&](int i, int m) {
        long long key = static_cast<long long>(i) * n + m;
        auto it = session.pair_cache.find(key);
        if (it != session.pair_cache.end()) return it->second;
        Cube qi{cx.centers[i], cx.delta};
        // <b_m, B*_{Q_i} g> by midpoint quadrature over supp b_m.
        double r = 0.45 * cx.delta;
        int nq = 9;
        double hq = 2 * r / nq, acc = 0;
        for (int a = 0; a < nq; ++a)
            for (int b = 0; b < nq; ++b) {
                Vec y = vec2(cx.centers[m][0] - r + (a + 0.5) * hq,
                             cx.centers[m][1] - r + (b + 0.5) * hq);
                double bv = fam.bump(m, y);
                if (bv == 0) continue;
                acc += bv * poincare_adjoint_cube(qi, cx.dim, g, y, ny, nr) * hq * hq;
            }
        session.pair_cache.emplace(key, acc);
        return acc;
    };

    double out = 0;
    for (int j = 0; j < n; ++j) {
        double sj = fam.sigma(j, x);
        if (sj == 0) continue;
        // direct term of T_j^*
        Cube qj{cx.centers[j], cx.delta};
        double hj = poincare_adjoint_cube(qj, cx.dim, g, x, ny, nr);
        out += sj * (hj - pair_val(j, j));
        // chain transfer terms: walk c_j from j to the root
        auto c = cx.chain(j);
        for (std::size_t k = 1; k < c.size(); ++k) {
            int i = c[k], prev = c[k - 1];
            out += (pair_val(i, prev) - pair_val(i, i)) * sj;
        }
    }
    return out;
}

}  // namespace divtime
