#include "divtime/whitney.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace divtime {

namespace {

inline long long pack(int g, long ix, long iy) {
    return (static_cast<long long>(g) << 52) ^ (static_cast<long long>(ix + (1 << 24)) << 26) ^
           (iy + (1 << 24));
}

// Smooth spatial/temporal cutoff profile: 1 on |s| <= 1.5, 0 on |s| >= 2.5,
// where s is measured in cube half-sides.
inline double cut_profile(double s) { return smooth_step(2.5 - std::abs(s)); }
inline double cut_profile_d(double s) {
    // derivative wrt s
    double a = 2.5 - std::abs(s);
    if (a <= 0 || a >= 1) return 0;
    double ds = a * a * (30.0 + a * (-60.0 + 30.0 * a));
    return (s > 0 ? -1 : 1) * ds;
}

}  // namespace

CylinderCover CylinderCover::build(const MovingDomain& dom, const GridSpec& grid, double M,
                                   double Mp, double r_min) {
    if (!(1 < Mp && Mp < M)) throw std::invalid_argument("whitney: need 1 < M' < M");
    if (r_min < 2 * std::min(grid.h(0), grid.h(1)) * (1 - 1e-12))
        throw std::invalid_argument("whitney: r_min >= 2 * grid pitch");

    CylinderCover cov;
    cov.M = M;
    cov.Mp = Mp;
    cov.r_min = r_min;
    cov.dom_ = &dom;
    cov.grid_ = grid;
    cov.mod = dom.modulus(M, grid.dt());

    // Dyadic generations anchored at r_min.
    const Box& bb = dom.bbox;
    double wmax = std::max(bb.width(0), bb.width(1));
    int ngen = 1;
    while (r_min * std::pow(2.0, ngen - 1) < wmax / Mp) ++ngen;
    cov.gen_side_.resize(ngen);
    for (int g = 0; g < ngen; ++g) cov.gen_side_[g] = r_min * std::pow(2.0, g);

    bool tindep = dom.time_independent();
    int nts = tindep ? 1 : grid.nt + 1;

    // admissibility: the concentric Mp-dilate of the side-r cube at (ix,iy)
    // is contained in Omega_t (sampled containment with a resolution pad)
    auto admissible = [&](int g, long ix, long iy, double t,
                          const MovingDomain::DistSlice& ds) {
        double s = cov.gen_side_[g];
        Vec c = vec2(bb.lo[0] + (ix + 0.5) * s, bb.lo[1] + (iy + 0.5) * s);
        double rho = s / 2;
        double dc = ds.at(c);
        if (dc < Mp * rho) return false;                          // necessary
        if (dc >= std::sqrt(2.0) * Mp * rho + ds.pitch) return true;  // sufficient
        // sample the dilate cube
        double half = Mp * rho;
        const int ns = 6;
        for (int a = 0; a <= ns; ++a)
            for (int b = 0; b <= ns; ++b) {
                Vec y = vec2(c[0] - half + 2 * half * a / ns, c[1] - half + 2 * half * b / ns);
                bool edge = (a == 0 || a == ns || b == 0 || b == ns);
                double need = edge ? ds.pitch : 0.5 * (2 * half / ns);
                if (ds.at(y) < need && !dom.contains(t, y)) return false;
                if (ds.at(y) < need * 0.5) return false;
            }
        return true;
    };

    // per-column interval collection
    std::map<std::array<long, 3>, std::vector<std::array<double, 3>>> column_iv;

    for (int itau = 0; itau < nts; ++itau) {
        double t = tindep ? grid.t0 : grid.time(itau);
        const auto& ds = dom.dist_slice(t);
        for (int g = 0; g < ngen; ++g) {
            double s = cov.gen_side_[g];
            long nx = static_cast<long>(std::ceil(bb.width(0) / s));
            long ny = static_cast<long>(std::ceil(bb.width(1) / s));
            for (long iy = 0; iy < ny; ++iy)
                for (long ix = 0; ix < nx; ++ix) {
                    if (!admissible(g, ix, iy, t, ds)) continue;
                    // maximality: parent dilate not contained
                    if (g + 1 < ngen && admissible(g + 1, ix / 2, iy / 2, t, ds)) continue;
                    double h = tindep ? (dom.t1 - dom.t0) : std::max(cov.mod(s), grid.dt());
                    column_iv[{static_cast<long>(g), ix, iy}].push_back(
                        {t - h, t + h, tindep ? -1.0 : t});
                }
        }
    }

    // Greedy minimal interval subcover per column (overlap <= 2).
    cov.columns_.resize(ngen);
    for (auto& [key, ivs] : column_iv) {
        std::sort(ivs.begin(), ivs.end());
        double lo = ivs.front()[0];
        double hi = lo;
        std::vector<std::array<double, 3>> kept;
        std::size_t i = 0;
        while (true) {
            // extend from hi: pick the interval starting <= hi reaching furthest
            double best_end = -1e300;
            std::array<double, 3> best{};
            bool found = false;
            for (std::size_t k = 0; k < ivs.size(); ++k) {
                if (ivs[k][0] <= hi + 1e-12 && ivs[k][1] > best_end) {
                    best_end = ivs[k][1];
                    best = ivs[k];
                    found = true;
                }
            }
            (void)lo;
            (void)i;
            if (!found || best_end <= hi + 1e-12) break;
            kept.push_back(best);
            hi = best_end;
            if (hi >= ivs.back()[1] - 1e-12) break;
        }
        int g = static_cast<int>(key[0]);
        double s = cov.gen_side_[g];
        for (const auto& iv : kept) {
            WhitneyCylinder c;
            c.corner = vec2(bb.lo[0] + key[1] * s, bb.lo[1] + key[2] * s);
            c.r = s;
            c.generation = g;
            c.i0 = std::max(dom.t0, iv[0]);
            c.i1 = std::min(dom.t1, iv[1]);
            c.full_time = iv[2] < 0 || (c.i0 <= dom.t0 + 1e-12 && c.i1 >= dom.t1 - 1e-12);
            c.t_mid = iv[2] < 0 ? 0.5 * (dom.t0 + dom.t1) : iv[2];
            c.t_half = 0.5 * (iv[1] - iv[0]);
            cov.cyl.push_back(c);
            cov.columns_[g][pack(g, key[1], key[2])].push_back(
                static_cast<int>(cov.cyl.size()) - 1);
        }
    }

    // Per-time activity lists.
    cov.by_time_.assign(grid.nt + 1, {});
    for (int it = 0; it <= grid.nt; ++it) {
        double t = grid.time(it);
        for (int j = 0; j < static_cast<int>(cov.cyl.size()); ++j)
            if (cov.cyl[j].in_time(t, 2.5)) cov.by_time_[it].push_back(j);
    }

    // Uncovered-region report.
    double collar = cov.stats.collar;
    double cell = std::min(grid.h(0), grid.h(1));
    int miss = 0, tot = 0;
    for (int it = 0; it <= grid.nt; it += std::max(1, grid.nt / 2)) {
        double t = grid.time(it);
        const auto& ds = dom.dist_slice(t);
        for (int iy = 0; iy <= grid.nx[1]; ++iy)
            for (int ix = 0; ix <= grid.nx[0]; ++ix) {
                Vec x = grid.node(ix, iy);
                if (ds.at(x) <= collar * r_min) continue;
                ++tot;
                if (!cov.covered(t, x)) ++miss;
            }
    }
    cov.stats.uncovered_area = tot ? static_cast<double>(miss) * cell * cell : 0.0;
    if (miss > 0)
        std::fprintf(stderr, "[divtime] whitney: %d grid points beyond the %.2g r_min collar "
                             "are uncovered (measure %.3g)\n",
                     miss, collar, cov.stats.uncovered_area);
    return cov;
}

void CylinderCover::active_at(double t, const Vec& x, std::vector<int>& out) const {
    out.clear();
    const Box& bb = dom_->bbox;
    for (int g = 0; g < static_cast<int>(gen_side_.size()); ++g) {
        if (columns_[g].empty()) continue;
        double s = gen_side_[g];
        long cx = static_cast<long>(std::floor((x[0] - bb.lo[0]) / s));
        long cy = static_cast<long>(std::floor((x[1] - bb.lo[1]) / s));
        for (long iy = cy - 2; iy <= cy + 2; ++iy)
            for (long ix = cx - 2; ix <= cx + 2; ++ix) {
                auto it = columns_[g].find(pack(g, ix, iy));
                if (it == columns_[g].end()) continue;
                for (int j : it->second) {
                    const WhitneyCylinder& c = cyl[j];
                    if (!c.in_time(t, 2.5)) continue;
                    if (c.in_space(x, 2.5)) out.push_back(j);
                }
            }
    }
}

double CylinderCover::raw_m(int j, double t, const Vec& x) const {
    const WhitneyCylinder& c = cyl[j];
    Vec cc = c.center();
    double rho = c.r / 2;
    double m = 1;
    for (int d = 0; d < 2; ++d) {
        m *= cut_profile((x[d] - cc[d]) / rho);
        if (m == 0) return 0;
    }
    if (!c.full_time && c.t_half > 0) m *= cut_profile((t - c.t_mid) / c.t_half);
    return m;
}

void CylinderCover::raw_m_grad(int j, double t, const Vec& x, double& m, Vec& grad,
                               double& mdt) const {
    const WhitneyCylinder& c = cyl[j];
    Vec cc = c.center();
    double rho = c.r / 2;
    double p[2], dp[2];
    for (int d = 0; d < 2; ++d) {
        double s = (x[d] - cc[d]) / rho;
        p[d] = cut_profile(s);
        dp[d] = cut_profile_d(s) / rho;
    }
    double ptime = 1, dptime = 0;
    if (!c.full_time && c.t_half > 0) {
        double s = (t - c.t_mid) / c.t_half;
        ptime = cut_profile(s);
        dptime = cut_profile_d(s) / c.t_half;
    }
    m = p[0] * p[1] * ptime;
    grad = vec2(dp[0] * p[1] * ptime, p[0] * dp[1] * ptime);
    mdt = p[0] * p[1] * dptime;
}

CylinderCover::ChiEval CylinderCover::chi(int j, double t, const Vec& x) const {
    ChiEval out;
    double mj;
    Vec gj;
    double dtj;
    raw_m_grad(j, t, x, mj, gj, dtj);
    if (mj == 0) return out;
    std::vector<int> act;
    active_at(t, x, act);
    double S = 0, Sdt = 0;
    Vec Sg{};
    for (int k : act) {
        double mk;
        Vec gk;
        double dtk;
        raw_m_grad(k, t, x, mk, gk, dtk);
        S += mk;
        Sdt += dtk;
        Sg[0] += gk[0];
        Sg[1] += gk[1];
    }
    if (S <= 0) return out;
    out.val = mj / S;
    out.grad = vec2((gj[0] * S - mj * Sg[0]) / (S * S), (gj[1] * S - mj * Sg[1]) / (S * S));
    out.dt = (dtj * S - mj * Sdt) / (S * S);
    return out;
}

double CylinderCover::chi_sum(double t, const Vec& x) const {
    std::vector<int> act;
    active_at(t, x, act);
    double s = 0;
    for (int j : act) s += chi(j, t, x).val;
    return s;
}

bool CylinderCover::covered(double t, const Vec& x) const {
    std::vector<int> act;
    active_at(t, x, act);
    for (int j : act)
        if (cyl[j].in_time(t, 1.0) && cyl[j].in_space(x, 1.0)) return true;
    return false;
}

std::string CylinderCover::dump_json() const {
    nlohmann::json j;
    j["M"] = M;
    j["Mp"] = Mp;
    j["r_min"] = r_min;
    auto arr = nlohmann::json::array();
    for (const auto& c : cyl) {
        nlohmann::json cj;
        cj["corner"] = {c.corner[0], c.corner[1]};
        cj["r"] = c.r;
        cj["interval"] = {c.i0, c.i1};
        cj["generation"] = c.generation;
        arr.push_back(cj);
    }
    j["cylinders"] = arr;
    j["rejected_small"] = stats.rejected_small;
    j["uncovered_area"] = stats.uncovered_area;
    return j.dump(1);
}

std::vector<std::array<int, 2>> CylinderCover::overlap_histogram(const MovingDomain& dom,
                                                                 int nt_probe,
                                                                 int nx_probe) const {
    std::map<int, int> hist;
    for (int it = 0; it < nt_probe; ++it) {
        double t = dom.t0 + (dom.t1 - dom.t0) * (it + 0.5) / nt_probe;
        for (int iy = 0; iy < nx_probe; ++iy)
            for (int ix = 0; ix < nx_probe; ++ix) {
                Vec x = vec2(dom.bbox.lo[0] + dom.bbox.width(0) * (ix + 0.5) / nx_probe,
                             dom.bbox.lo[1] + dom.bbox.width(1) * (iy + 0.5) / nx_probe);
                if (!dom.contains(t, x)) continue;
                int cnt = 0;
                for (const auto& c : cyl)
                    if (c.in_time(t, Mp) && c.in_space(x, Mp)) ++cnt;
                ++hist[cnt];
            }
    }
    std::vector<std::array<int, 2>> rows;
    for (auto [k, v] : hist) rows.push_back({k, v});
    return rows;
}

void CylinderCover::write_overlap_csv(const std::string& path, const MovingDomain& dom) const {
    std::ofstream out(path);
    out << "overlap,count\n";
    for (auto [k, v] : overlap_histogram(dom, 3, 96)) out << k << "," << v << "\n";
}

}  // namespace divtime
