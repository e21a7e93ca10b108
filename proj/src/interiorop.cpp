#include "divtime/interiorop.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace divtime {

SlabComplex SlabComplex::build(const MovingDomain& dom, double delta, double margin,
                               int t_checks_per_slab) {
    SlabComplex sc;
    sc.delta = delta;
    sc.t_begin = dom.t0;
    sc.t_end = dom.t1;
    sc.n_slabs = std::max(1, static_cast<int>(std::ceil((dom.t1 - dom.t0) / delta)));

    // Lattice anchored at the bbox center so complexes of consecutive slabs
    // stay aligned.
    Vec anchor = vec2(0.5 * (dom.bbox.lo[0] + dom.bbox.hi[0]),
                      0.5 * (dom.bbox.lo[1] + dom.bbox.hi[1]));
    double need = delta + margin;

    for (int j = 1; j <= sc.n_slabs; ++j) {
        // eta_j support window [t0 + (j-3/2) delta, t0 + (j+1/2) delta]
        double w0 = std::max(dom.t0, sc.t_begin + (j - 1.5) * delta);
        double w1 = std::min(dom.t1, sc.t_begin + (j + 0.5) * delta);
        std::vector<double> ts;
        for (int k = 0; k < t_checks_per_slab; ++k)
            ts.push_back(w0 + (w1 - w0) * k / std::max(1, t_checks_per_slab - 1));

        auto keep = [&](const Vec& z) {
            for (double t : ts) {
                const auto& ds = dom.dist_slice(t);
                // dilate cube fits when the center clears need plus the
                // half-diagonal with a lattice-resolution pad
                double thr = need * std::sqrt(2.0) + ds.pitch;
                if (ds.at(z) < thr) return false;
            }
            return true;
        };
        Slab s;
        try {
            s.cubes = CubeComplex::from_lattice(dom.dim, delta, anchor, dom.bbox, keep);
            s.family = std::make_shared<PartitionFamily>(s.cubes);
        } catch (const std::invalid_argument&) {
            s.empty = true;  // no interior cubes at this slab (thin domain)
        }
        sc.slabs.push_back(std::move(s));
    }
    return sc;
}

double SlabComplex::eta(int j, double t) const {
    // Mollified indicator of I_j, normalized over the slab family.
    auto raw = [&](int jj) {
        double a = t_begin + (jj - 1) * delta, b = t_begin + jj * delta;
        double w = delta / 4;
        return mollified_ramp(t - a + w, w, w / 2) * mollified_ramp(b - t + w, w, w / 2);
    };
    double num = raw(j);
    if (num == 0) return 0;
    double den = 0;
    for (int jj = std::max(1, j - 1); jj <= std::min(n_slabs, j + 1); ++jj) den += raw(jj);
    return num / den;
}

std::vector<int> SlabComplex::active(double t) const {
    std::vector<int> out;
    for (int j = 1; j <= n_slabs; ++j)
        if (eta(j, t) > 0) out.push_back(j);
    return out;
}

int SlabComplex::slab_of(double t) const {
    int j = 1 + static_cast<int>(std::floor((t - t_begin) / delta));
    return std::clamp(j, 1, n_slabs);
}

bool SlabComplex::inside_xi(double t, const Vec& x) const {
    for (int j : active(t)) {
        const Slab& s = slabs[j - 1];
        if (s.empty || !s.cubes.inside_s(x)) return false;
    }
    return !active(t).empty();
}

std::string SlabComplex::dump_json() const {
    nlohmann::json j;
    j["delta"] = delta;
    j["n_slabs"] = n_slabs;
    auto arr = nlohmann::json::array();
    for (int s = 0; s < n_slabs; ++s) {
        nlohmann::json js;
        js["interval"] = {t_begin + s * delta, t_begin + (s + 1) * delta};
        auto cs = nlohmann::json::array();
        if (!slabs[s].empty)
            for (const Vec& z : slabs[s].cubes.centers) cs.push_back({z[0], z[1]});
        js["centers"] = cs;
        arr.push_back(js);
    }
    j["slabs"] = arr;
    return j.dump(1);
}

InteriorSliceOp::InteriorSliceOp(const SlabComplex& sc, double t, const PointFn& f_slice,
                                 const InteriorApplyOpts& opts)
    : sc_(&sc), t_(t), f_(f_slice), opts_(opts), act_(sc.active(t)) {
    for (int j : act_) {
        const auto& slab = sc.slabs[j - 1];
        if (slab.empty)
            throw std::invalid_argument("interior apply: active slab " + std::to_string(j) +
                                        " has no cubes");
        dec_.push_back(ChainDecomposition::compute(slab.cubes, *slab.family, f_,
                                                   opts.mean_tol));
    }
    adj_.resize(act_.size());
}

Vec InteriorSliceOp::apply_at(const Vec& x) const {
    Vec out{};
    for (std::size_t k = 0; k < act_.size(); ++k) {
        double w = sc_->eta(act_[k], t_);
        if (w == 0) continue;
        const auto& slab = sc_->slabs[act_[k] - 1];
        Vec v = chain_apply_at(slab.cubes, *slab.family, dec_[k], f_, x, opts_.chain);
        for (int d = 0; d < slab.cubes.dim; ++d) out[d] += w * v[d];
    }
    return out;
}

double InteriorSliceOp::apply_adjoint_at(const VecPointFn& g, const Vec& x) const {
    double out = 0;
    for (std::size_t k = 0; k < act_.size(); ++k) {
        double w = sc_->eta(act_[k], t_);
        if (w == 0) continue;
        const auto& slab = sc_->slabs[act_[k] - 1];
        out += w * chain_apply_adjoint_at(slab.cubes, *slab.family, g, x, adj_[k]);
    }
    return out;
}

}  // namespace divtime
