#pragma once

#include <memory>
#include <vector>

#include "divtime/chainop.hpp"
#include "divtime/geometry.hpp"

namespace divtime {

// Space-time union of cube-complex slabs with a temporal partition of unity.
// Slab j lives on I_j = [t_begin + (j-1) delta, t_begin + j delta); eta_j is a
// mollified indicator of I_j (width delta/4), so supp eta_j stays inside
// [t - 3 delta/2, t + delta/2] relative to the slab start as required.
class SlabComplex {
  public:
    double delta = 0.1;    // cube half-side and slab duration
    double t_begin = 0, t_end = 1;
    int n_slabs = 0;

    struct Slab {
        CubeComplex cubes;
        std::shared_ptr<PartitionFamily> family;
        bool empty = false;
    };
    std::vector<Slab> slabs;

    // Cubes are lattice cubes whose margin-dilate Q(z, delta + margin) lies in
    // Omega_t for every grid time in the eta_j support window.
    static SlabComplex build(const MovingDomain& dom, double delta, double margin,
                             int t_checks_per_slab = 3);

    double eta(int j, double t) const;
    std::vector<int> active(double t) const;
    int slab_of(double t) const;
    // Is x inside S_j for every active slab at time t (usable input support)?
    bool inside_xi(double t, const Vec& x) const;
    std::string dump_json() const;
};

struct InteriorApplyOpts {
    ChainApplyOpts chain;
    double mean_tol = 1e-5;
};

// B f(t,.) = sum_j eta_j(t) B_{S_j} f(t,.) evaluated pointwise; f is the
// time-t slice of the input. Decompositions are computed per active slab.
class InteriorSliceOp {
  public:
    InteriorSliceOp(const SlabComplex& sc, double t, const PointFn& f_slice,
                    const InteriorApplyOpts& opts);
    Vec apply_at(const Vec& x) const;
    double apply_adjoint_at(const VecPointFn& g, const Vec& x) const;

  private:
    const SlabComplex* sc_;
    double t_;
    PointFn f_;
    InteriorApplyOpts opts_;
    std::vector<int> act_;
    std::vector<ChainDecomposition> dec_;
    mutable std::vector<ChainAdjointSession> adj_;  // one per active slab
};

}  // namespace divtime
