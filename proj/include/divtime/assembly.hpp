#pragma once

#include <memory>
#include <vector>

#include "divtime/boundaryop.hpp"
#include "divtime/fields.hpp"
#include "divtime/interiorop.hpp"
#include "divtime/whitney.hpp"

namespace divtime {

// Collar data for one boundary chart: the graph-region inverse, the lateral
// partition weight, and the time-independent transition cutoff phi ramping
// from 0 at the chart bottom plane to 1 within 6 collar widths.
struct CollarPatch {
    GraphRegionOp op;
    double lateral_margin = 0.05;
    double delta = 0.05;

    explicit CollarPatch(const GraphPatch& p, double step, double delta_)
        : op(p, step), delta(delta_) {}

    double mu(const Vec& xloc) const;  // raw lateral weight in [0,1]
    double phi_local(double v) const {
        return mollified_ramp(v - op.patch().box_bottom - 0.5 * delta, 5 * delta, 0.5 * delta);
    }
    double phi_local_d(double v) const {
        return mollified_ramp_d(v - op.patch().box_bottom - 0.5 * delta, 5 * delta,
                                0.5 * delta);
    }
};

class AssembledOperator {
  public:
    struct Options {
        double M = 32, Mp = 4;
        double r_min = 0;        // 0: use 2*grid pitch
        double delta = 0;        // 0: derive from patch depths
        int sub_per_delta = 6;   // internal subgrid pitch = delta / this
        double mean_tol = 2e-3;  // relative tolerance on slice means
        int nphi = 24;
    };

    AssembledOperator(const MovingDomain& dom, const GridSpec& grid, Options opt = {});

    const MovingDomain& domain() const { return *dom_; }
    const GridSpec& grid() const { return grid_; }
    const CylinderCover& cover() const { return cover_; }
    const SlabComplex& slabs() const { return slabs_; }
    double collar_delta() const { return delta_; }

    // Internal per-slice representation of B' f on the subgrid.
    struct BPrime {
        GridSpec sub;
        // per time level: subgrid node arrays
        std::vector<std::vector<double>> bx, by;  // B' f components
        std::vector<std::vector<double>> f0;      // interior argument
        double worst_f0_mean = 0;
        double value(int comp, int it, const Vec& x) const;  // bicubic
        double f0_value(int it, const Vec& x) const;
    };

    std::shared_ptr<BPrime> apply_bprime(const ScalarField& f) const;
    VectorField bprime_field(const BPrime& bp) const;  // sampled on the grid

    // The regularized operator B of the construction.
    VectorField apply(const ScalarField& f) const;
    VectorField apply(const ScalarField& f, std::shared_ptr<BPrime>& bp_out) const;

    // f_j = grad(chi_j) . B'f + chi_j f at a point (product-rule form).
    double f_piece(const BPrime& bp, const ScalarField& f, int j, int it, const Vec& x) const;

    // <d_t^lambda B f, psi> and <f-side, B*-side>; lambda in {0, 1}.
    std::array<double, 2> adjoint_pairing(const ScalarField& f, const VectorField& psi,
                                          int lambda = 0) const;

    // Space-time L2 pairing helper on this operator's grid.
    double pairing(const VectorField& a, const VectorField& b) const;

    const Options& options() const { return opt_; }

  private:
    const MovingDomain* dom_;
    GridSpec grid_;
    Options opt_;
    double delta_;
    std::vector<CollarPatch> collar_;
    SlabComplex slabs_;
    CylinderCover cover_;
    GridSpec sub_;

    struct CanonicalBumpField;
    std::shared_ptr<CanonicalBumpField> wfields_;

    void build_collar();
    void check_geometry() const;
    // E_i = B_ext,i(eta_i f) on the chart lattice for one slice.
    struct PatchSlice {
        int nu = 0, nv = 0;
        double u0 = 0, v0 = 0, du = 0, dv = 0;
        std::vector<double> g;  // cumulative integral toward the graph
        double value(double u, double v) const;
    };
    PatchSlice patch_integral(int ip, int it, const ScalarField& f) const;
    double eta(int i, const Vec& x_global) const;  // normalized lateral partition
    friend struct AssemblyTestAccess;
};

}  // namespace divtime
