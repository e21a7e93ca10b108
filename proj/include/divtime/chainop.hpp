#pragma once

#include <map>
#include <vector>

#include "divtime/refop.hpp"
#include "divtime/util.hpp"

namespace divtime {

// Connected union of equal cubes Q(z_i, delta) with centers on the
// delta-lattice; carries the BFS chain table toward the root (index 0,
// deterministic lowest-index tie break).
struct CubeComplex {
    int dim = 2;
    double delta = 1;
    std::vector<Vec> centers;
    std::vector<std::vector<int>> nbrs;
    std::vector<int> parent;     // -1 at root
    std::vector<int> bfs_order;  // root first
    Box hull;                    // bounding box of S

    static CubeComplex build(int dim, double delta, std::vector<Vec> centers);
    // All lattice cubes (anchor + delta*Z^n) whose center passes `keep`.
    static CubeComplex from_lattice(int dim, double delta, const Vec& anchor, const Box& scan,
                                    const std::function<bool(const Vec&)>& keep);

    std::vector<int> chain(int j) const;  // c_j : j, ..., root
    int size() const { return static_cast<int>(centers.size()); }
    bool inside_s(const Vec& x) const;  // x in some cube (open)
    // S(delta) = {dist(x, S) < 2 delta sqrt(n)}
    bool inside_s_dilate(const Vec& x) const;
};

// Smooth partition sigma_i (sum 1 on S) and unit-mass bumps b_i
// (supp in Q(z_i, 2 delta), analytic normalization).
class PartitionFamily {
  public:
    PartitionFamily(const CubeComplex& cx, int quad_per_cube = 6);

    double sigma(int i, const Vec& x) const;
    double bump(int i, const Vec& x) const;  // integral one
    double bump_radius() const { return bump_r_; }
    // High-order quadrature of f sigma_i over the cube neighborhood.
    double mass(int i, const std::function<double(const Vec&)>& f) const;
    // <b_root, sigma_j>, cached (used to re-project after a root-bump shift).
    double bump_sigma_mass(int j) const;
    // Midpoint quadrature over S on the family lattice (diagnostics).
    double integrate(const std::function<double(const Vec&)>& f) const;
    double quad_step() const { return step_; }
    const std::vector<Vec>& quad_points() const { return qpts_; }

  private:
    const CubeComplex* cx_;
    double step_;
    double mollify_w_;
    double bump_r_;
    double bump_scale_;  // analytic normalization of the raw profile
    std::vector<Vec> qpts_;
    mutable std::vector<double> bsm_;  // lazily filled bump_sigma_mass table
    double raw_m(int i, const Vec& x) const;
    double sigma_sum(const Vec& x) const;
    friend struct ChainDecomposition;
};

// Per-input decomposition state: masses <f, sigma_j> and subtree sums.
struct ChainDecomposition {
    std::vector<double> sigma_mass;
    std::vector<double> subtree_mass;
    double total_mass = 0;

    static ChainDecomposition compute(const CubeComplex& cx, const PartitionFamily& fam,
                                      const PointFn& f, double mean_tol);
    // T_i f as a callable (f sigma_i plus bump transfers).
    PointFn t_piece(const CubeComplex& cx, const PartitionFamily& fam, const PointFn& f,
                    int i) const;
    // Bump coefficients of T_i f: pairs (cube index m, coefficient).
    std::vector<std::pair<int, double>> bump_coefs(const CubeComplex& cx, int i) const;
};

struct ChainApplyOpts {
    int nphi = 24;
    double step_rel = 1.0 / 6.0;  // radial step = step_rel * delta
    double mean_tol = 1e-5;       // relative precondition tolerance on |int f|
};

// B f = sum_i B_{Q_i} T_i f, evaluated at x.
Vec chain_apply_at(const CubeComplex& cx, const PartitionFamily& fam,
                   const ChainDecomposition& dec, const PointFn& f, const Vec& x,
                   const ChainApplyOpts& opts);

// Adjoint B* g = sum_i T_i^* B_{Q_i}^* g with pair integrals memoized per call
// session in `cache` (key: cube*size+bump_index).
struct ChainAdjointSession {
    std::map<long long, double> pair_cache;
};
double chain_apply_adjoint_at(const CubeComplex& cx, const PartitionFamily& fam,
                              const VecPointFn& g, const Vec& x, ChainAdjointSession& session,
                              int ny = 12, int nr = 6);

}  // namespace divtime
