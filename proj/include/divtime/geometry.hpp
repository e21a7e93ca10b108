#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "divtime/util.hpp"

namespace divtime {

// One boundary chart: after rotation/translation the boundary piece is the
// graph {x_n = psi(t, x')} over a transverse rectangle, domain on the side
// x_n < psi. Rotation is row-major n x n, local = rot * (x - trans).
struct GraphPatch {
    int dim = 2;
    std::array<double, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Vec trans{};
    Box rect;                // transverse box, rect.dim = dim-1
    double box_bottom = 0;   // local normal-coordinate range of the chart box
    double box_top = 1;
    double t0 = 0, t1 = 1;
    std::function<double(double, const Vec&)> graph;  // psi(t, x') > 0
    double alpha = 1, beta = 1;
    double holder_const_time = 0, holder_const_space = 1;

    Vec to_local(const Vec& x) const;
    Vec to_global(const Vec& xloc) const;
    Vec normal_dir() const;  // global direction of the local x_n axis
    bool covers_lateral(const Vec& xloc, double pad = 0.0) const;
    bool covers(const Vec& xloc, double pad = 0.0) const;
    double psi(double t, const Vec& xloc) const;  // graph height over x'

    double sampled_time_quotient(int nu = 24, int ns = 24) const;
    double sampled_space_quotient(int nu = 48, int ns = 8) const;
};

struct ThetaFit {
    double theta_hat = 0;
    double c_hat = 0;
};

// Modulus of continuity for t -> d(t,x): |t-s| < delta(eps) implies
// |d(t,x)-d(s,x)| < eps/M.
struct ModulusOfContinuity {
    double M = 32;
    double alpha = 1;
    double l_time = 0;  // worst patch time-Holder constant
    double delta_min = 1e-6;
    double t_span = 1;
    bool numeric = false;
    std::vector<double> num_eps, num_delta;  // sampled table when alpha == 0

    double operator()(double eps) const;
};

class MovingDomain {
  public:
    int dim = 2;
    double t0 = 0, t1 = 1;
    std::vector<GraphPatch> patches;
    std::vector<Box> core;  // static boxes inside every slice they intersect
    double theta = 1;
    Box bbox;
    std::string name = "custom";

    // Optional analytic fast paths (set for builtins).
    std::function<bool(double, const Vec&)> analytic_inside;
    std::function<void(double, double, std::vector<Vec>&)> analytic_boundary;

    MovingDomain();

    bool contains(double t, const Vec& x) const;
    bool inside_core(const Vec& x) const;
    // Distance from x to the slice boundary; 0 outside the slice.
    double slice_distance(double t, const Vec& x) const;
    std::vector<Vec> boundary_samples(double t, double pitch) const;

    void set_resolution(double pitch);
    double resolution() const;
    double min_inradius(int nt_samples = 9) const;
    bool time_independent() const;

    // Fitted boundary-layer exponent: LS fit of log max_t |{d < eps}| vs log eps.
    ThetaFit estimate_theta(const std::vector<double>& eps_grid, int nt_samples = 5) const;

    ModulusOfContinuity modulus(double M, double dt_min = 1e-4) const;

    static MovingDomain builtin(const std::string& spec);  // e.g. "moving-cusp(1,0.5)"
    static MovingDomain from_json_file(const std::string& path);

    struct DistSlice {
        double t = 0;
        double pitch = 0;
        int nx = 0, ny = 0;
        Vec origin{};
        std::vector<float> d;           // 0 outside the slice
        double at(const Vec& x) const;  // bilinear, clamped to 0
    };
    const DistSlice& dist_slice(double t) const;  // builds and caches

  private:
    struct Cache;
    std::shared_ptr<Cache> cache_;  // shared on copy; domain is immutable after build
    std::shared_ptr<DistSlice> build_slice(double t) const;
};

// Validates patch invariants (psi within the chart box, sampled Holder
// quotients within declared constants); throws std::invalid_argument.
void validate_patches(const MovingDomain& dom);

}  // namespace divtime
