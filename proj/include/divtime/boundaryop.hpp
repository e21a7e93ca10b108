#pragma once

#include "divtime/geometry.hpp"
#include "divtime/refop.hpp"
#include "divtime/util.hpp"

namespace divtime {

// Weighted Hardy operator checks on (0,1].
struct HardyResult {
    double lhs = 0, rhs = 0, ratio = 0, bound = 0;
};

// (int ((1/x) int_0^x f)^p x^b)^{1/p} <= p/(p-b-1) (int f^p x^b)^{1/p},
// valid for p > 1, b < p-1.
HardyResult hardy_forward(const std::function<double(double)>& f, double p, double b,
                          int n = 20000);

// Adjoint form with (1/x) int_x^infty f and constant p/(b+1), b > p-1.
HardyResult hardy_adjoint(const std::function<double(double)>& f, double p, double b,
                          int n = 20000);

// Weight-transfer exponent of the graph-region operator (local statement,
// valid for 0 < b <= p in the middle branch).
double theta_branch_34(double b, double p, double beta);

// Divergence inverse on the subgraph region of one chart: the n-th local
// component is -int_{x_n}^{psi} f along the vertical line, all others zero.
// Acts slice-by-slice, so it commutes exactly with d/dt and time differences.
class GraphRegionOp {
  public:
    GraphRegionOp(const GraphPatch& patch, double step) : patch_(patch), step_(step) {}

    const GraphPatch& patch() const { return patch_; }

    // f given in global coordinates; x global. Zero when x is laterally
    // outside the chart or above the graph.
    Vec apply_at(double t, const PointFn& f_global, const Vec& x_global) const;

    // B* g = -int_{bottom}^{x_n} (g . n) along the same line.
    double apply_adjoint_at(double t, const VecPointFn& g_global, const Vec& x_global) const;

    // Distance from x to the graph surface of this chart.
    double graph_distance(double t, const Vec& x_global, int nsamples = 400) const;

  private:
    GraphPatch patch_;
    double step_;
    double line_integral(double t, const std::function<double(double)>& h, double s0,
                         double s1) const;
};

}  // namespace divtime
