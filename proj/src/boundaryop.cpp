#include "divtime/boundaryop.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace divtime {

namespace {
// Graded mesh x_k = (k/n)^3 on (0,1]: resolves power-type behavior at 0.
std::vector<double> graded_mesh(int n) {
    std::vector<double> x(n + 1);
    for (int k = 0; k <= n; ++k) {
        double u = static_cast<double>(k) / n;
        x[k] = u * u * u;
    }
    return x;
}
}  // namespace

HardyResult hardy_forward(const std::function<double(double)>& f, double p, double b, int n) {
    if (!(p > 1)) throw std::invalid_argument("hardy_forward: p > 1");
    if (!(b < p - 1)) throw std::invalid_argument("hardy_forward: requires b < p-1");
    auto x = graded_mesh(n);
    HardyResult r;
    r.bound = p / (p - b - 1);
    double cum = 0, lhs = 0, rhs = 0;
    double fprev = std::abs(f(x[0] > 0 ? x[0] : 1e-300));
    for (int k = 1; k <= n; ++k) {
        double fk = std::abs(f(x[k]));
        double dx = x[k] - x[k - 1];
        cum += 0.5 * (fk + fprev) * dx;
        double w = std::pow(x[k], b) * dx;
        lhs += std::pow(cum / x[k], p) * w;
        rhs += std::pow(fk, p) * w;
        fprev = fk;
    }
    r.lhs = std::pow(lhs, 1 / p);
    r.rhs = std::pow(rhs, 1 / p);
    r.ratio = r.rhs > 0 ? r.lhs / r.rhs : 0;
    return r;
}

HardyResult hardy_adjoint(const std::function<double(double)>& f, double p, double b, int n) {
    if (!(p > 1)) throw std::invalid_argument("hardy_adjoint: p > 1");
    if (!(b > p - 1)) throw std::invalid_argument("hardy_adjoint: requires b > p-1");
    auto x = graded_mesh(n);
    std::vector<double> fv(n + 1);
    for (int k = 0; k <= n; ++k) fv[k] = std::abs(f(x[k] > 0 ? x[k] : 1e-300));
    // tail cumulative int_x^1 f
    std::vector<double> tail(n + 1, 0.0);
    for (int k = n - 1; k >= 0; --k)
        tail[k] = tail[k + 1] + 0.5 * (fv[k] + fv[k + 1]) * (x[k + 1] - x[k]);
    HardyResult r;
    r.bound = p / (b + 1);
    double lhs = 0, rhs = 0;
    for (int k = 1; k <= n; ++k) {
        double dx = x[k] - x[k - 1];
        double w = std::pow(x[k], b) * dx;
        lhs += std::pow(tail[k] / x[k], p) * w;
        rhs += std::pow(fv[k], p) * w;
    }
    r.lhs = std::pow(lhs, 1 / p);
    r.rhs = std::pow(rhs, 1 / p);
    r.ratio = r.rhs > 0 ? r.lhs / r.rhs : 0;
    return r;
}

double theta_branch_34(double b, double p, double beta) {
    if (b <= 0) return 1.0;
    double crit = beta > 0 ? (p - 1) / beta : std::numeric_limits<double>::infinity();
    if (b <= p && p < crit) return beta;
    if ((p < b && b < crit) || (b < crit && crit <= p)) return beta * beta;
    throw std::domain_error("theta_branch_34: parameters outside the stated table");
}

// ---------------------------------------------------------------------------
// GraphRegionOp
// ---------------------------------------------------------------------------
double GraphRegionOp::line_integral(double t, const std::function<double(double)>& h, double s0,
                                    double s1) const {
    (void)t;
    if (s1 <= s0) return 0;
    int ns = std::max(4, static_cast<int>(std::ceil((s1 - s0) / step_)));
    if (ns % 2) ++ns;
    double hs = (s1 - s0) / ns, acc = 0;
    for (int i = 0; i <= ns; ++i) {
        double w = (i == 0 || i == ns) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * h(s0 + i * hs);
    }
    return acc * hs / 3.0;
}

Vec GraphRegionOp::apply_at(double t, const PointFn& f_global, const Vec& x_global) const {
    Vec xl = patch_.to_local(x_global);
    Vec out{};
    if (!patch_.covers_lateral(xl)) return out;
    double psi = patch_.psi(t, xl);
    double xn = xl[patch_.dim - 1];
    if (xn >= psi) return out;  // above the graph
    // integrate f along the vertical line from x_n to the graph
    Vec base = xl;
    auto h = [&](double s) {
        Vec ploc = base;
        ploc[patch_.dim - 1] = s;
        return f_global(patch_.to_global(ploc));
    };
    double val = -line_integral(t, h, xn, psi);
    Vec nd = patch_.normal_dir();
    for (int d = 0; d < patch_.dim; ++d) out[d] = val * nd[d];
    return out;
}

double GraphRegionOp::apply_adjoint_at(double t, const VecPointFn& g_global,
                                       const Vec& x_global) const {
    Vec xl = patch_.to_local(x_global);
    if (!patch_.covers_lateral(xl)) return 0;
    double xn = xl[patch_.dim - 1];
    Vec nd = patch_.normal_dir();
    Vec base = xl;
    auto h = [&](double s) {
        Vec ploc = base;
        ploc[patch_.dim - 1] = s;
        Vec gv = g_global(patch_.to_global(ploc));
        return dot(gv, nd, patch_.dim);
    };
    return -line_integral(t, h, patch_.box_bottom, xn);
}

double GraphRegionOp::graph_distance(double t, const Vec& x_global, int nsamples) const {
    Vec xl = patch_.to_local(x_global);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= nsamples; ++i) {
        Vec u{};
        u[0] = patch_.rect.lo[0] +
               (patch_.rect.hi[0] - patch_.rect.lo[0]) * i / nsamples;
        double v = patch_.psi(t, u);
        double d = std::hypot(u[0] - xl[0], v - xl[patch_.dim - 1]);
        best = std::min(best, d);
    }
    return best;
}

}  // namespace divtime
