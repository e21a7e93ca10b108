#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace divtime {

// Spatial point / vector. Only the first `dim` entries of a context are used.
using Vec = std::array<double, 3>;

inline Vec vec2(double x, double y) { return Vec{x, y, 0.0}; }

inline double dot(const Vec& a, const Vec& b, int dim) {
    double s = 0;
    for (int d = 0; d < dim; ++d) s += a[d] * b[d];
    return s;
}

inline double norm2(const Vec& a, int dim) { return std::sqrt(dot(a, a, dim)); }

inline double norm_inf(const Vec& a, int dim) {
    double m = 0;
    for (int d = 0; d < dim; ++d) m = std::max(m, std::abs(a[d]));
    return m;
}

inline Vec axpy(double a, const Vec& x, const Vec& y, int dim) {
    Vec r{};
    for (int d = 0; d < dim; ++d) r[d] = a * x[d] + y[d];
    return r;
}

struct Box {
    int dim = 2;
    Vec lo{}, hi{};

    double width(int d) const { return hi[d] - lo[d]; }
    bool contains(const Vec& x, double pad = 0.0) const {
        for (int d = 0; d < dim; ++d)
            if (x[d] < lo[d] - pad || x[d] > hi[d] + pad) return false;
        return true;
    }
    double volume() const {
        double v = 1;
        for (int d = 0; d < dim; ++d) v *= width(d);
        return v;
    }
};

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes on [-1,1], computed by Newton iteration once per order.
// ---------------------------------------------------------------------------
struct Quad1D {
    std::vector<double> x, w;
};

const Quad1D& gauss_legendre(int k);

// Deterministic pairwise-tree summation: result independent of thread count.
double tree_sum(std::span<const double> xs);

// Chunked parallel loop over [0, n). Worker count from DIVTIME_WORKERS or
// hardware_concurrency. fn(i) must be safe to run concurrently for distinct i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);
int worker_count();

// ---------------------------------------------------------------------------
// Smooth profiles
// ---------------------------------------------------------------------------

// Quintic smoothstep: 0 for s<=0, 1 for s>=1, C^2.
inline double smooth_step(double s) {
    if (s <= 0) return 0.0;
    if (s >= 1) return 1.0;
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

// C^infty radial profile exp(-1/(1-s^2)) on |s|<1 (unnormalized).
inline double bump_profile(double s2) {
    if (s2 >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - s2));
}

// Linear ramp of width w mollified with the C^1 kernel (15/16)(1-u^2)^2 of
// half-width m. Exactly 0 for s <= -m, 1 for s >= w + m, and |d/ds| <= 1/w.
double mollified_ramp(double s, double w, double m);
double mollified_ramp_d(double s, double w, double m);

// ---------------------------------------------------------------------------
// Misc
// ---------------------------------------------------------------------------
struct Rng {
    std::mt19937_64 eng;
    explicit Rng(std::uint64_t seed) : eng(seed) {}
    double uniform(double a, double b) {
        std::uniform_real_distribution<double> d(a, b);
        return d(eng);
    }
    int uniform_int(int a, int b) {
        std::uniform_int_distribution<int> d(a, b);
        return d(eng);
    }
};

// Fixed-format float for byte-stable CSV bodies.
std::string fmt_g(double v);

// Least-squares fit of y = a + b*x; returns {a, b}.
std::array<double, 2> linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace divtime
