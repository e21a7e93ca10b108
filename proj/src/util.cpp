#include "divtime/util.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace divtime {

const Quad1D& gauss_legendre(int k) {
    static std::mutex mu;
    static std::map<int, Quad1D> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    if (k < 1 || k > 128) throw std::invalid_argument("gauss_legendre: bad order");

    Quad1D q;
    q.x.resize(k);
    q.w.resize(k);
    for (int i = 0; i < k; ++i) {
        // Chebyshev initial guess, Newton on P_k.
        double x = std::cos(M_PI * (i + 0.75) / (k + 0.5));
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= k; ++j) {
                double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            double dp = k * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1.0, p1 = x;
        for (int j = 2; j <= k; ++j) {
            double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
            p0 = p1;
            p1 = p2;
        }
        double dp = k * (x * p1 - p0) / (x * x - 1.0);
        q.x[i] = x;
        q.w[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    auto [pos, ok] = cache.emplace(k, std::move(q));
    return pos->second;
}

double tree_sum(std::span<const double> xs) {
    std::size_t n = xs.size();
    if (n == 0) return 0.0;
    if (n == 1) return xs[0];
    if (n <= 8) {
        double s = 0;
        for (double v : xs) s += v;
        return s;
    }
    std::size_t half = n / 2;
    return tree_sum(xs.subspan(0, half)) + tree_sum(xs.subspan(half));
}

int worker_count() {
    static int n = [] {
        if (const char* env = std::getenv("DIVTIME_WORKERS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc ? static_cast<int>(hc) : 1;
    }();
    return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    int nw = worker_count();
    if (n == 0) return;
    if (nw <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    int spawn = std::min<std::size_t>(nw, n) - 1;
    pool.reserve(spawn);
    for (int t = 0; t < spawn; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

namespace {
// CDF and first moment of the kernel (15/16)(1-u^2)^2 on [-1,1].
double kern_cdf(double u) {
    if (u <= -1) return 0;
    if (u >= 1) return 1;
    return 0.5 + (15.0 / 16.0) * (u - 2.0 * u * u * u / 3.0 + u * u * u * u * u / 5.0);
}
double kern_m1(double u) {
    // int_{-1}^{u} t K(t) dt
    if (u <= -1) return 0;
    if (u >= 1) u = 1;
    auto F = [](double t) {
        return (15.0 / 16.0) * (t * t / 2.0 - t * t * t * t / 2.0 + t * t * t * t * t * t / 6.0);
    };
    return F(u) - F(-1.0);
}
}  // namespace

double mollified_ramp(double s, double w, double m) {
    if (m <= 0) {
        if (s <= 0) return 0;
        if (s >= w) return 1;
        return s / w;
    }
    double c1 = (s - w) / m, c2 = s / m;
    // ramp((s-u)/w) is 1 for u <= s-w, linear for u in (s-w, s), 0 for u >= s.
    double plateau = kern_cdf(c1);
    double lin = (s / w) * (kern_cdf(c2) - kern_cdf(c1)) - (m / w) * (kern_m1(c2) - kern_m1(c1));
    return plateau + lin;
}

double mollified_ramp_d(double s, double w, double m) {
    if (m <= 0) return (s > 0 && s < w) ? 1.0 / w : 0.0;
    double c1 = (s - w) / m, c2 = s / m;
    return (kern_cdf(c2) - kern_cdf(c1)) / w;
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::array<double, 2> linear_fit(std::span<const double> x, std::span<const double> y) {
    std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw std::invalid_argument("linear_fit: need >= 2 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double det = n * sxx - sx * sx;
    double b = (n * sxy - sx * sy) / det;
    double a = (sy - b * sx) / n;
    return {a, b};
}

}  // namespace divtime
