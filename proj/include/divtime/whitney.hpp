#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "divtime/fields.hpp"
#include "divtime/geometry.hpp"

namespace divtime {

// Space-time Whitney cylinder P_j = I_j x Q_j. r is the spatial side length
// of the dyadic cube; the dilate P_j^* scales both extents by mp.
struct WhitneyCylinder {
    Vec corner{};     // lower spatial corner
    double r = 1;     // side length
    double i0 = 0, i1 = 1;
    double t_mid = 0, t_half = 0;  // base time and half-height (pre-clamp)
    bool full_time = false;        // spans the whole time axis
    int generation = 0;
    Vec center() const { return vec2(corner[0] + r / 2, corner[1] + r / 2); }

    bool in_space(const Vec& x, double dilate) const {
        Vec c = center();
        for (int d = 0; d < 2; ++d)
            if (std::abs(x[d] - c[d]) > dilate * r / 2) return false;
        return true;
    }
    bool in_time(double t, double dilate) const {
        if (full_time) return true;
        return std::abs(t - t_mid) <= dilate * t_half;
    }
};

struct CoverStats {
    int rejected_small = 0;
    double uncovered_area = 0;  // measure of {d > collar r_min} not covered
    double collar = 3.6;
};

class CylinderCover {
  public:
    double M = 32, Mp = 4, r_min = 0;
    std::vector<WhitneyCylinder> cyl;
    ModulusOfContinuity mod;
    CoverStats stats;

    static CylinderCover build(const MovingDomain& dom, const GridSpec& grid, double M,
                               double Mp, double r_min);

    // Cylinders whose chi support can reach time t.
    const std::vector<int>& active_at_time(int it) const { return by_time_[it]; }
    // Cylinder ids whose chi support can reach (t,x).
    void active_at(double t, const Vec& x, std::vector<int>& out) const;

    struct ChiEval {
        double val = 0;
        Vec grad{};
        double dt = 0;
    };
    // Normalized partition member chi_j and its derivatives at (t,x).
    ChiEval chi(int j, double t, const Vec& x) const;
    double chi_sum(double t, const Vec& x) const;  // = 1 on the covered set

    bool covered(double t, const Vec& x) const;

    std::string dump_json() const;
    // (overlap count, frequency) rows of the dilated-cylinder overlap.
    std::vector<std::array<int, 2>> overlap_histogram(const MovingDomain& dom, int nt_probe,
                                                      int nx_probe) const;
    void write_overlap_csv(const std::string& path, const MovingDomain& dom) const;

  private:
    friend class AssembledOperator;
    const MovingDomain* dom_ = nullptr;
    GridSpec grid_;
    std::vector<std::vector<int>> by_time_;
    // per generation, hashed spatial column -> cylinder ids
    std::vector<std::unordered_map<long long, std::vector<int>>> columns_;
    std::vector<double> gen_side_;
    double raw_m(int j, double t, const Vec& x) const;
    void raw_m_grad(int j, double t, const Vec& x, double& m, Vec& grad, double& mdt) const;
};

}  // namespace divtime
