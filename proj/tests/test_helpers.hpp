#pragma once

#include <cmath>
#include <random>

#include "cyclebif/cycle.hpp"
#include "cyclebif/system.hpp"

namespace cyclebif::testing {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline FourierSeries series(std::initializer_list<std::pair<int, std::complex<double>>> terms) {
    FourierSeries fs;
    for (const auto& t : terms) fs.terms.push_back(t);
    return fs;
}

/// The planar example with forcing coefficients a_1, b_0, c_2.
inline SystemDef planar_system(std::complex<double> a1 = {0, 0}, std::complex<double> b0 = {0, 0},
                               std::complex<double> c2 = {0, 0}, double forcing_period = kTwoPi) {
    return make_paper_planar(series({{1, a1}}), series({{0, b0}}), series({{2, c2}}),
                             forcing_period);
}

inline IntegratorConfig tight_cfg(double tol = 1e-12) {
    IntegratorConfig cfg;
    cfg.abs_tol = cfg.rel_tol = tol;
    return cfg;
}

/// Section through (1,0) with normal (0,1): anchors the cycle phase at the
/// point where the example orbit starts, so phases match closed forms.
inline CycleSearchConfig paper_search() {
    CycleSearchConfig s;
    s.initial_guess = Eigen::Vector2d(1.3, 0.0);
    Section sec;
    sec.point = Eigen::Vector2d(1.0, 0.0);
    sec.normal = Eigen::Vector2d(0.0, 1.0);
    s.section = sec;
    return s;
}

inline LimitCycle paper_cycle(const SystemDef& sys, double tol = 1e-12) {
    return find_limit_cycle(sys, paper_search(), tight_cfg(tol));
}

inline double circ_dist(double a, double b, double period) {
    double d = std::fmod(std::abs(a - b), period);
    return std::min(d, period - d);
}

}  // namespace cyclebif::testing
