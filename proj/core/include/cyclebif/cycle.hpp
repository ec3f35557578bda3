#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "cyclebif/integrate.hpp"
#include "cyclebif/system.hpp"

namespace cyclebif {

/// Oriented hyperplane section {x : <normal, x - point> = 0}; crossings are
/// counted in the direction <normal, f> > 0.
struct Section {
    Vec point;
    Vec normal;  // stored normalized
};

struct CycleSearchConfig {
    Vec initial_guess;
    double settle_time = 50.0;        // pre-integration toward the attractor
    std::optional<Section> section;   // nullopt: through the settled point, normal = f
    double newton_tol = 1e-12;
    int max_newton_iter = 25;
    double floquet_tol = 1e-6;
    double return_horizon = 200.0;    // max time to wait for a section return
};

/// An attracting limit cycle: anchor x0(0), minimal period T*, dense orbit
/// over [0, T*], monodromy Y(T*) and its eigenvalues sorted by descending
/// modulus. evaluate() reduces its argument mod T*.
struct LimitCycle {
    Vec anchor;
    double period_min = 0.0;
    Trajectory orbit;
    Mat monodromy;
    std::vector<std::complex<double>> multipliers;
    Section section;
    double floquet_tol = 1e-6;

    Vec evaluate(double t) const;
};

struct FloquetReport {
    bool holds = false;
    double mu1_deviation = 0.0;  // |mu_1 - 1|
    std::vector<double> moduli;
    double margin = 0.0;
    std::string details;
};

/// T*-periodic solution of the adjoint system, normalized so that
/// <x0'(t), z0(t)> = 1 for all t.
struct AdjointOrbit {
    Trajectory orbit;  // integrated backward over [T*, 0]
    double scale = 1.0;
    double period = 0.0;
    double normalization_residual = 0.0;

    Vec evaluate(double t) const;
};

/// Newton on the Poincare return map of the section, return time located on
/// the dense output. Throws ConvergenceError (no return / Newton failure) or
/// ConfigError (degenerate section).
LimitCycle find_limit_cycle(const SystemDef& sys, const CycleSearchConfig& search,
                            const IntegratorConfig& cfg);

/// Hypothesis check: mu_1 = 1 (within cycle.floquet_tol) and |mu_i| <= 1 - margin.
FloquetReport check_floquet_hypothesis(const LimitCycle& cycle, double margin = 1e-3);

/// Builds z0 from the unit left eigenvector of the monodromy matrix, backward
/// adjoint integration over one period, and a single scalar rescale. Records
/// the normalization residual over >= 64 samples.
AdjointOrbit adjoint_orbit(const SystemDef& sys, const LimitCycle& cycle,
                           const IntegratorConfig& cfg);

}  // namespace cyclebif
