#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "cyclebif/cycle.hpp"

namespace cyclebif {

/// A classified zero of the bifurcation function M on [0, T*).
struct ZeroRecord {
    double theta_star = 0.0;
    int index = 0;                  // +1: sign change - to +, -1: + to -, 0: tangency
    int multiplicity_estimate = 0;  // 0 means "flat" (no reliable estimate)
    bool flat = false;              // tangency within tolerance
    double refinement_residual = 0.0;  // |M(theta_star)|
};

/// Sampled bifurcation function M(theta) over one minimal period, with an
/// evaluator for off-grid refinement.
struct MalkinProfile {
    int k = 1;               // T = k * T*
    double period_min = 0.0; // T*
    std::vector<double> grid;
    std::vector<double> values;
    double sup_norm = 0.0;
    std::vector<ZeroRecord> zeros;
    std::function<double(double)> evaluator;
};

/// M(theta) = int_0^{kT*} <g(t, x0(t+theta), 0), z0(t+theta)> dt at a single
/// phase, by the quadrature-augmented integrator.
double malkin_value(const SystemDef& sys, const LimitCycle& cycle, const AdjointOrbit& adjoint,
                    int k, double theta, const IntegratorConfig& cfg);

/// Samples M over a uniform grid of size grid_size (>= 512) on [0, T*).
/// Requires sys.forcing_period = k * T* within 1e-6 relative. Grid evaluation
/// may run on several threads; results are thread-count independent.
MalkinProfile malkin_function(const SystemDef& sys, const LimitCycle& cycle,
                              const AdjointOrbit& adjoint, int k, int grid_size,
                              const IntegratorConfig& cfg, int threads = 1);

/// The planar example's closed form 2*pi*Re[(a1 e^{-i theta} + b0 + c2 e^{-2i theta})(1-i)].
double closed_form_malkin_planar(std::complex<double> a1, std::complex<double> b0,
                                 std::complex<double> c2, double theta);

/// Trapezoidal Fourier coefficient (1/2pi) int f(t) e^{-imt} dt from uniform
/// samples over one period (endpoint excluded). Requires >= 4|m| + 4 samples.
std::complex<double> fourier_coefficient(const std::vector<std::complex<double>>& samples, int m);

/// Locates and classifies the zeros of M: sign changes bracketed on the grid
/// (wrap-around included) and refined by bisection; sub-flat_tol |M| minima
/// without sign change recorded as index-0 tangencies. Multiplicity estimated
/// from a local polynomial fit (advisory only). Throws ConvergenceError when
/// M is identically zero (sup_norm below 1e-12).
void find_zeros(MalkinProfile& profile, double refine_tol = 1e-10, double flat_tol_rel = 1e-9);

enum class Claim { stable, unstable, inconclusive, none_nearby };

const char* to_string(Claim c);

struct Prediction {
    double theta_star = 0.0;
    Claim claim = Claim::inconclusive;
    int index = 0;
};

struct PredictionSet {
    std::vector<Prediction> predictions;
    bool none_nearby = false;  // empty zero list with M not identically zero
};

/// Stability claims per zero following the index dichotomy of the main
/// theorem's statement (stable at +1, unstable at -1, inconclusive at 0).
/// The verification harness treats these as claims under test, not ground
/// truth: measured stability comes from Floquet multipliers.
PredictionSet predict(const MalkinProfile& profile);

}  // namespace cyclebif
