#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "cyclebif/errors.hpp"
#include "cyclebif/system.hpp"

namespace cyclebif {

/// Right-hand side y' = field(t, y); writes into the preallocated output.
using Field = std::function<void(double t, const Vec& y, Vec& dy)>;

struct IntegratorConfig {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    double max_step = 0.0;    // 0 = no cap
    double fixed_step = 0.0;  // >0 disables adaptivity (order tests)
    long long max_steps = 10'000'000;
    enum class Method { dopri54 } method = Method::dopri54;

    void validate() const;
};

/// Dense-output solution of an initial value problem. Immutable; evaluation
/// at an accepted mesh point reproduces the stored step endpoint exactly.
/// Supports backward spans (t1 < t0).
class Trajectory {
  public:
    double t_begin() const { return t0_; }
    double t_end() const { return t1_; }
    int dim() const { return dim_; }

    /// Interpolated state; t must lie in the span (tiny slack at the ends).
    Vec evaluate(double t) const;

    /// Accepted-step mesh, in integration order (includes both endpoints).
    std::vector<double> mesh() const;

    const Vec& begin_state() const { return y0_; }
    const Vec& end_state() const { return y1_; }

  private:
    friend class Stepper;
    struct Step {
        double t, h;                       // span [t, t+h], h signed
        Eigen::Matrix<double, Eigen::Dynamic, 5> coef;  // dense coefficients, n x 5
    };
    std::vector<Step> steps_;
    double t0_ = 0, t1_ = 0;
    int dim_ = 0;
    Vec y0_, y1_;
};

/// Endpoint of a flow computation, optionally with the sensitivity matrix
/// d x(t1) / d x(t0) and/or an accumulated scalar quadrature.
struct FlowResult {
    Vec endpoint;
    std::optional<Mat> sensitivity;
    std::optional<double> quadrature;
};

/// Adaptive integration with dense output over [t0, t1] (either direction).
Trajectory integrate(const Field& field, double t0, const Vec& x0, double t1,
                     const IntegratorConfig& cfg);

/// Endpoint-only integration (no dense storage).
Vec integrate_endpoint(const Field& field, double t0, const Vec& x0, double t1,
                       const IntegratorConfig& cfg);

/// Combined field for state + variational matrix of x' = f(x) + eps g(t,x,eps),
/// packed as [x, column-major Y], dimension n + n^2.
Field augmented_field(const SystemDef& sys, double eps);

/// Plain forced field x' = f(x) + eps g(t,x,eps).
Field forced_field(const SystemDef& sys, double eps);

/// Integrates state and the n x n variational matrix as one augmented system
/// sharing the adaptive step; sensitivity = d x(t1)/d x(t0) for f + eps g.
FlowResult flow_with_sensitivity(const SystemDef& sys, double eps, double t0, const Vec& x0,
                                 double t1, const IntegratorConfig& cfg);

/// Dense-output variant of the above; the trajectory carries [x, Y] packed.
Trajectory integrate_augmented(const SystemDef& sys, double eps, double t0, const Vec& x0,
                               double t1, const IntegratorConfig& cfg);

/// Adjoint system z' = -f'(orbit(t))^T z along a given orbit interpolant;
/// supports backward spans (t1 < t0).
Trajectory integrate_adjoint(const SystemDef& sys, const std::function<Vec(double)>& orbit,
                             double t0, const Vec& z0, double t1, const IntegratorConfig& cfg);

/// Integrates the state together with q' = integrand(t, x); quadrature error
/// is controlled with the state. The state may be zero-dimensional.
FlowResult integrate_with_quadrature(const Field& field,
                                     const std::function<double(double, const Vec&)>& integrand,
                                     double t0, const Vec& x0, double t1,
                                     const IntegratorConfig& cfg);

}  // namespace cyclebif
