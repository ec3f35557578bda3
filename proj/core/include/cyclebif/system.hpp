#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cyclebif/errors.hpp"
#include "cyclebif/expr.hpp"

namespace cyclebif {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Field value with optional spatial Jacobian d(value_i)/d(x_j).
struct FieldEval {
    Vec value;
    std::optional<Mat> jacobian;
};

/// Complex trigonometric polynomial sum_m c_m e^{i m t}.
struct FourierSeries {
    std::vector<std::pair<int, std::complex<double>>> terms;

    std::complex<double> eval(double t) const;
    std::complex<double> coefficient(int m) const;
    /// Numeric sup-norm max_t |f(t)| over one 2*pi period.
    double sup_norm(int samples = 4096) const;
    bool is_zero() const;
};

/// A periodically forced system  x' = f(x) + eps * g(t, x, eps).
/// f is autonomous; g is forcing_period-periodic in t. Immutable after
/// construction; evaluation is reentrant.
struct SystemDef {
    std::string name;
    int n = 0;
    double forcing_period = 0.0;
    std::map<std::string, double> params;
    std::vector<std::string> f_source, g_source;  // empty for builtins
    bool expression_based = false;

    using ConstVecRef = Eigen::Ref<const Vec>;
    std::function<void(ConstVecRef x, Vec& out, Mat* jac)> f_impl;
    std::function<void(double t, ConstVecRef x, double eps, Vec& out, Mat* jac)> g_impl;
};

/// f(x), with f'(x) by dual-number differentiation (expression systems)
/// or analytic closures (builtins) when requested.
FieldEval eval_f(const SystemDef& sys, const Vec& x, bool want_jacobian = false);

/// g(t, x, eps), Jacobian in x on request.
FieldEval eval_g(const SystemDef& sys, double t, const Vec& x, double eps,
                 bool want_jacobian = false);

/// Builds a system from expression strings. f uses variables x1..xn and the
/// parameter names; g additionally sees t and eps. Validates n >= 2, autonomy
/// of f, and spot-checks g's declared period on random points.
SystemDef make_expression_system(const std::string& name, int n,
                                 const std::vector<std::string>& f_exprs,
                                 const std::vector<std::string>& g_exprs,
                                 const std::map<std::string, double>& params,
                                 double forcing_period);

/// The planar oscillator x' = (1-|x|^2)x + i|x|^2 x realized in real
/// coordinates, with forcing g = a(t) + b(t) x + c(t) conj(x) given by
/// Fourier coefficient lists. forcing_period must be a positive integer
/// multiple of 2*pi (default one period).
SystemDef make_paper_planar(const FourierSeries& a, const FourierSeries& b,
                            const FourierSeries& c,
                            double forcing_period = 6.283185307179586476925287);

/// Registered builtin system names.
std::vector<std::string> builtin_names();

/// One-line parameter schema for a registered builtin.
std::string builtin_parameter_help(const std::string& name);

/// Throws ConfigError listing available systems if `name` is unknown.
void expect_builtin(const std::string& name);

}  // namespace cyclebif
