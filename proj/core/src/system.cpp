#include "cyclebif/system.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace cyclebif {

namespace {
constexpr double kTwoPi = 6.283185307179586476925287;
}

std::complex<double> FourierSeries::eval(double t) const {
    std::complex<double> s{0.0, 0.0};
    for (const auto& [m, c] : terms) s += c * std::polar(1.0, m * t);
    return s;
}

std::complex<double> FourierSeries::coefficient(int m) const {
    std::complex<double> s{0.0, 0.0};
    for (const auto& [mm, c] : terms)
        if (mm == m) s += c;
    return s;
}

double FourierSeries::sup_norm(int samples) const {
    if (terms.empty()) return 0.0;
    double best = 0.0;
    for (int i = 0; i < samples; ++i)
        best = std::max(best, std::abs(eval(kTwoPi * i / samples)));
    return best;
}

bool FourierSeries::is_zero() const {
    for (const auto& [m, c] : terms)
        if (std::abs(c) != 0.0) return false;
    return true;
}

FieldEval eval_f(const SystemDef& sys, const Vec& x, bool want_jacobian) {
    if (x.size() != sys.n) throw ConfigError("eval_f: state dimension mismatch");
    if (!x.allFinite()) throw ConfigError("eval_f: non-finite state");
    FieldEval out;
    out.value.resize(sys.n);
    if (want_jacobian) {
        out.jacobian.emplace(sys.n, sys.n);
        sys.f_impl(x, out.value, &*out.jacobian);
    } else {
        sys.f_impl(x, out.value, nullptr);
    }
    return out;
}

FieldEval eval_g(const SystemDef& sys, double t, const Vec& x, double eps, bool want_jacobian) {
    if (x.size() != sys.n) throw ConfigError("eval_g: state dimension mismatch");
    if (eps < 0.0) throw ConfigError("eval_g: eps must be non-negative");
    FieldEval out;
    out.value.resize(sys.n);
    if (want_jacobian) {
        out.jacobian.emplace(sys.n, sys.n);
        sys.g_impl(t, x, eps, out.value, &*out.jacobian);
    } else {
        sys.g_impl(t, x, eps, out.value, nullptr);
    }
    return out;
}

namespace {

// Slot layout shared by f and g: [t, x1..xn, eps, params...].
// f expressions simply never get t/eps declared.
struct ExprField {
    std::vector<Expr> comps;
    int n = 0;
    std::vector<double> param_values;

    void eval(double t, Eigen::Ref<const Vec> x, double eps, Vec& out, Mat* jac) const {
        std::vector<double> slots(static_cast<std::size_t>(2 + n) + param_values.size());
        slots[0] = t;
        for (int i = 0; i < n; ++i) slots[static_cast<std::size_t>(1 + i)] = x[i];
        slots[static_cast<std::size_t>(1 + n)] = eps;
        for (std::size_t p = 0; p < param_values.size(); ++p)
            slots[static_cast<std::size_t>(2 + n) + p] = param_values[p];
        if (!jac) {
            for (int i = 0; i < n; ++i) out[i] = comps[static_cast<std::size_t>(i)].eval(slots);
            return;
        }
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                Dual r = comps[static_cast<std::size_t>(i)].eval_dual(slots, 1 + j);
                if (j == 0) out[i] = r.v;
                (*jac)(i, j) = r.d;
            }
        }
    }
};

std::map<std::string, int> make_slot_map(int n, const std::map<std::string, double>& params,
                                         bool with_time_and_eps) {
    std::map<std::string, int> slots;
    if (with_time_and_eps) {
        slots["t"] = 0;
        slots["eps"] = 1 + n;
    }
    for (int i = 0; i < n; ++i) slots["x" + std::to_string(i + 1)] = 1 + i;
    int p = 2 + n;
    for (const auto& [k, v] : params) {
        (void)v;
        if (slots.count(k))
            throw ConfigError("parameter name '" + k + "' collides with a reserved variable");
        slots[k] = p++;
    }
    return slots;
}

}  // namespace

SystemDef make_expression_system(const std::string& name, int n,
                                 const std::vector<std::string>& f_exprs,
                                 const std::vector<std::string>& g_exprs,
                                 const std::map<std::string, double>& params,
                                 double forcing_period) {
    if (n < 2) throw ConfigError("system dimension must be at least 2, got " + std::to_string(n));
    if (forcing_period <= 0.0) throw ConfigError("forcing_period must be positive");
    if (static_cast<int>(f_exprs.size()) != n || static_cast<int>(g_exprs.size()) != n)
        throw ConfigError("system '" + name + "' needs exactly n = " + std::to_string(n) +
                          " expressions for f and for g");

    auto f_slots = make_slot_map(n, params, /*with_time_and_eps=*/false);
    auto g_slots = make_slot_map(n, params, /*with_time_and_eps=*/true);

    auto f_field = std::make_shared<ExprField>();
    auto g_field = std::make_shared<ExprField>();
    f_field->n = g_field->n = n;
    for (const auto& [k, v] : params) {
        f_field->param_values.push_back(v);
        g_field->param_values.push_back(v);
    }
    for (int i = 0; i < n; ++i) {
        try {
            f_field->comps.push_back(parse_expression(f_exprs[static_cast<std::size_t>(i)], f_slots));
        } catch (const ParseError& e) {
            throw ConfigError("f[" + std::to_string(i + 1) + "]: " + e.what());
        }
        try {
            g_field->comps.push_back(parse_expression(g_exprs[static_cast<std::size_t>(i)], g_slots));
        } catch (const ParseError& e) {
            throw ConfigError("g[" + std::to_string(i + 1) + "]: " + e.what());
        }
    }

    SystemDef sys;
    sys.name = name;
    sys.n = n;
    sys.forcing_period = forcing_period;
    sys.params = params;
    sys.f_source = f_exprs;
    sys.g_source = g_exprs;
    sys.expression_based = true;
    sys.f_impl = [f_field, n](Eigen::Ref<const Vec> x, Vec& out, Mat* jac) {
        f_field->eval(0.0, x, 0.0, out, jac);
    };
    sys.g_impl = [g_field](double t, Eigen::Ref<const Vec> x, double eps, Vec& out, Mat* jac) {
        g_field->eval(t, x, eps, out, jac);
    };

    // Spot-check the declared period of g on a few random points.
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    Vec x(n), gv(n), gv_shift(n);
    for (int trial = 0; trial < 4; ++trial) {
        double t = 10.0 * ud(rng);
        double eps = 0.05 * std::abs(ud(rng));
        for (int i = 0; i < n; ++i) x[i] = ud(rng);
        sys.g_impl(t, x, eps, gv, nullptr);
        sys.g_impl(t + forcing_period, x, eps, gv_shift, nullptr);
        double scale = 1.0 + gv.norm();
        if ((gv - gv_shift).norm() > 1e-8 * scale)
            throw ConfigError("g of system '" + name + "' is not periodic with the declared forcing_period " +
                              std::to_string(forcing_period));
    }
    return sys;
}

SystemDef make_paper_planar(const FourierSeries& a, const FourierSeries& b,
                            const FourierSeries& c, double forcing_period) {
    double ratio = forcing_period / kTwoPi;
    if (forcing_period <= 0.0 || std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1)
        throw ConfigError("paper_planar forcing_period must be a positive multiple of 2*pi");

    SystemDef sys;
    sys.name = "paper_planar";
    sys.n = 2;
    sys.forcing_period = forcing_period;
    sys.expression_based = false;
    sys.f_impl = [](Eigen::Ref<const Vec> x, Vec& out, Mat* jac) {
        const double x1 = x[0], x2 = x[1];
        const double s = x1 * x1 + x2 * x2;
        out[0] = (1.0 - s) * x1 - s * x2;
        out[1] = (1.0 - s) * x2 + s * x1;
        if (jac) {
            (*jac)(0, 0) = (1.0 - s) - 2.0 * x1 * x1 - 2.0 * x1 * x2;
            (*jac)(0, 1) = -2.0 * x2 * x1 - 2.0 * x2 * x2 - s;
            (*jac)(1, 0) = -2.0 * x1 * x2 + 2.0 * x1 * x1 + s;
            (*jac)(1, 1) = (1.0 - s) - 2.0 * x2 * x2 + 2.0 * x2 * x1;
        }
    };
    sys.g_impl = [a, b, c](double t, Eigen::Ref<const Vec> x, double /*eps*/, Vec& out, Mat* jac) {
        const std::complex<double> xc{x[0], x[1]};
        const std::complex<double> av = a.eval(t);
        const std::complex<double> bv = b.eval(t);
        const std::complex<double> cv = c.eval(t);
        const std::complex<double> gv = av + bv * xc + cv * std::conj(xc);
        out[0] = gv.real();
        out[1] = gv.imag();
        if (jac) {
            (*jac)(0, 0) = bv.real() + cv.real();
            (*jac)(0, 1) = -bv.imag() + cv.imag();
            (*jac)(1, 0) = bv.imag() + cv.imag();
            (*jac)(1, 1) = bv.real() - cv.real();
        }
    };
    return sys;
}

std::vector<std::string> builtin_names() { return {"paper_planar"}; }

std::string builtin_parameter_help(const std::string& name) {
    expect_builtin(name);
    return "a, b, c: Fourier coefficient lists [[m, re, im], ...] of the forcing "
           "g = a(t) + b(t)x + c(t)conj(x); optional forcing_period (positive multiple of 2*pi, "
           "default 2*pi)";
}

void expect_builtin(const std::string& name) {
    auto names = builtin_names();
    for (const auto& k : names)
        if (k == name) return;
    std::ostringstream os;
    os << "unknown builtin system '" << name << "'; available:";
    for (const auto& k : names) os << ' ' << k;
    throw ConfigError(os.str());
}

}  // namespace cyclebif
