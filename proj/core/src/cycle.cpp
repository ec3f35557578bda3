#include "cyclebif/cycle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cyclebif {

namespace {

double reduce_periodic(double t, double period) {
    double r = std::fmod(t, period);
    if (r < 0.0) r += period;
    return r;
}

double section_offset(const Section& sec, const Vec& x) {
    return sec.normal.dot(x - sec.point);
}

/// First time in (t_from, traj.t_end()] where the trajectory crosses the
/// section in the positive direction, having first left it. The state slice
/// of an augmented trajectory is examined through `state_dim`.
std::optional<double> first_directional_crossing(const Trajectory& traj, const Section& sec,
                                                 double t_from, int state_dim) {
    const double ta = traj.t_begin(), tb = traj.t_end();
    const int subsamples = 8;
    auto offset = [&](double t) {
        return sec.normal.dot(traj.evaluate(t).head(state_dim) - sec.point);
    };
    const double span = tb - ta;
    if (span <= 0.0) return std::nullopt;
    const int nsamp = std::max(64, static_cast<int>(traj.mesh().size()) * subsamples);
    const double dt = span / nsamp;

    // Phase A: wait until the offset has been properly negative, so the
    // departure from the section (offset rising through 0 at t_from) is not
    // itself reported as a return.
    bool armed = false;
    double t_prev = std::max(ta, t_from);
    double s_prev = offset(t_prev);
    if (s_prev < 0.0) armed = true;
    for (double t = t_prev + dt; t <= tb + 0.5 * dt; t += dt) {
        double tc = std::min(t, tb);
        double s = offset(tc);
        if (!armed) {
            if (s < 0.0) armed = true;
        } else if (s_prev < 0.0 && s >= 0.0) {
            // Bisection refine on the dense output.
            double lo = t_prev, hi = tc, slo = s_prev;
            for (int it = 0; it < 200 && (hi - lo) > 1e-14 * std::max(1.0, std::abs(hi)); ++it) {
                double mid = 0.5 * (lo + hi);
                double sm = offset(mid);
                if ((slo < 0.0) == (sm < 0.0)) {
                    lo = mid;
                    slo = sm;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        t_prev = tc;
        s_prev = s;
        if (tc >= tb) break;
    }
    return std::nullopt;
}

std::vector<std::complex<double>> sorted_eigenvalues(const Mat& m) {
    Eigen::EigenSolver<Mat> es(m);
    std::vector<std::complex<double>> ev(static_cast<std::size_t>(m.rows()));
    for (int i = 0; i < m.rows(); ++i) ev[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
    std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
        double ma = std::abs(a), mb = std::abs(b);
        if (ma != mb) return ma > mb;
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return ev;
}

// Orthonormal basis of the hyperplane orthogonal to `normal` (n x (n-1)).
Mat hyperplane_basis(const Vec& normal) {
    const int n = static_cast<int>(normal.size());
    Eigen::HouseholderQR<Mat> qr(normal);
    Mat q = qr.householderQ();
    return q.rightCols(n - 1);
}

}  // namespace

Vec LimitCycle::evaluate(double t) const {
    return orbit.evaluate(reduce_periodic(t, period_min));
}

Vec AdjointOrbit::evaluate(double t) const {
    return scale * orbit.evaluate(reduce_periodic(t, period));
}

LimitCycle find_limit_cycle(const SystemDef& sys, const CycleSearchConfig& search,
                            const IntegratorConfig& cfg) {
    const int n = sys.n;
    if (search.initial_guess.size() != n)
        throw ConfigError("cycle search initial_guess has wrong dimension");
    if (search.settle_time < 0.0) throw ConfigError("settle_time must be non-negative");

    Field f_only = forced_field(sys, 0.0);

    Vec settled = search.initial_guess;
    if (search.settle_time > 0.0)
        settled = integrate_endpoint(f_only, 0.0, settled, search.settle_time, cfg);

    Section sec;
    if (search.section) {
        sec = *search.section;
        if (sec.point.size() != n || sec.normal.size() != n)
            throw ConfigError("section point/normal dimension mismatch");
        double nn = sec.normal.norm();
        if (nn == 0.0) throw ConfigError("section normal must be non-zero");
        sec.normal /= nn;
    } else {
        Vec fv(n);
        sys.f_impl(settled, fv, nullptr);
        if (fv.norm() < 1e-12)
            throw ConfigError("degenerate section: the settled point is an equilibrium");
        sec.point = settled;
        sec.normal = fv / fv.norm();
    }

    // Bring the settled state onto the section at its first directional pass.
    Trajectory approach = integrate(f_only, 0.0, settled, search.return_horizon, cfg);
    std::optional<double> t_on;
    {
        double s0 = section_offset(sec, settled);
        // If the settled point starts on (or above) the section we still need
        // an honest directional pass; the crossing detector arms itself.
        (void)s0;
        t_on = first_directional_crossing(approach, sec, 0.0, n);
        if (!t_on) {
            // The settled state may sit exactly on the section already
            // (automatic sections do); accept it when transversal.
            Vec fv(n);
            sys.f_impl(settled, fv, nullptr);
            if (std::abs(section_offset(sec, settled)) < 1e-9 && sec.normal.dot(fv) > 0.0)
                t_on = 0.0;
        }
    }
    if (!t_on)
        throw ConvergenceError("no section return within horizon " +
                               std::to_string(search.return_horizon) +
                               " while approaching the section");
    Vec zeta = approach.evaluate(*t_on).head(n);

    const Mat basis = hyperplane_basis(sec.normal);  // n x (n-1)

    // Newton on the first-return map restricted to the section.
    double tau = 0.0;
    double horizon = search.return_horizon;
    Vec ret(n);
    Mat monodromy(n, n);
    bool converged = false;
    double residual = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < search.max_newton_iter; ++iter) {
        Trajectory aug = integrate_augmented(sys, 0.0, 0.0, zeta, horizon, cfg);
        std::optional<double> tc = first_directional_crossing(aug, sec, 0.0, n);
        if (!tc)
            throw ConvergenceError("no section return within horizon " +
                                   std::to_string(horizon));
        tau = *tc;
        Vec full = aug.evaluate(tau);
        ret = full.head(n);
        monodromy = Eigen::Map<const Mat>(full.data() + n, n, n);

        residual = (ret - zeta).norm();
        if (residual <= search.newton_tol) {
            converged = true;
            break;
        }

        Vec f_ret(n);
        sys.f_impl(ret, f_ret, nullptr);
        double transversal = sec.normal.dot(f_ret);
        if (std::abs(transversal) < 1e-12)
            throw ConfigError("degenerate section: the field is tangent at the return point");
        // Return-map derivative with the return-time correction projected out.
        Mat DR = (Mat::Identity(n, n) - f_ret * sec.normal.transpose() / transversal) * monodromy;
        Mat A = basis.transpose() * (DR - Mat::Identity(n, n)) * basis;
        Vec rhs = -basis.transpose() * (ret - zeta);
        Vec du = A.colPivHouseholderQr().solve(rhs);
        zeta += basis * du;
        horizon = std::min(search.return_horizon, 1.5 * tau + 1.0);
    }
    if (!converged)
        throw ConvergenceError("cycle Newton did not reach tol " +
                               std::to_string(search.newton_tol) + " (last residual " +
                               std::to_string(residual) + ")");

    LimitCycle cycle;
    cycle.anchor = zeta;
    cycle.period_min = tau;
    cycle.section = sec;
    cycle.floquet_tol = search.floquet_tol;
    cycle.orbit = integrate(forced_field(sys, 0.0), 0.0, zeta, tau, cfg);
    FlowResult fr = flow_with_sensitivity(sys, 0.0, 0.0, zeta, tau, cfg);
    cycle.monodromy = *fr.sensitivity;
    cycle.multipliers = sorted_eigenvalues(cycle.monodromy);
    return cycle;
}

FloquetReport check_floquet_hypothesis(const LimitCycle& cycle, double margin) {
    FloquetReport rep;
    rep.margin = margin;
    if (cycle.multipliers.empty()) {
        rep.details = "no multipliers computed";
        return rep;
    }
    rep.mu1_deviation = std::abs(cycle.multipliers[0] - std::complex<double>(1.0, 0.0));
    bool ok = rep.mu1_deviation <= cycle.floquet_tol;
    std::ostringstream os;
    os << "mu_1 = " << cycle.multipliers[0].real();
    if (cycle.multipliers[0].imag() != 0.0) os << " + " << cycle.multipliers[0].imag() << "i";
    os << " (|mu_1 - 1| = " << rep.mu1_deviation << ")";
    for (std::size_t i = 0; i < cycle.multipliers.size(); ++i) {
        double mod = std::abs(cycle.multipliers[i]);
        rep.moduli.push_back(mod);
        if (i >= 1) {
            os << ", |mu_" << i + 1 << "| = " << mod;
            if (mod > 1.0 - margin) {
                ok = false;
                os << " (violates margin " << margin << ")";
            }
        }
    }
    rep.holds = ok;
    rep.details = os.str();
    return rep;
}

AdjointOrbit adjoint_orbit(const SystemDef& sys, const LimitCycle& cycle,
                           const IntegratorConfig& cfg) {
    const int n = sys.n;
    const double period = cycle.period_min;

    // Left eigenvector of Y(T*) at eigenvalue 1, i.e. eigenvector of Y^T.
    Eigen::EigenSolver<Mat> es(cycle.monodromy.transpose());
    int best = -1, near_one = 0;
    for (int i = 0; i < n; ++i) {
        if (std::abs(es.eigenvalues()[i] - std::complex<double>(1.0, 0.0)) <= cycle.floquet_tol) {
            ++near_one;
            best = i;
        }
    }
    if (near_one == 0)
        throw ConvergenceError("adjoint: monodromy has no eigenvalue within floquet_tol of 1");
    if (near_one > 1)
        throw ConvergenceError(
            "adjoint: eigenvalue-1 eigenspace is numerically not one-dimensional (" +
            std::to_string(near_one) + " eigenvalues near 1)");
    Eigen::VectorXcd wc = es.eigenvectors().col(best);
    double max_imag = wc.imag().cwiseAbs().maxCoeff();
    if (max_imag > 1e-8 * wc.norm())
        throw ConvergenceError("adjoint: eigenvector at mu = 1 is not real");
    Vec w = wc.real();

    Vec f_anchor(n);
    sys.f_impl(cycle.anchor, f_anchor, nullptr);
    double proj = f_anchor.dot(w);
    if (std::abs(proj) < 1e-10 * f_anchor.norm() * w.norm())
        throw ConvergenceError(
            "adjoint: <x0'(0), w> is numerically zero, contradicting the simple-multiplier "
            "hypothesis");
    w /= proj;  // so <x0'(T*), z(T*)> = 1 at the start of the backward sweep

    // Backward in time the adjoint is stable along an attracting cycle.
    auto orbit_eval = [&cycle](double t) { return cycle.evaluate(t); };
    AdjointOrbit adj;
    adj.orbit = integrate_adjoint(sys, orbit_eval, period, w, 0.0, cfg);
    adj.period = period;
    double c = f_anchor.dot(adj.orbit.end_state());
    if (std::abs(c) < 1e-12)
        throw ConvergenceError("adjoint: normalization constant vanished");
    adj.scale = 1.0 / c;

    const int samples = 64;
    double worst = 0.0;
    Vec fx(n);
    for (int i = 0; i <= samples; ++i) {
        double t = period * i / samples;
        Vec x = cycle.evaluate(t);
        sys.f_impl(x, fx, nullptr);
        worst = std::max(worst, std::abs(fx.dot(adj.evaluate(t)) - 1.0));
    }
    adj.normalization_residual = worst;
    return adj;
}

}  // namespace cyclebif
