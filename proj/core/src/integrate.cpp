#include "cyclebif/integrate.hpp"

#include <algorithm>
#include <cmath>

namespace cyclebif {

void IntegratorConfig::validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0))
        throw ConfigError("integrator tolerances must be positive");
    if (max_steps <= 0) throw ConfigError("integrator max_steps must be positive");
    if (max_step < 0.0) throw ConfigError("integrator max_step must be non-negative");
    if (fixed_step < 0.0) throw ConfigError("integrator fixed_step must be non-negative");
}

namespace {

// Dormand-Prince 5(4) coefficients (FSAL).
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense-output weights for the quartic continuous extension.
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

constexpr double kDivergenceGuard = 1e10;

}  // namespace

class Stepper {
  public:
    Stepper(const Field& field, double t0, const Vec& x0, double t1, const IntegratorConfig& cfg,
            Trajectory* dense)
        : f_(field), cfg_(cfg), dense_(dense), t_(t0), t1_(t1), y_(x0) {
        cfg.validate();
        n_ = static_cast<int>(x0.size());
        if (!x0.allFinite()) throw IntegrationError("non-finite initial state", t0);
        for (auto* k : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &ytmp_, &ynew_, &err_})
            k->resize(n_);
        if (dense_) {
            dense_->dim_ = n_;
            dense_->t0_ = t0;
            dense_->t1_ = t1;
            dense_->y0_ = x0;
        }
    }

    Vec run() {
        const double dir = (t1_ >= t_) ? 1.0 : -1.0;
        const double span = std::abs(t1_ - t_);
        if (span == 0.0) {
            if (dense_) dense_->y1_ = y_;
            return y_;
        }
        f_(t_, y_, k1_);  // FSAL seed
        double h = dir * initial_step(span);
        long long steps = 0;
        bool last_rejected = false;
        while (dir * (t1_ - t_) > 0.0) {
            if (++steps > cfg_.max_steps)
                throw IntegrationError("step count exhausted after " +
                                           std::to_string(cfg_.max_steps) + " steps",
                                       t_);
            if (cfg_.max_step > 0.0 && std::abs(h) > cfg_.max_step) h = dir * cfg_.max_step;
            if (dir * (t_ + h - t1_) > 0.0) h = t1_ - t_;  // land exactly on t1

            double err = do_stages(h);
            if (cfg_.fixed_step > 0.0) err = 0.0;

            if (err <= 1.0) {
                if (!ynew_.allFinite() || ynew_.norm() > kDivergenceGuard)
                    throw IntegrationError("solution blew up (non-finite or diverging state)",
                                           t_ + h);
                if (dense_) record_dense(h);
                t_ += h;
                y_.swap(ynew_);
                k1_.swap(k7_);  // FSAL
                if (cfg_.fixed_step > 0.0) {
                    h = dir * cfg_.fixed_step;
                } else {
                    double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
                    fac = std::min(last_rejected ? 1.0 : 5.0, std::max(0.2, fac));
                    h *= fac;
                }
                last_rejected = false;
            } else {
                double fac = std::max(0.2, 0.9 * std::pow(err, -0.2));
                h *= fac;
                last_rejected = true;
                if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t_)))
                    throw IntegrationError("step size underflow", t_);
            }
        }
        if (dense_) dense_->y1_ = y_;
        return y_;
    }

  private:
    double initial_step(double span) const {
        if (cfg_.fixed_step > 0.0) return cfg_.fixed_step;
        double sc = cfg_.abs_tol + cfg_.rel_tol * y_.norm();
        double d0 = y_.norm() / sc;
        double d1v = k1_.norm() / sc;
        double h0 = (d0 > 1e-5 && d1v > 1e-5) ? 0.01 * d0 / d1v : 1e-6;
        return std::min({h0, span, cfg_.max_step > 0.0 ? cfg_.max_step : span});
    }

    // One RK attempt from (t_, y_) with step h; returns the scaled error norm.
    double do_stages(double h) {
        ytmp_ = y_ + h * (a21 * k1_);
        f_(t_ + c2 * h, ytmp_, k2_);
        ytmp_ = y_ + h * (a31 * k1_ + a32 * k2_);
        f_(t_ + c3 * h, ytmp_, k3_);
        ytmp_ = y_ + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
        f_(t_ + c4 * h, ytmp_, k4_);
        ytmp_ = y_ + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
        f_(t_ + c5 * h, ytmp_, k5_);
        ytmp_ = y_ + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
        f_(t_ + h, ytmp_, k6_);
        ynew_ = y_ + h * (b1 * k1_ + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
        f_(t_ + h, ynew_, k7_);
        err_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);

        if (n_ == 0) return 0.0;
        double acc = 0.0;
        for (int i = 0; i < n_; ++i) {
            double sc = cfg_.abs_tol + cfg_.rel_tol * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
            double q = err_[i] / sc;
            acc += q * q;
        }
        return std::sqrt(acc / n_);
    }

    void record_dense(double h) {
        Trajectory::Step st;
        st.t = t_;
        st.h = h;
        st.coef.resize(n_, 5);
        st.coef.col(0) = y_;
        st.coef.col(1) = ynew_ - y_;
        st.coef.col(2) = h * k1_ - st.coef.col(1);
        st.coef.col(3) = st.coef.col(1) - h * k7_ - st.coef.col(2);
        st.coef.col(4) =
            h * (d1 * k1_ + d3 * k3_ + d4 * k4_ + d5 * k5_ + d6 * k6_ + d7 * k7_);
        dense_->steps_.push_back(std::move(st));
    }

    const Field& f_;
    const IntegratorConfig& cfg_;
    Trajectory* dense_;
    double t_, t1_;
    Vec y_;
    int n_ = 0;
    Vec k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, ynew_, err_;
};

Vec Trajectory::evaluate(double t) const {
    const double span = std::abs(t1_ - t0_);
    const double slack = 1e-9 * std::max(1.0, span);
    if (steps_.empty()) {
        if (std::abs(t - t0_) > slack)
            throw ConfigError("trajectory evaluated outside its span");
        return y0_;
    }
    const double dir = (t1_ >= t0_) ? 1.0 : -1.0;
    if (dir * (t - t0_) < -slack || dir * (t - t1_) > slack)
        throw ConfigError("trajectory evaluated outside its span [" + std::to_string(t0_) + ", " +
                          std::to_string(t1_) + "] at t = " + std::to_string(t));
    // Binary search for the step containing t (steps are contiguous in time).
    std::size_t lo = 0, hi = steps_.size() - 1;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        const Step& s = steps_[mid];
        if (dir * (t - (s.t + s.h)) > 0.0)
            lo = mid + 1;
        else
            hi = mid;
    }
    const Step& s = steps_[lo];
    double theta = (t - s.t) / s.h;
    theta = std::clamp(theta, 0.0, 1.0);
    const double th1 = 1.0 - theta;
    return s.coef.col(0) +
           theta * (s.coef.col(1) +
                    th1 * (s.coef.col(2) + theta * (s.coef.col(3) + th1 * s.coef.col(4))));
}

std::vector<double> Trajectory::mesh() const {
    std::vector<double> ts;
    ts.reserve(steps_.size() + 1);
    ts.push_back(t0_);
    for (const auto& s : steps_) ts.push_back(s.t + s.h);
    return ts;
}

Trajectory integrate(const Field& field, double t0, const Vec& x0, double t1,
                     const IntegratorConfig& cfg) {
    Trajectory traj;
    Stepper(field, t0, x0, t1, cfg, &traj).run();
    return traj;
}

Vec integrate_endpoint(const Field& field, double t0, const Vec& x0, double t1,
                       const IntegratorConfig& cfg) {
    return Stepper(field, t0, x0, t1, cfg, nullptr).run();
}

Field forced_field(const SystemDef& sys, double eps) {
    // Scratch lives in the closure; a Field instance is not meant to be
    // shared across threads.
    return [&sys, eps, gv = Vec(sys.n)](double t, const Vec& y, Vec& dy) mutable {
        sys.f_impl(y, dy, nullptr);
        if (eps != 0.0) {
            sys.g_impl(t, y, eps, gv, nullptr);
            dy += eps * gv;
        }
    };
}

Field augmented_field(const SystemDef& sys, double eps) {
    const int n = sys.n;
    return [&sys, eps, n, fx = Vec(n), gx = Vec(n), J = Mat(n, n),
            Jg = Mat(n, n)](double t, const Vec& y, Vec& dy) mutable {
        sys.f_impl(y.head(n), fx, &J);
        if (eps != 0.0) {
            sys.g_impl(t, y.head(n), eps, gx, &Jg);
            fx += eps * gx;
            J += eps * Jg;
        }
        dy.head(n) = fx;
        Eigen::Map<const Mat> Y(y.data() + n, n, n);
        Eigen::Map<Mat> dY(dy.data() + n, n, n);
        dY = J * Y;
    };
}

FlowResult flow_with_sensitivity(const SystemDef& sys, double eps, double t0, const Vec& x0,
                                 double t1, const IntegratorConfig& cfg) {
    const int n = sys.n;
    FlowResult out;
    if (t0 == t1) {
        out.endpoint = x0;
        out.sensitivity = Mat::Identity(n, n);
        return out;
    }
    Vec y0(n + n * n);
    y0.head(n) = x0;
    Eigen::Map<Mat>(y0.data() + n, n, n) = Mat::Identity(n, n);
    Vec y1 = integrate_endpoint(augmented_field(sys, eps), t0, y0, t1, cfg);
    out.endpoint = y1.head(n);
    out.sensitivity = Eigen::Map<const Mat>(y1.data() + n, n, n);
    return out;
}

Trajectory integrate_augmented(const SystemDef& sys, double eps, double t0, const Vec& x0,
                               double t1, const IntegratorConfig& cfg) {
    const int n = sys.n;
    Vec y0(n + n * n);
    y0.head(n) = x0;
    Eigen::Map<Mat>(y0.data() + n, n, n) = Mat::Identity(n, n);
    return integrate(augmented_field(sys, eps), t0, y0, t1, cfg);
}

Trajectory integrate_adjoint(const SystemDef& sys, const std::function<Vec(double)>& orbit,
                             double t0, const Vec& z0, double t1, const IntegratorConfig& cfg) {
    const int n = sys.n;
    Field adj = [&sys, &orbit, x = Vec(n), fx = Vec(n), J = Mat(n, n)](double t, const Vec& z,
                                                                       Vec& dz) mutable {
        x = orbit(t);
        sys.f_impl(x, fx, &J);
        dz.noalias() = -(J.transpose() * z);
    };
    return integrate(adj, t0, z0, t1, cfg);
}

FlowResult integrate_with_quadrature(const Field& field,
                                     const std::function<double(double, const Vec&)>& integrand,
                                     double t0, const Vec& x0, double t1,
                                     const IntegratorConfig& cfg) {
    const int n = static_cast<int>(x0.size());
    Field aug = [&field, &integrand, n, x = Vec(n), dx = Vec(n)](double t, const Vec& y,
                                                                 Vec& dy) mutable {
        x = y.head(n);
        if (n > 0) {
            field(t, x, dx);
            dy.head(n) = dx;
        }
        dy[n] = integrand(t, x);
    };
    Vec y0(n + 1);
    y0.head(n) = x0;
    y0[n] = 0.0;
    FlowResult out;
    if (t0 == t1) {
        out.endpoint = x0;
        out.quadrature = 0.0;
        return out;
    }
    Vec y1 = integrate_endpoint(aug, t0, y0, t1, cfg);
    out.endpoint = y1.head(n);
    out.quadrature = y1[n];
    return out;
}

}  // namespace cyclebif
