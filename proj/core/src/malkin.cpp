#include "cyclebif/malkin.hpp"

#include <algorithm>
#include <cmath>

#include "cyclebif/parallel.hpp"

namespace cyclebif {

namespace {
constexpr double kTwoPi = 6.283185307179586476925287;
constexpr double kIdenticallyZeroFloor = 1e-12;
}  // namespace

double malkin_value(const SystemDef& sys, const LimitCycle& cycle, const AdjointOrbit& adjoint,
                    int k, double theta, const IntegratorConfig& cfg) {
    const int n = sys.n;
    auto integrand = [&, gv = Vec(n), x = Vec(n)](double t, const Vec&) mutable -> double {
        double s = t + theta;
        x = cycle.evaluate(s);
        sys.g_impl(t, x, 0.0, gv, nullptr);
        return gv.dot(adjoint.evaluate(s));
    };
    FlowResult r = integrate_with_quadrature(
        Field(), integrand, 0.0, Vec(0), k * cycle.period_min, cfg);
    return *r.quadrature;
}

MalkinProfile malkin_function(const SystemDef& sys, const LimitCycle& cycle,
                              const AdjointOrbit& adjoint, int k, int grid_size,
                              const IntegratorConfig& cfg, int threads) {
    if (k < 1) throw ConfigError("malkin: k must be a positive integer");
    if (grid_size < 512) throw ConfigError("malkin: grid_size must be at least 512");
    const double T = k * cycle.period_min;
    const double mismatch = std::abs(sys.forcing_period - T);
    if (mismatch > 1e-6 * std::max(sys.forcing_period, T))
        throw ConfigError("malkin: forcing period " + std::to_string(sys.forcing_period) +
                          " does not equal k*T* = " + std::to_string(T) +
                          " (the theory requires the forcing period to equal T)");

    MalkinProfile profile;
    profile.k = k;
    profile.period_min = cycle.period_min;
    profile.grid.resize(static_cast<std::size_t>(grid_size));
    profile.values.resize(static_cast<std::size_t>(grid_size));
    for (int i = 0; i < grid_size; ++i)
        profile.grid[static_cast<std::size_t>(i)] = cycle.period_min * i / grid_size;

    parallel_for(grid_size, threads, [&](int i) {
        profile.values[static_cast<std::size_t>(i)] =
            malkin_value(sys, cycle, adjoint, k, profile.grid[static_cast<std::size_t>(i)], cfg);
    });

    profile.sup_norm = 0.0;
    for (double v : profile.values) profile.sup_norm = std::max(profile.sup_norm, std::abs(v));
    profile.evaluator = [&sys, &cycle, &adjoint, k, cfg](double theta) {
        return malkin_value(sys, cycle, adjoint, k, theta, cfg);
    };
    return profile;
}

double closed_form_malkin_planar(std::complex<double> a1, std::complex<double> b0,
                                 std::complex<double> c2, double theta) {
    const std::complex<double> i{0.0, 1.0};
    std::complex<double> inner =
        a1 * std::exp(-i * theta) + b0 + c2 * std::exp(-2.0 * i * theta);
    return kTwoPi * (inner * (1.0 - i)).real();
}

std::complex<double> fourier_coefficient(const std::vector<std::complex<double>>& samples, int m) {
    const std::size_t N = samples.size();
    if (N < static_cast<std::size_t>(4 * std::abs(m) + 4))
        throw ConfigError("fourier_coefficient: need at least " +
                          std::to_string(4 * std::abs(m) + 4) + " samples for harmonic " +
                          std::to_string(m) + ", got " + std::to_string(N));
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t j = 0; j < N; ++j) {
        double t = kTwoPi * static_cast<double>(j) / static_cast<double>(N);
        acc += samples[j] * std::polar(1.0, -m * t);
    }
    return acc / static_cast<double>(N);
}

namespace {

double circular_delta(double a, double b, double period) {
    double d = std::fmod(a - b, period);
    if (d < -period / 2) d += period;
    if (d > period / 2) d -= period;
    return d;
}

// Least-squares polynomial fit of M around theta_star over +-window_samples
// grid cells; multiplicity = lowest power whose term dominates at the window
// scale. Advisory metadata only.
int estimate_multiplicity(const MalkinProfile& profile, double theta_star, int max_degree = 5) {
    const int N = static_cast<int>(profile.grid.size());
    const double T = profile.period_min;
    const double dtheta = T / N;
    const int window = 8;
    const int rows = 2 * window + 1;
    const int cols = max_degree + 1;
    Mat A(rows, cols);
    Vec y(rows);
    int center = static_cast<int>(std::round(theta_star / dtheta));
    for (int r = 0; r < rows; ++r) {
        int idx = center - window + r;
        int wrapped = ((idx % N) + N) % N;
        double delta = (idx * dtheta) - theta_star;  // unwrapped local coordinate
        double p = 1.0;
        for (int cdeg = 0; cdeg < cols; ++cdeg) {
            A(r, cdeg) = p;
            p *= delta;
        }
        y[r] = profile.values[static_cast<std::size_t>(wrapped)];
    }
    Vec coef = A.colPivHouseholderQr().solve(y);
    const double w = window * dtheta;
    double scale = 0.0;
    std::vector<double> contrib(static_cast<std::size_t>(cols), 0.0);
    double pw = 1.0;
    for (int cdeg = 0; cdeg < cols; ++cdeg) {
        contrib[static_cast<std::size_t>(cdeg)] = std::abs(coef[cdeg]) * pw;
        scale = std::max(scale, contrib[static_cast<std::size_t>(cdeg)]);
        pw *= w;
    }
    if (scale <= 0.0) return 0;
    for (int cdeg = 1; cdeg < cols; ++cdeg)
        if (contrib[static_cast<std::size_t>(cdeg)] > 0.02 * scale) return cdeg;
    return 0;
}

}  // namespace

void find_zeros(MalkinProfile& profile, double refine_tol, double flat_tol_rel) {
    if (!profile.evaluator) throw ConfigError("find_zeros: profile has no evaluator");
    if (profile.sup_norm <= kIdenticallyZeroFloor)
        throw ConvergenceError(
            "M identically zero (sup norm " + std::to_string(profile.sup_norm) +
            "); the bifurcation function gives no information for this forcing");

    const int N = static_cast<int>(profile.grid.size());
    const double T = profile.period_min;
    auto M = profile.evaluator;
    profile.zeros.clear();

    // Sign changes between adjacent samples, wrap-around pair included.
    for (int i = 0; i < N; ++i) {
        double a = profile.grid[static_cast<std::size_t>(i)];
        double b = (i + 1 < N) ? profile.grid[static_cast<std::size_t>(i + 1)] : T;
        double Ma = profile.values[static_cast<std::size_t>(i)];
        double Mb = (i + 1 < N) ? profile.values[static_cast<std::size_t>(i + 1)]
                                : profile.values[0];
        if (Ma == 0.0 && Mb == 0.0) continue;
        if (Ma * Mb >= 0.0) continue;
        double lo = a, hi = b, Mlo = Ma;
        while (hi - lo > refine_tol) {
            double mid = 0.5 * (lo + hi);
            double Mm = M(mid);
            if (Mm == 0.0) {
                lo = hi = mid;
                break;
            }
            if ((Mlo < 0.0) == (Mm < 0.0)) {
                lo = mid;
                Mlo = Mm;
            } else {
                hi = mid;
            }
        }
        ZeroRecord z;
        z.theta_star = std::fmod(0.5 * (lo + hi), T);
        z.index = (Ma < 0.0) ? +1 : -1;
        z.refinement_residual = std::abs(M(z.theta_star));
        z.multiplicity_estimate = estimate_multiplicity(profile, 0.5 * (lo + hi));
        profile.zeros.push_back(z);
    }

    // Tangencies: local minima of |M| below flat_tol without a sign change.
    const double flat_tol = flat_tol_rel * profile.sup_norm;
    for (int i = 0; i < N; ++i) {
        double v = std::abs(profile.values[static_cast<std::size_t>(i)]);
        double vm = std::abs(profile.values[static_cast<std::size_t>((i + N - 1) % N)]);
        double vp = std::abs(profile.values[static_cast<std::size_t>((i + 1) % N)]);
        if (!(v <= flat_tol && v <= vm && v <= vp)) continue;
        double theta_i = profile.grid[static_cast<std::size_t>(i)];
        bool near_known = false;
        for (const auto& z : profile.zeros)
            if (std::abs(circular_delta(theta_i, z.theta_star, T)) < 2.0 * T / N) near_known = true;
        if (near_known) continue;
        // Golden-section refinement of |M| over the neighbour bracket.
        double lo = theta_i - T / N, hi = theta_i + T / N;
        const double gr = 0.61803398874989484820;
        double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
        double fc = std::abs(M(c)), fd = std::abs(M(d));
        while (hi - lo > refine_tol) {
            if (fc < fd) {
                hi = d;
                d = c;
                fd = fc;
                c = hi - gr * (hi - lo);
                fc = std::abs(M(c));
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + gr * (hi - lo);
                fd = std::abs(M(d));
            }
        }
        ZeroRecord z;
        double theta = 0.5 * (lo + hi);
        z.refinement_residual = std::abs(M(theta));
        if (z.refinement_residual > flat_tol) continue;  // shallow dip, not a zero
        z.theta_star = std::fmod(theta + T, T);
        z.index = 0;
        z.flat = true;
        z.multiplicity_estimate = estimate_multiplicity(profile, theta);
        profile.zeros.push_back(z);
    }

    std::sort(profile.zeros.begin(), profile.zeros.end(),
              [](const ZeroRecord& a, const ZeroRecord& b) { return a.theta_star < b.theta_star; });
    // Drop wrap duplicates (a root refined from both sides of the seam).
    for (std::size_t i = 1; i < profile.zeros.size();) {
        double gap = std::abs(circular_delta(profile.zeros[i].theta_star,
                                             profile.zeros[i - 1].theta_star, T));
        if (gap < 16.0 * refine_tol)
            profile.zeros.erase(profile.zeros.begin() + static_cast<std::ptrdiff_t>(i));
        else
            ++i;
    }
    if (profile.zeros.size() >= 2) {
        double gap = std::abs(circular_delta(profile.zeros.front().theta_star,
                                             profile.zeros.back().theta_star, T));
        if (gap < 16.0 * refine_tol) profile.zeros.pop_back();
    }
}

const char* to_string(Claim c) {
    switch (c) {
        case Claim::stable: return "stable";
        case Claim::unstable: return "unstable";
        case Claim::inconclusive: return "inconclusive";
        case Claim::none_nearby: return "none-nearby";
    }
    return "?";
}

PredictionSet predict(const MalkinProfile& profile) {
    PredictionSet out;
    for (const auto& z : profile.zeros) {
        Prediction p;
        p.theta_star = z.theta_star;
        p.index = z.index;
        p.claim = z.index == +1 ? Claim::stable
                                : (z.index == -1 ? Claim::unstable : Claim::inconclusive);
        out.predictions.push_back(p);
    }
    out.none_nearby = profile.zeros.empty() && profile.sup_norm > kIdenticallyZeroFloor;
    return out;
}

}  // namespace cyclebif
