#include "cyclebif/forced.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cyclebif/parallel.hpp"

namespace cyclebif {

namespace {

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

constexpr double kDegenerateTol = 1e-8;

double circular_delta(double a, double b, double period) {
    double d = std::fmod(a - b, period);
    if (d < -period / 2) d += period;
    if (d > period / 2) d -= period;
    return d;
}

// Phase on the cycle closest to zeta: coarse scan plus golden refinement.
void nearest_cycle_phase(const LimitCycle& cycle, const Vec& zeta, double& theta_out,
                         double& dist_out) {
    const int coarse = 512;
    const double T = cycle.period_min;
    double best_theta = 0.0, best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < coarse; ++i) {
        double th = T * i / coarse;
        double d = (zeta - cycle.evaluate(th)).norm();
        if (d < best) {
            best = d;
            best_theta = th;
        }
    }
    double lo = best_theta - T / coarse, hi = best_theta + T / coarse;
    const double gr = 0.61803398874989484820;
    auto dist = [&](double th) { return (zeta - cycle.evaluate(th)).norm(); };
    double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
    double fc = dist(c), fd = dist(d);
    for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = dist(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = dist(d);
        }
    }
    double th = 0.5 * (lo + hi);
    th = std::fmod(th + T, T);
    theta_out = th;
    dist_out = dist(th);
}

}  // namespace

PoincareSpec make_poincare_spec(const SystemDef& sys, const LimitCycle& cycle, int k, double eps) {
    if (k < 1) throw ConfigError("poincare: k must be a positive integer");
    if (eps < 0.0) throw ConfigError("poincare: eps must be non-negative");
    PoincareSpec spec;
    spec.eps = eps;
    spec.k = k;
    spec.period = k * cycle.period_min;
    double m = spec.period / sys.forcing_period;
    if (std::abs(m - std::round(m)) > 1e-6 || std::round(m) < 1.0)
        throw ConfigError("poincare: period k*T* = " + std::to_string(spec.period) +
                          " is not an integer multiple of the forcing period " +
                          std::to_string(sys.forcing_period));
    return spec;
}

PoincareResult poincare(const SystemDef& sys, const PoincareSpec& spec, const Vec& zeta,
                        const IntegratorConfig& cfg) {
    FlowResult fr = flow_with_sensitivity(sys, spec.eps, 0.0, zeta, spec.period, cfg);
    return {fr.endpoint, *fr.sensitivity};
}

const char* to_string(Stability s) {
    switch (s) {
        case Stability::asymptotically_stable: return "asymptotically_stable";
        case Stability::unstable: return "unstable";
        case Stability::borderline: return "borderline";
    }
    return "?";
}

std::optional<int> fixed_point_index(const std::vector<std::complex<double>>& multipliers) {
    std::complex<double> prod{1.0, 0.0};
    for (const auto& mu : multipliers) {
        if (std::abs(1.0 - mu) < kDegenerateTol) return std::nullopt;
        prod *= (1.0 - mu);
    }
    return prod.real() >= 0.0 ? +1 : -1;
}

namespace {

Stability classify_stability(const std::vector<std::complex<double>>& multipliers, double margin) {
    bool any_out = false, all_in = true;
    for (const auto& mu : multipliers) {
        double m = std::abs(mu);
        if (m > 1.0 + margin) any_out = true;
        if (!(m < 1.0 - margin)) all_in = false;
    }
    if (all_in) return Stability::asymptotically_stable;
    if (any_out) return Stability::unstable;
    return Stability::borderline;
}

FixedPointRecord finalize_record(const SystemDef& sys, const PoincareSpec& spec, const Vec& zeta,
                                 const IntegratorConfig& cfg, const NewtonOptions& opts,
                                 const LimitCycle* cycle) {
    PoincareResult pr = poincare(sys, spec, zeta, cfg);
    FixedPointRecord rec;
    rec.zeta = zeta;
    rec.residual = (pr.image - zeta).norm();
    rec.multipliers = sorted_eigenvalues(pr.derivative);
    rec.stability = classify_stability(rec.multipliers, opts.hyperbolicity_margin);
    auto gamma = fixed_point_index(rec.multipliers);
    rec.degenerate = !gamma.has_value();
    rec.gamma_T = gamma.value_or(0);
    if (cycle) nearest_cycle_phase(*cycle, zeta, rec.nearest_theta, rec.cycle_distance);
    return rec;
}

}  // namespace

std::optional<FixedPointRecord> newton_fixed_point(const SystemDef& sys, const PoincareSpec& spec,
                                                   const Vec& start, const IntegratorConfig& cfg,
                                                   const NewtonOptions& opts,
                                                   const LimitCycle* cycle) {
    if (!start.allFinite()) throw ConfigError("newton_fixed_point: non-finite start");
    const int n = sys.n;
    Vec zeta = start;
    Field plain = forced_field(sys, spec.eps);

    double best_res = std::numeric_limits<double>::infinity();
    int stalled = 0;
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        PoincareResult pr = poincare(sys, spec, zeta, cfg);
        Vec F = zeta - pr.image;
        double res = F.norm();
        if (res <= opts.fp_tol) return finalize_record(sys, spec, zeta, cfg, opts, cycle);

        if (res < 0.9 * best_res) {
            best_res = res;
            stalled = 0;
        } else if (++stalled >= 6) {
            return std::nullopt;  // no progress, give up early
        }

        Mat A = Mat::Identity(n, n) - pr.derivative;
        // Complete orthogonal decomposition tolerates the singular eps = 0
        // case (a whole circle of fixed points) with a minimum-norm step.
        Vec step = A.completeOrthogonalDecomposition().solve(-F);
        if (!step.allFinite()) return std::nullopt;

        double lambda = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 10; ++ls) {
            Vec trial = zeta + lambda * step;
            double tres;
            try {
                tres = (trial - integrate_endpoint(plain, 0.0, trial, spec.period, cfg)).norm();
            } catch (const IntegrationError&) {
                lambda *= 0.5;
                continue;
            }
            if (tres < res) {
                zeta = trial;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!improved) zeta += lambda * step;  // let the stall counter decide
    }
    // Final residual check: the loop may have landed on the root exactly.
    try {
        Vec img = integrate_endpoint(plain, 0.0, zeta, spec.period, cfg);
        if ((zeta - img).norm() <= opts.fp_tol)
            return finalize_record(sys, spec, zeta, cfg, opts, cycle);
    } catch (const IntegrationError&) {
    }
    return std::nullopt;
}

Region Region::annulus(double r_in, double r_out) {
    if (!(r_in >= 0.0) || !(r_out > r_in)) throw ConfigError("annulus radii must satisfy 0 <= r_in < r_out");
    Region r;
    r.kind = Kind::annulus;
    r.r_in = r_in;
    r.r_out = r_out;
    return r;
}

Region Region::box(const Vec& lo, const Vec& hi) {
    if (lo.size() != hi.size()) throw ConfigError("box corners must have equal dimension");
    for (int i = 0; i < lo.size(); ++i)
        if (!(lo[i] < hi[i])) throw ConfigError("box corners must satisfy lo < hi componentwise");
    Region r;
    r.kind = Kind::box;
    r.lo = lo;
    r.hi = hi;
    return r;
}

bool Region::contains(const Vec& x) const {
    if (kind == Kind::annulus) {
        double n = x.norm();
        return n > r_in && n < r_out;
    }
    if (x.size() != lo.size()) return false;
    for (int i = 0; i < x.size(); ++i)
        if (x[i] <= lo[i] || x[i] >= hi[i]) return false;
    return true;
}

std::pair<Vec, Vec> Region::bounds(int dim) const {
    if (kind == Kind::annulus) {
        Vec lo_ = Vec::Constant(dim, -r_out);
        Vec hi_ = Vec::Constant(dim, r_out);
        return {lo_, hi_};
    }
    return {lo, hi};
}

namespace {

// Inverse-map iteration pulls starts toward strongly repelling fixed points
// (which attract in reverse time), then Newton polishes.
std::optional<FixedPointRecord> reverse_fallback(const SystemDef& sys, const PoincareSpec& spec,
                                                 const Vec& start, const IntegratorConfig& cfg,
                                                 const NewtonOptions& opts, const LimitCycle* cycle,
                                                 double escape_radius) {
    Field plain = forced_field(sys, spec.eps);
    Vec z = start;
    Vec prev = z;
    for (int it = 0; it < 12; ++it) {
        try {
            z = integrate_endpoint(plain, spec.period, z, 0.0, cfg);
        } catch (const IntegrationError&) {
            return std::nullopt;
        }
        if (!z.allFinite() || z.norm() > escape_radius) return std::nullopt;
        double moved = (z - prev).norm();
        prev = z;
        if (moved < 1e-3 || it >= 7) {
            NewtonOptions polish = opts;
            polish.max_iter = 15;
            auto rec = newton_fixed_point(sys, spec, z, cfg, polish, cycle);
            if (rec) return rec;
        }
    }
    return std::nullopt;
}

}  // namespace

SearchResult find_all_fixed_points(const SystemDef& sys, const PoincareSpec& spec,
                                   const Region& region, const SearchOptions& opts,
                                   const IntegratorConfig& cfg, const LimitCycle* cycle) {
    const int n = sys.n;
    if (opts.grid_density < 1) throw ConfigError("grid_density must be positive");

    auto [lo, hi] = region.bounds(n);
    const int per_axis = opts.grid_density;
    long long total = 1;
    for (int d = 0; d < n; ++d) total *= per_axis;
    if (total > 2'000'000) throw ConfigError("start grid too large; reduce grid_density");

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> ud(0.0, 1.0);

    std::vector<Vec> starts;
    starts.reserve(static_cast<std::size_t>(total));
    Vec spacing = (hi - lo) / per_axis;
    for (long long flat = 0; flat < total; ++flat) {
        Vec p(n);
        long long rem = flat;
        for (int d = 0; d < n; ++d) {
            int idx = static_cast<int>(rem % per_axis);
            rem /= per_axis;
            double jitter = opts.seed != 0 ? ud(rng) : 0.5;
            p[d] = lo[d] + spacing[d] * (idx + jitter);
        }
        if (region.contains(p)) starts.push_back(p);
    }

    SearchResult result;
    result.total_starts = static_cast<int>(starts.size());
    const double escape_radius = 4.0 * (hi - lo).norm() + 10.0;

    std::vector<std::optional<FixedPointRecord>> found(starts.size());
    parallel_for(static_cast<int>(starts.size()), opts.threads, [&](int i) {
        const Vec& s = starts[static_cast<std::size_t>(i)];
        std::optional<FixedPointRecord> rec;
        try {
            rec = newton_fixed_point(sys, spec, s, cfg, opts.newton, cycle);
            if (!rec && opts.reverse_fallback)
                rec = reverse_fallback(sys, spec, s, cfg, opts.newton, cycle, escape_radius);
        } catch (const IntegrationError&) {
            rec = std::nullopt;  // escaping starts are tallied, not fatal
        }
        found[static_cast<std::size_t>(i)] = std::move(rec);
    });

    std::vector<FixedPointRecord> unique;
    for (auto& rec : found) {
        if (!rec) {
            ++result.failed_starts;
            continue;
        }
        bool dup = false;
        for (const auto& u : unique)
            if ((u.zeta - rec->zeta).norm() < opts.dedupe_radius) dup = true;
        if (!dup) unique.push_back(std::move(*rec));
    }
    for (auto& u : unique) {
        if (region.contains(u.zeta))
            result.inside.push_back(std::move(u));
        else
            result.outside.push_back(std::move(u));
    }
    auto by_phase = [](const FixedPointRecord& a, const FixedPointRecord& b) {
        if (a.nearest_theta != b.nearest_theta) return a.nearest_theta < b.nearest_theta;
        return a.zeta.norm() < b.zeta.norm();
    };
    std::sort(result.inside.begin(), result.inside.end(), by_phase);
    std::sort(result.outside.begin(), result.outside.end(), by_phase);
    return result;
}

SweepReport sweep_verify(const SystemDef& sys, const LimitCycle& cycle,
                         const AdjointOrbit& adjoint, const MalkinProfile& profile,
                         const std::vector<double>& eps_list, const Region& region,
                         const SweepOptions& opts, const IntegratorConfig& cfg) {
    (void)adjoint;
    if (profile.zeros.empty() && profile.sup_norm <= 1e-12)
        throw ConfigError("sweep_verify: profile has no classified zeros");
    for (double e : eps_list)
        if (!(e > 0.0)) throw ConfigError("sweep_verify: eps values must be positive");

    PredictionSet preds = predict(profile);

    SweepReport report;
    report.eps_list = eps_list;
    report.all_predictions_matched = true;
    report.no_unexplained = true;
    report.gamma_consistent = true;
    report.gamma_sums_zero = true;
    report.stability_per_prediction = true;

    for (double eps : eps_list) {
        PoincareSpec spec = make_poincare_spec(sys, cycle, profile.k, eps);
        SweepEpsResult per;
        per.eps = eps;
        per.search = find_all_fixed_points(sys, spec, region, opts.search, cfg, &cycle);

        const double radius = opts.match_radius > 0.0 ? opts.match_radius : 10.0 * eps + 1e-4;
        std::vector<bool> used(per.search.inside.size(), false);

        for (const auto& p : preds.predictions) {
            MatchEntry entry;
            entry.theta_star = p.theta_star;
            entry.index = p.index;
            entry.predicted = p.claim;
            Vec target = cycle.evaluate(p.theta_star);
            int best = -1;
            double best_dist = radius;
            for (std::size_t i = 0; i < per.search.inside.size(); ++i) {
                if (used[i]) continue;
                double d = (per.search.inside[i].zeta - target).norm();
                if (d < best_dist) {
                    best_dist = d;
                    best = static_cast<int>(i);
                }
            }
            if (best >= 0) {
                const auto& rec = per.search.inside[static_cast<std::size_t>(best)];
                used[static_cast<std::size_t>(best)] = true;
                entry.found = true;
                entry.zeta = rec.zeta;
                entry.distance = best_dist;
                entry.measured = rec.stability;
                entry.gamma_T = rec.gamma_T;
                entry.degenerate = rec.degenerate;
                bool stable = rec.stability == Stability::asymptotically_stable;
                entry.stability_agrees =
                    (p.claim == Claim::stable && stable) ||
                    (p.claim == Claim::unstable && rec.stability == Stability::unstable);
                entry.gamma_matches_minus_index = !rec.degenerate && rec.gamma_T == -p.index;
                entry.theorem_rule_holds = stable == (p.index == +1);
                entry.step2_rule_holds = !rec.degenerate && (stable == (rec.gamma_T == +1));
                if (!rec.degenerate && !entry.gamma_matches_minus_index)
                    report.gamma_consistent = false;
                if (!entry.stability_agrees && p.claim != Claim::inconclusive)
                    report.stability_per_prediction = false;
            } else if (p.index != 0) {
                report.all_predictions_matched = false;
            }
            per.matches.push_back(entry);
        }

        int gamma_sum = 0;
        for (std::size_t i = 0; i < per.search.inside.size(); ++i) {
            if (!per.search.inside[i].degenerate) gamma_sum += per.search.inside[i].gamma_T;
            if (!used[i]) per.unexplained.push_back(per.search.inside[i]);
        }
        per.gamma_sum_inside = gamma_sum;
        if (gamma_sum != 0) report.gamma_sums_zero = false;
        if (!per.unexplained.empty()) report.no_unexplained = false;
        report.per_eps.push_back(std::move(per));
    }

    // Convergence order per prediction: log-log slope of distance vs eps.
    report.slopes_in_range = true;
    for (std::size_t pi = 0; pi < preds.predictions.size(); ++pi) {
        std::vector<double> xs, ys;
        for (const auto& per : report.per_eps) {
            const auto& entry = per.matches[pi];
            if (entry.found && entry.distance > 0.0) {
                xs.push_back(std::log(per.eps));
                ys.push_back(std::log(entry.distance));
            }
        }
        SweepReport::Slope s;
        s.theta_star = preds.predictions[pi].theta_star;
        s.points = static_cast<int>(xs.size());
        int mult = 1;
        for (const auto& z : profile.zeros)
            if (std::abs(circular_delta(z.theta_star, s.theta_star, profile.period_min)) < 1e-9)
                mult = z.multiplicity_estimate;
        s.multiplicity = mult;
        if (xs.size() >= 2) {
            double mx = 0, my = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                mx += xs[i];
                my += ys[i];
            }
            mx /= static_cast<double>(xs.size());
            my /= static_cast<double>(xs.size());
            double num = 0, den = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                num += (xs[i] - mx) * (ys[i] - my);
                den += (xs[i] - mx) * (xs[i] - mx);
            }
            s.slope = den > 0 ? num / den : 0.0;
            if (mult == 1 && (s.slope < opts.slope_min || s.slope > opts.slope_max))
                report.slopes_in_range = false;
        } else {
            s.slope = 0.0;
            if (preds.predictions[pi].index != 0) report.slopes_in_range = false;
        }
        report.slopes.push_back(s);
    }
    return report;
}

}  // namespace cyclebif
