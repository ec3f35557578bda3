#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cyclebif/malkin.hpp"

namespace cyclebif {

/// Stroboscopic map parameters: P(zeta) = x(period; zeta, eps) from t = 0.
struct PoincareSpec {
    double eps = 0.0;
    double period = 0.0;  // k * T*
    int k = 1;
};

/// Builds the spec and validates that k*T* is an integer multiple of the
/// forcing period within 1e-6 relative.
PoincareSpec make_poincare_spec(const SystemDef& sys, const LimitCycle& cycle, int k, double eps);

struct PoincareResult {
    Vec image;
    Mat derivative;
};

/// One application of the stroboscopic map with its derivative from the
/// variational flow.
PoincareResult poincare(const SystemDef& sys, const PoincareSpec& spec, const Vec& zeta,
                        const IntegratorConfig& cfg);

enum class Stability { asymptotically_stable, unstable, borderline };

const char* to_string(Stability s);

/// A T-periodic solution of the forced system, identified with a fixed point
/// of the stroboscopic map.
struct FixedPointRecord {
    Vec zeta;
    double residual = 0.0;  // |P(zeta) - zeta|
    std::vector<std::complex<double>> multipliers;  // eigenvalues of DP, descending modulus
    Stability stability = Stability::borderline;
    int gamma_T = 0;          // sign det(I - DP); meaningful when !degenerate
    bool degenerate = false;  // some |1 - mu| < 1e-8
    double nearest_theta = 0.0;
    double cycle_distance = 0.0;  // |zeta - x0(nearest_theta)|, when a cycle was supplied
};

/// sign of prod(1 - mu_i) over the multipliers; nullopt when some
/// |1 - mu_i| < 1e-8 (degenerate).
std::optional<int> fixed_point_index(const std::vector<std::complex<double>>& multipliers);

struct NewtonOptions {
    int max_iter = 40;
    double fp_tol = 1e-10;
    double hyperbolicity_margin = 1e-4;
};

/// Damped Newton on zeta - P(zeta) = 0. Returns nullopt on non-convergence;
/// propagates integration failures. The optional cycle fills nearest_theta.
std::optional<FixedPointRecord> newton_fixed_point(const SystemDef& sys, const PoincareSpec& spec,
                                                   const Vec& start, const IntegratorConfig& cfg,
                                                   const NewtonOptions& opts = {},
                                                   const LimitCycle* cycle = nullptr);

/// Search region: an origin-centered norm annulus or an axis-aligned box.
struct Region {
    enum class Kind { annulus, box } kind = Kind::annulus;
    double r_in = 0.0, r_out = 1.0;
    Vec lo, hi;

    static Region annulus(double r_in, double r_out);
    static Region box(const Vec& lo, const Vec& hi);
    bool contains(const Vec& x) const;
    /// Bounding box corners, used to lay out the start grid.
    std::pair<Vec, Vec> bounds(int dim) const;
};

struct SearchOptions {
    int grid_density = 16;      // starts per axis over the bounding box
    NewtonOptions newton;
    bool reverse_fallback = true;  // pull strong repellers in by inverse-map iteration
    int threads = 1;
    std::uint64_t seed = 0;     // grid jitter; 0 = none
    double dedupe_radius = 1e-6;
};

struct SearchResult {
    std::vector<FixedPointRecord> inside;   // fixed points within the region
    std::vector<FixedPointRecord> outside;  // converged but outside (reported, never dropped)
    int total_starts = 0;
    int failed_starts = 0;
};

/// Multistart Newton from a uniform grid over the region; deduplicated;
/// in-region points returned in `inside`.
SearchResult find_all_fixed_points(const SystemDef& sys, const PoincareSpec& spec,
                                   const Region& region, const SearchOptions& opts,
                                   const IntegratorConfig& cfg, const LimitCycle* cycle = nullptr);

/// One (prediction, eps) verification row.
struct MatchEntry {
    double theta_star = 0.0;
    int index = 0;
    Claim predicted = Claim::inconclusive;
    bool found = false;
    Vec zeta;
    double distance = 0.0;
    Stability measured = Stability::borderline;
    int gamma_T = 0;
    bool degenerate = false;
    bool stability_agrees = false;         // measured vs predicted claim
    bool gamma_matches_minus_index = false;  // gamma_T == -index(M, theta*)
    bool theorem_rule_holds = false;  // stable <=> index = +1 (the statement's dichotomy)
    bool step2_rule_holds = false;    // stable <=> gamma_T = +1 (the proof's rule)
};

struct SweepEpsResult {
    double eps = 0.0;
    SearchResult search;
    std::vector<MatchEntry> matches;               // one per prediction
    std::vector<FixedPointRecord> unexplained;     // in-region, matched to nothing
    int gamma_sum_inside = 0;                      // over non-degenerate inside points
};

struct SweepOptions {
    SearchOptions search;
    double match_radius = 0.0;  // 0: per-eps default 10*eps + 1e-4
    double slope_min = 0.75, slope_max = 1.25;
};

struct SweepReport {
    std::vector<double> eps_list;
    std::vector<SweepEpsResult> per_eps;
    struct Slope {
        double theta_star = 0.0;
        int multiplicity = 0;
        double slope = 0.0;
        int points = 0;
    };
    std::vector<Slope> slopes;  // log-log distance vs eps, per matched prediction

    bool all_predictions_matched = false;
    bool no_unexplained = false;
    bool gamma_consistent = false;      // gamma_T == -index at every hyperbolic match
    bool slopes_in_range = false;       // simple zeros only
    bool gamma_sums_zero = false;       // per eps, inside points
    bool stability_per_prediction = false;  // measured stability == predicted claim everywhere
};

/// Runs find_all_fixed_points per eps, matches fixed points to predicted
/// phases, cross-checks stability, gamma_T and convergence order.
SweepReport sweep_verify(const SystemDef& sys, const LimitCycle& cycle,
                         const AdjointOrbit& adjoint, const MalkinProfile& profile,
                         const std::vector<double>& eps_list, const Region& region,
                         const SweepOptions& opts, const IntegratorConfig& cfg);

}  // namespace cyclebif
