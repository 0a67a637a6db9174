#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "apx/errors.hpp"
#include "apx/network.hpp"

namespace apx {

// One row of a scaling study table.
struct ScalingRow {
    double control = 0.0;      // eps target, K, or sample count n
    double measured_error = 0.0;
    int width = 0;
    int depth = 0;
    double linf_norm = 0.0;
    long runtime_ms = 0;
};

// Continuous piecewise-linear function on [0,1]: interior breakpoints plus a
// slope/intercept per piece.
struct PiecewiseLinearProfile {
    std::vector<double> breakpoints;  // strictly increasing, in (0,1)
    std::vector<double> slopes;       // breakpoints.size() + 1 entries
    std::vector<double> intercepts;

    int piece_count() const { return static_cast<int>(slopes.size()); }
    double value(double x) const;
};

using ScalarField = std::function<double(const std::vector<double>&)>;
using RegionPredicate = std::function<bool(const std::vector<double>&)>;

struct GridSupResult {
    double max_error = 0.0;
    std::vector<double> argmax;
};

// Max |net - f| over a uniform grid of [0,1]^d restricted to the predicate.
GridSupResult sup_error_on_grid(const ScalarField& net, const ScalarField& f, int d,
                                const RegionPredicate& region, double spacing);

struct McL2Result {
    double estimate = 0.0;
    double standard_error = 0.0;
};

// Seeded Monte Carlo estimate of the L2([0,1]^d) deviation.
McL2Result mc_l2_error(const ScalarField& net, const ScalarField& f, int d,
                       long n_samples, std::uint64_t seed);

struct LogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

// OLS fit of ln y against ln x; slope is the fitted exponent.
LogFit fit_log_slope(const std::vector<std::pair<double, double>>& points);

// Exact breakpoint propagation through a 1-input 1-output relu network.
PiecewiseLinearProfile extract_pwl_profile(const Network& net);

// Minimal squared L2 error of an affine function against x^2 (or x^2/2) on an
// interval of length l: l^5/180, or l^5/720 for the halved target.
double best_linear_sq_error(double l, bool half_target = false);

// Exact squared L2 error of a piecewise-linear profile against x^2/2 on [0,1].
double profile_sq_error_half_x2(const PiecewiseLinearProfile& profile);

// Dynamic program over uniform-grid breakpoints: minimal squared L2 error of a
// K-piece (discontinuous) piecewise-affine fit to x^2/2 on [0,1].
double best_pwl_sq_error_dp(int k_pieces, int grid_resolution);

// 1/(12 sqrt 5) (M+1)^{-2(L-1)}.
double relu_lower_bound_value(int m, int l);

// (M ln M)^{-2 min(L-1, s)}; the rate factor only (unit constant).
double prop61_rate(int m, int l, double s);

}  // namespace apx
