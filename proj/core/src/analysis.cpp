#include "apx/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "apx/rng.hpp"

namespace apx {
namespace {

constexpr double kBreakDedup = 1e-12;

// Integral of (x^2/2 - m x - c)^2 over [a, b], expanded in closed form.
double half_x2_piece_integral(double a, double b, double m, double c) {
    // (x^2/2 - m x - c)^2 = x^4/4 - m x^3 + (m^2 - c) x^2 + 2 m c x + c^2.
    auto antideriv = [m, c](double x) {
        double x2 = x * x;
        double x3 = x2 * x;
        double x4 = x3 * x;
        double x5 = x4 * x;
        return x5 / 20.0 - m * x4 / 4.0 + (m * m - c) * x3 / 3.0 + m * c * x2 +
               c * c * x;
    };
    return antideriv(b) - antideriv(a);
}

}  // namespace

double PiecewiseLinearProfile::value(double x) const {
    size_t piece = std::upper_bound(breakpoints.begin(), breakpoints.end(), x) -
                   breakpoints.begin();
    return slopes[piece] * x + intercepts[piece];
}

GridSupResult sup_error_on_grid(const ScalarField& net, const ScalarField& f, int d,
                                const RegionPredicate& region, double spacing) {
    if (d < 1) throw PreconditionFailed("grid sup needs d >= 1");
    if (!(spacing > 0.0) || spacing > 1.0) {
        throw PreconditionFailed("grid spacing must lie in (0, 1]");
    }
    int n = static_cast<int>(std::ceil(1.0 / spacing)) + 1;
    GridSupResult res;
    bool any = false;
    std::vector<int> idx(d, 0);
    std::vector<double> x(d);
    while (true) {
        for (int l = 0; l < d; ++l) x[l] = static_cast<double>(idx[l]) / (n - 1);
        if (!region || region(x)) {
            any = true;
            double e = std::abs(net(x) - f(x));
            if (e >= res.max_error) {
                res.max_error = e;
                res.argmax = x;
            }
        }
        int axis = d - 1;
        while (axis >= 0 && ++idx[axis] == n) idx[axis--] = 0;
        if (axis < 0) break;
    }
    if (!any) throw EmptyRegion("no grid point satisfies the region predicate");
    return res;
}

McL2Result mc_l2_error(const ScalarField& net, const ScalarField& f, int d,
                       long n_samples, std::uint64_t seed) {
    if (n_samples < 10000) throw PreconditionFailed("mc_l2_error needs >= 1e4 samples");
    Rng rng = Rng::keyed(seed, 0x6c32);
    double sum = 0.0, sum_sq = 0.0;
    std::vector<double> x(d);
    for (long t = 0; t < n_samples; ++t) {
        for (int l = 0; l < d; ++l) x[l] = rng.uniform();
        double dev = net(x) - f(x);
        double sq = dev * dev;
        sum += sq;
        sum_sq += sq * sq;
    }
    double mean = sum / static_cast<double>(n_samples);
    double var = std::max(sum_sq / static_cast<double>(n_samples) - mean * mean, 0.0);
    double mean_se = std::sqrt(var / static_cast<double>(n_samples));
    McL2Result res;
    res.estimate = std::sqrt(mean);
    // Delta method: d sqrt(m) / d m = 1 / (2 sqrt m).
    res.standard_error = mean > 0.0 ? mean_se / (2.0 * std::sqrt(mean)) : std::sqrt(mean_se);
    return res;
}

LogFit fit_log_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3) throw PreconditionFailed("log-log fit needs >= 3 points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
    double n = static_cast<double>(points.size());
    for (const auto& [x, y] : points) {
        if (!(x > 0.0) || !(y > 0.0)) {
            throw PreconditionFailed("log-log fit needs positive coordinates");
        }
        double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        syy += ly * ly;
    }
    double vxx = sxx - sx * sx / n;
    if (vxx <= 1e-15 * std::max(1.0, sxx)) {
        throw DegenerateInput("all abscissae coincide in the log-log fit");
    }
    double vxy = sxy - sx * sy / n;
    double vyy = syy - sy * sy / n;
    LogFit fit;
    fit.slope = vxy / vxx;
    fit.intercept = (sy - fit.slope * sx) / n;
    fit.r2 = vyy > 0.0 ? (vxy * vxy) / (vxx * vyy) : 1.0;
    return fit;
}

PiecewiseLinearProfile extract_pwl_profile(const Network& net) {
    if (net.activation.kind != ActKind::ReLU) {
        throw ActivationNotReLU("profile extraction needs a relu network");
    }
    if (net.input_dim() != 1 || net.output_dim() != 1) {
        throw ShapeMismatch("profile extraction needs a 1-in 1-out network");
    }

    // Current piecewise-affine vector function on [0,1]: per piece, one
    // (slope, intercept) pair per coordinate.
    std::vector<double> breaks;  // interior breakpoints
    std::vector<std::vector<double>> slopes{{1.0}}, inters{{0.0}};

    auto piece_bounds = [&](size_t piece) {
        double lo = piece == 0 ? 0.0 : breaks[piece - 1];
        double hi = piece == breaks.size() ? 1.0 : breaks[piece];
        return std::pair<double, double>(lo, hi);
    };

    for (size_t li = 0; li < net.layers.size(); ++li) {
        const Layer& layer = net.layers[li];
        // Affine step.
        std::vector<std::vector<double>> new_slopes(slopes.size()),
            new_inters(inters.size());
        for (size_t p = 0; p < slopes.size(); ++p) {
            new_slopes[p].assign(layer.rows, 0.0);
            new_inters[p].assign(layer.rows, 0.0);
            for (int r = 0; r < layer.rows; ++r) {
                double m = 0.0, c = layer.bias[r];
                for (int cidx = 0; cidx < layer.cols; ++cidx) {
                    m += layer.w(r, cidx) * slopes[p][cidx];
                    c += layer.w(r, cidx) * inters[p][cidx];
                }
                new_slopes[p][r] = m;
                new_inters[p][r] = c;
            }
        }
        slopes = std::move(new_slopes);
        inters = std::move(new_inters);
        if (li + 1 == net.layers.size()) break;

        // Activation step: collect zero crossings, split, clamp.
        std::vector<double> cuts;
        for (size_t p = 0; p < slopes.size(); ++p) {
            auto [lo, hi] = piece_bounds(p);
            for (int r = 0; r < static_cast<int>(slopes[p].size()); ++r) {
                double m = slopes[p][r];
                if (std::abs(m) < 1e-300) continue;  // flat unit: no breakpoint
                double x0 = -inters[p][r] / m;
                if (x0 > lo + kBreakDedup && x0 < hi - kBreakDedup) cuts.push_back(x0);
            }
        }
        std::sort(cuts.begin(), cuts.end());
        std::vector<double> merged = breaks;
        for (double c : cuts) {
            if (c <= kBreakDedup || c >= 1.0 - kBreakDedup) continue;
            bool dup = false;
            for (double b : merged) {
                if (std::abs(b - c) <= kBreakDedup) {
                    dup = true;
                    break;
                }
            }
            if (!dup) merged.push_back(c);
        }
        std::sort(merged.begin(), merged.end());

        // Re-derive per-piece affine data on the refined partition.
        std::vector<std::vector<double>> ref_slopes(merged.size() + 1),
            ref_inters(merged.size() + 1);
        for (size_t p = 0; p <= merged.size(); ++p) {
            double lo = p == 0 ? 0.0 : merged[p - 1];
            double hi = p == merged.size() ? 1.0 : merged[p];
            double mid = 0.5 * (lo + hi);
            size_t src = std::upper_bound(breaks.begin(), breaks.end(), mid) -
                         breaks.begin();
            ref_slopes[p] = slopes[src];
            ref_inters[p] = inters[src];
            for (size_t r = 0; r < ref_slopes[p].size(); ++r) {
                double pre = ref_slopes[p][r] * mid + ref_inters[p][r];
                if (pre < 0.0) {
                    ref_slopes[p][r] = 0.0;
                    ref_inters[p][r] = 0.0;
                }
            }
        }
        breaks = std::move(merged);
        slopes = std::move(ref_slopes);
        inters = std::move(ref_inters);
    }

    // Drop breakpoints where the final affine pieces agree (flat units etc.).
    PiecewiseLinearProfile prof;
    prof.slopes.push_back(slopes[0][0]);
    prof.intercepts.push_back(inters[0][0]);
    for (size_t p = 1; p <= breaks.size(); ++p) {
        if (std::abs(slopes[p][0] - prof.slopes.back()) <= kBreakDedup &&
            std::abs(inters[p][0] - prof.intercepts.back()) <= kBreakDedup) {
            continue;
        }
        prof.breakpoints.push_back(breaks[p - 1]);
        prof.slopes.push_back(slopes[p][0]);
        prof.intercepts.push_back(inters[p][0]);
    }
    return prof;
}

double best_linear_sq_error(double l, bool half_target) {
    if (!(l > 0.0)) throw PreconditionFailed("interval length must be positive");
    double v = std::pow(l, 5) / 180.0;
    return half_target ? v / 4.0 : v;
}

double profile_sq_error_half_x2(const PiecewiseLinearProfile& profile) {
    double total = 0.0;
    for (int p = 0; p < profile.piece_count(); ++p) {
        double lo = p == 0 ? 0.0 : profile.breakpoints[p - 1];
        double hi = p == profile.piece_count() - 1 ? 1.0 : profile.breakpoints[p];
        total += half_x2_piece_integral(lo, hi, profile.slopes[p],
                                        profile.intercepts[p]);
    }
    return total;
}

double best_pwl_sq_error_dp(int k_pieces, int grid_resolution) {
    if (k_pieces < 1) throw PreconditionFailed("piece count must be >= 1");
    if (grid_resolution < 256) throw PreconditionFailed("grid resolution must be >= 256");
    int n = grid_resolution;
    // cost(i, j): optimal one-piece cost on [i/n, j/n] — translation invariant,
    // so it only depends on the length.
    std::vector<double> seg_cost(n + 1, 0.0);
    for (int len = 1; len <= n; ++len) {
        seg_cost[len] = best_linear_sq_error(static_cast<double>(len) / n, true);
    }
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(n + 1, inf), cur(n + 1, inf);
    for (int j = 1; j <= n; ++j) prev[j] = seg_cost[j];
    prev[0] = inf;
    for (int k = 2; k <= k_pieces; ++k) {
        std::fill(cur.begin(), cur.end(), inf);
        for (int j = k; j <= n; ++j) {
            double best = inf;
            for (int i = k - 1; i < j; ++i) {
                double c = prev[i] + seg_cost[j - i];
                if (c < best) best = c;
            }
            cur[j] = best;
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

double relu_lower_bound_value(int m, int l) {
    if (m < 2 || l < 2) throw PreconditionFailed("lower bound needs M >= 2, L >= 2");
    return (1.0 / (12.0 * std::sqrt(5.0))) *
           std::pow(static_cast<double>(m + 1), -2.0 * (l - 1));
}

double prop61_rate(int m, int l, double s) {
    if (m < 2 || l < 2 || !(s > 0.0)) {
        throw PreconditionFailed("rate needs M >= 2, L >= 2, s > 0");
    }
    double expo = 2.0 * std::min(static_cast<double>(l - 1), s);
    return std::pow(static_cast<double>(m) * std::log(static_cast<double>(m)), -expo);
}

}  // namespace apx
