#include "apx/weights.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace apx {
namespace {

constexpr double kWeightOverflow = 1e15;

void check_gate(const Network& net, const std::string& stage) {
    if (norms(net).linf > kWeightOverflow) {
        throw BudgetInfeasible(stage, "parameter magnitude exceeds 1e15");
    }
}

void validate_params(const WeightParams& params) {
    params.grid.validate(/*for_weights=*/true);
}

double act_tail_c(const Activation& act) { return act.tail_constant; }

// Basis bump on one period [0, K^-2].
double basis_eval(const Activation& act, int K, double delta, double beta, double y) {
    double period = 1.0 / (static_cast<double>(K) * K);
    if (act.tail_class == TailClass::HeavisideLike) {
        return eval(act, beta * (y - 3.0 * delta)) -
               eval(act, beta * (y + 3.0 * delta - period));
    }
    double s = 1.0 / (2.0 * delta * beta);
    return s * (eval(act, beta * (y - 2.0 * delta)) -
                eval(act, beta * (y - 4.0 * delta)) -
                eval(act, beta * (y - period + 4.0 * delta)) +
                eval(act, beta * (y - period + 2.0 * delta)));
}

double weight_eval_1d(const WeightParams& params, int i, double x) {
    if (i != 1 && i != 2) throw PreconditionFailed("weight index must be 1 or 2");
    if (!(params.beta > 0.0)) throw PreconditionFailed("weight_eval needs beta > 0");
    if (x < 0.0 || x > 1.0) throw OutOfDomain("weight_eval input outside [0,1]");
    int K = params.grid.K;
    double k2 = static_cast<double>(K) * K;
    // Periodic patch: w(1) := w(0).
    double period_index = std::min(std::floor(x * k2), k2 - 1.0);
    double y = x - period_index / k2;
    if (x == 1.0) y = 0.0;
    double w1 = basis_eval(params.act, K, params.grid.delta, params.beta, y);
    return i == 1 ? w1 : 1.0 - w1;
}

// Quasi-indicator net: depth 2, transitions around the (possibly shifted)
// coarse faces.
Network quasi_indicator_net(const Activation& act, int K, double delta,
                            double beta_tilde, int i) {
    double shift = i == 2 ? 1.0 / (2.0 * K) : 0.0;
    int terms = K + 1;
    Network net{act, {}};
    if (act.tail_class == TailClass::HeavisideLike) {
        Layer l1;
        l1.rows = 2 * terms;
        l1.cols = 1;
        Layer l2{1, l1.rows, {}, {0.0}};
        for (int k = 0; k < terms; ++k) {
            l1.weight.push_back(beta_tilde);
            l1.bias.push_back(beta_tilde * (shift - static_cast<double>(k) / K - 1.5 * delta));
            l2.weight.push_back(1.0);
            l1.weight.push_back(beta_tilde);
            l1.bias.push_back(beta_tilde * (shift - static_cast<double>(k + 1) / K + 1.5 * delta));
            l2.weight.push_back(-1.0);
        }
        l2.cols = l1.rows;
        net.layers = {l1, l2};
    } else {
        // The ramp must settle before the weight basis ramp starts at 2 delta
        // from the faces, and vanish inside the position-garbage band (delta).
        double s = 2.0 / (delta * beta_tilde);
        Layer l1;
        l1.rows = 4 * terms;
        l1.cols = 1;
        Layer l2{1, l1.rows, {}, {0.0}};
        for (int k = 0; k < terms; ++k) {
            double lo = static_cast<double>(k) / K;
            double hi = static_cast<double>(k + 1) / K;
            const double offs[4] = {lo + 1.25 * delta, lo + 1.75 * delta,
                                    hi - 1.75 * delta, hi - 1.25 * delta};
            const double sgn[4] = {s, -s, -s, s};
            for (int t = 0; t < 4; ++t) {
                l1.weight.push_back(beta_tilde);
                l1.bias.push_back(beta_tilde * (shift - offs[t]));
                l2.weight.push_back(sgn[t]);
            }
        }
        l2.cols = l1.rows;
        net.layers = {l1, l2};
    }
    check_gate(net, "quasi_indicator");
    return net;
}

// Periodic bump stage eta1 on the reference interval [0, 1/K]: depth 2.
Network weight_bump_stage(const Activation& act, int K, double delta, double beta) {
    double k2 = static_cast<double>(K) * K;
    Network net{act, {}};
    if (act.tail_class == TailClass::HeavisideLike) {
        Layer l1;
        l1.rows = 2 * K;
        l1.cols = 1;
        Layer l2{1, l1.rows, {}, {0.0}};
        for (int k = 0; k < K; ++k) {
            l1.weight.push_back(beta);
            l1.bias.push_back(-beta * (k / k2 + 3.0 * delta));
            l2.weight.push_back(1.0);
            l1.weight.push_back(beta);
            l1.bias.push_back(-beta * ((k + 1) / k2 - 3.0 * delta));
            l2.weight.push_back(-1.0);
        }
        l2.cols = l1.rows;
        net.layers = {l1, l2};
    } else {
        double s = 1.0 / (2.0 * delta * beta);
        Layer l1;
        l1.rows = 4 * K;
        l1.cols = 1;
        Layer l2{1, l1.rows, {}, {0.0}};
        for (int k = 0; k < K; ++k) {
            const double offs[4] = {k / k2 + 2.0 * delta, k / k2 + 4.0 * delta,
                                    (k + 1) / k2 - 4.0 * delta, (k + 1) / k2 - 2.0 * delta};
            const double sgn[4] = {s, -s, -s, s};
            for (int t = 0; t < 4; ++t) {
                l1.weight.push_back(beta);
                l1.bias.push_back(-beta * offs[t]);
                l2.weight.push_back(sgn[t]);
            }
        }
        l2.cols = l1.rows;
        net.layers = {l1, l2};
    }
    check_gate(net, "weight_bump");
    return net;
}

bool on_coarse_band(int i, int K, double delta, double x) {
    double shift = i == 2 ? 1.0 / (2.0 * K) : 0.0;
    double t = (x + shift) * K;
    double frac = t - std::floor(t);
    double dist = std::min(frac, 1.0 - frac) / K;
    return dist <= delta;
}

Network complement_net(const Network& net) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = -1.0;
    Eigen::VectorXd b(1);
    b(0) = 1.0;
    return postmap(m, b, net);
}

double resolve_beta(const WeightParams& params, double auto_floor, const char* stage) {
    double beta = params.beta > 0.0 ? params.beta : 2.0 * auto_floor;
    if (!(beta > 0.0) || beta > kWeightOverflow) {
        throw BudgetInfeasible(stage, "basis slope outside the representable range");
    }
    return beta;
}

}  // namespace

double weight_eval(const WeightParams& params, int i, double x) {
    validate_params(params);
    return weight_eval_1d(params, i, x);
}

double weight_eval(const WeightParams& params, const ShiftIndex& v,
                   const std::vector<double>& x) {
    validate_params(params);
    if (v.size() != x.size()) throw ShapeMismatch("shift index vs point dimension");
    double w = 1.0;
    for (size_t l = 0; l < v.size(); ++l) w *= weight_eval_1d(params, v[l], x[l]);
    return w;
}

double quasi_indicator_eval(const WeightParams& params, int i, double x) {
    if (params.grid.K < 1 || params.grid.delta <= 0.0) {
        throw PreconditionFailed("quasi-indicator needs K >= 1 and delta > 0");
    }
    if (i != 1 && i != 2) throw PreconditionFailed("quasi-indicator index must be 1 or 2");
    if (!(params.beta_tilde > 0.0)) {
        throw PreconditionFailed("quasi_indicator_eval needs beta_tilde > 0");
    }
    int K = params.grid.K;
    double delta = params.grid.delta;
    if (!(delta < 1.0 / (8.0 * K))) throw PreconditionFailed("delta too large for quasi-indicator");
    const Activation& act = params.act;
    double bt = params.beta_tilde;
    double z = i == 2 ? x + 1.0 / (2.0 * K) : x;
    double acc = 0.0;
    if (act.tail_class == TailClass::HeavisideLike) {
        for (int k = 0; k <= K; ++k) {
            acc += eval(act, bt * (z - static_cast<double>(k) / K - 1.5 * delta)) -
                   eval(act, bt * (z - static_cast<double>(k + 1) / K + 1.5 * delta));
        }
    } else {
        double s = 2.0 / (delta * bt);
        for (int k = 0; k <= K; ++k) {
            double lo = static_cast<double>(k) / K;
            double hi = static_cast<double>(k + 1) / K;
            acc += s * (eval(act, bt * (z - lo - 1.25 * delta)) -
                        eval(act, bt * (z - lo - 1.75 * delta)) -
                        eval(act, bt * (z - hi + 1.75 * delta)) +
                        eval(act, bt * (z - hi + 1.25 * delta)));
        }
    }
    return acc;
}

Network build_weight_band(const Activation& act, const ReferencePoint& ref,
                          const WeightParams& params, int i, double eps) {
    validate_params(params);
    if (!(eps > 0.0 && eps < 1.0)) throw PreconditionFailed("band eps in (0,1)");
    int K = params.grid.K;
    double delta = params.grid.delta;
    double c = act_tail_c(act);
    double beta = resolve_beta(params, 4.0 * K * c / (delta * eps), "weight_band");
    WeightParams local = params;
    local.beta = beta;

    // Position accuracy: transition mismatch scales with the bump slope.
    double lip = std::max(act.lipschitz, 1.0);
    double eps_pos = std::max(eps / (4.0 * K * beta * lip), 5e-10);
    GridSpec g1{1, K, delta};
    for (int attempt = 0; attempt < 3; ++attempt) {
        Network pos = build_relative_position(act, ref, g1, eps_pos);
        Network bump = weight_bump_stage(act, K, delta, beta);
        Network psi1 = chain(pos, bump);
        check_gate(psi1, "weight_band");
        Network net = i == 2 ? complement_net(psi1) : psi1;

        // Certify off the coarse bands against the reference evaluator.
        int n = std::min(static_cast<int>(std::ceil(10.0 / delta)) + 1, 400001);
        Eigen::MatrixXd pts = detail::tensor_grid(1, 0.0, 1.0, n);
        Eigen::MatrixXd out = evaluate_batch(net, pts);
        double worst = 0.0;
        for (int p = 0; p < n; ++p) {
            double x = pts(0, p);
            if (on_coarse_band(1, K, delta, x)) continue;
            worst = std::max(worst, std::abs(out(0, p) - weight_eval_1d(local, i, x)));
        }
        if (worst <= eps) return net;
        // Keep the position tolerance above the finite-difference floor of the
        // identity unit; below it the position builder cannot be realized.
        eps_pos = std::max(eps_pos * 0.25, 2.5e-10);
    }
    throw BudgetInfeasible("weight_band", "off-band certification missed the target");
}

Network build_weight_global(const Activation& act, const ReferencePoint& ref,
                            const WeightParams& params, int i, double eps) {
    validate_params(params);
    if (!(eps > 0.0 && eps < 1.0)) throw PreconditionFailed("global eps in (0,1)");
    int K = params.grid.K;
    double delta = params.grid.delta;
    double c = act_tail_c(act);
    double c1 = act.tail_class == TailClass::HeavisideLike ? c : 1.0;

    WeightParams local = params;
    if (local.beta <= 0.0) {
        // Quasi-vanishing floor for the target itself, not the cascaded
        // band-lemma floor (which over-steepens the bump transitions).
        local.beta = 2.0 * (2.0 / (delta * eps)) * c;
    }

    double eps1 = eps / (6.0 * c1 + 15.0);
    double eps2 = eps1;
    double eps3 = eps / 3.0;

    for (int attempt = 0; attempt < 3; ++attempt) {
        Network psi1 = build_weight_band(act, ref, local, 1, eps1);
        double bt = local.beta_tilde > 0.0
                        ? local.beta_tilde
                        : 16.0 * K * c / (delta * eps2);
        Network ind = quasi_indicator_net(act, K, delta, bt, 1);
        double q_ind = detail::realized_bound(ind, 0.0, 1.0, 4001) + 0.5;
        Network mu = build_identity(act, ref, q_ind, eps2 / 2.0, 2);
        Network nu1 = chain(ind, mu);

        double q_psi = detail::realized_bound(psi1, 0.0, 1.0, 4001) + 0.5;
        double q_nu = detail::realized_bound(nu1, 0.0, 1.0, 4001) + 0.5;
        Network front = stack({psi1, nu1});
        Network prod = detail::product_stage(act, ref, 2, {{0, 1}},
                                             std::max(q_psi, q_nu), eps3);
        Network g1 = chain(front, prod);
        check_gate(g1, "weight_global");
        Network g = i == 2 ? complement_net(g1) : g1;

        // Full-domain certification against the reference evaluator.
        int n = static_cast<int>(std::ceil(10.0 / delta)) + 1;
        n = std::min(n, 400001);
        Eigen::MatrixXd pts = detail::tensor_grid(1, 0.0, 1.0, n);
        Eigen::MatrixXd out = evaluate_batch(g, pts);
        double worst = 0.0;
        for (int p = 0; p < n; ++p) {
            double want = weight_eval_1d(local, i, pts(0, p));
            worst = std::max(worst, std::abs(out(0, p) - want));
        }
        if (worst <= eps) return g;
        eps1 *= 0.5;
        eps2 *= 0.5;
        eps3 *= 0.5;
    }
    throw BudgetInfeasible("weight_global", "grid certification missed the target");
}

Network build_weight_multi(const Activation& act, const ReferencePoint& ref,
                           const WeightParams& params, const ShiftIndex& v,
                           double eps) {
    validate_params(params);
    int d = static_cast<int>(v.size());
    if (d < 1 || d > 3) throw PreconditionFailed("weight_multi supports d in 1..3");
    for (int vl : v) {
        if (vl != 1 && vl != 2) throw PreconditionFailed("shift entries must be 1 or 2");
    }
    int K = params.grid.K;
    double delta = params.grid.delta;
    double c = act_tail_c(act);
    double c1 = act.tail_class == TailClass::HeavisideLike ? c : 1.0;

    WeightParams local = params;
    if (local.beta <= 0.0) {
        local.beta = 2.0 * (2.0 * std::pow(2.0 * c1 + 3.0, d - 1) / (delta * eps)) * c;
    }

    double eps_axis = eps / (2.0 * d * std::pow(2.0, d - 1));
    double eps_prod = eps / 2.0;
    for (int attempt = 0; attempt < 3; ++attempt) {
        std::vector<Network> axes;
        for (int l = 0; l < d; ++l) {
            Network g = build_weight_global(act, ref, local, v[l], eps_axis);
            Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(1, d);
            sel(0, l) = 1.0;
            axes.push_back(premap(g, sel, Eigen::VectorXd::Zero(1)));
        }
        Network front = stack(axes);
        double q = 0.0;
        for (const Network& a : axes) {
            q = std::max(q, detail::realized_bound(a, 0.0, 1.0, d == 1 ? 4001 : 101));
        }
        std::vector<int> all(d);
        for (int l = 0; l < d; ++l) all[l] = l;
        Network prod = detail::product_stage(act, ref, d, {all}, q + 0.5, eps_prod);
        Network g = chain(front, prod);
        check_gate(g, "weight_multi");

        int n = d == 1 ? std::min(static_cast<int>(std::ceil(10.0 / delta)) + 1, 400001)
                       : 201;
        Eigen::MatrixXd pts = detail::tensor_grid(d, 0.0, 1.0, n);
        Eigen::MatrixXd out = evaluate_batch(g, pts);
        double worst = 0.0;
        std::vector<double> x(d);
        for (long p = 0; p < pts.cols(); ++p) {
            for (int l = 0; l < d; ++l) x[l] = pts(l, p);
            double want = 1.0;
            for (int l = 0; l < d; ++l) want *= weight_eval_1d(local, v[l], x[l]);
            worst = std::max(worst, std::abs(out(0, p) - want));
        }
        if (worst <= eps) return g;
        eps_axis *= 0.5;
        eps_prod *= 0.5;
    }
    throw BudgetInfeasible("weight_multi", "grid certification missed the target");
}

namespace detail {

AxisDecomp axis_decomp(int K, int shift) {
    AxisDecomp d;
    double s = 1.0 / (2.0 * static_cast<double>(K) * K);
    if (shift == 1) {
        for (int k = 0; k < K; ++k) d.corner.push_back(static_cast<double>(k) / K);
    } else {
        for (int k = 0; k <= K; ++k) d.corner.push_back(static_cast<double>(k) / K - s);
    }
    return d;
}

namespace {

// Taylor data for the shifted partition: coefficient per (coarse cell combo,
// refined slot combo, alpha), in the monomial basis.
struct ShiftedPoly {
    std::vector<MultiIndex> alphas;
    std::vector<int> cells_per_axis;
    long coarse_count = 1;
    long slot_count = 1;
    // coeff[coarse][alpha] is a vector over slots.
    std::vector<std::vector<std::vector<double>>> coeff;  // [coarse][slot][alpha]
    std::vector<double> c_max_per_alpha;
};

std::vector<MultiIndex> enumerate_alphas(int d, int degree) {
    std::vector<MultiIndex> alphas;
    std::vector<int> cur(d, 0);
    std::function<void(int, int)> rec = [&](int axis, int left) {
        if (axis == d) {
            alphas.push_back(MultiIndex{cur});
            return;
        }
        for (int a = 0; a <= left; ++a) {
            cur[axis] = a;
            rec(axis + 1, left - a);
        }
        cur[axis] = 0;
    };
    rec(0, degree);
    return alphas;
}

ShiftedPoly shifted_poly_coeffs(const TargetFunction& f, double s, int K,
                                const std::vector<AxisDecomp>& decomps) {
    int d = f.d;
    if (!f.partial) throw DerivativeOracleMissing("target supplies no partials");
    ShiftedPoly out;
    int degree = static_cast<int>(std::ceil(s)) - 1;
    out.alphas = enumerate_alphas(d, degree);
    for (int l = 0; l < d; ++l) {
        out.cells_per_axis.push_back(static_cast<int>(decomps[l].corner.size()));
        out.coarse_count *= out.cells_per_axis.back();
        out.slot_count *= K;
    }
    out.coeff.assign(out.coarse_count,
                     std::vector<std::vector<double>>(
                         out.slot_count, std::vector<double>(out.alphas.size(), 0.0)));
    out.c_max_per_alpha.assign(out.alphas.size(), 0.0);

    double fine_w = 1.0 / (static_cast<double>(K) * K);
    std::vector<int> ci(d, 0), sj(d, 0);
    std::vector<double> center(d);

    auto advance = [](std::vector<int>& idx, const std::vector<int>& lim) {
        int axis = static_cast<int>(idx.size()) - 1;
        while (axis >= 0) {
            if (++idx[axis] < lim[axis]) return true;
            idx[axis] = 0;
            --axis;
        }
        return false;
    };
    std::vector<int> slot_lim(d, 0);
    for (int l = 0; l < d; ++l) slot_lim[l] = K;

    long coarse_flat = 0;
    do {
        std::fill(sj.begin(), sj.end(), 0);
        long slot_flat = 0;
        do {
            // Center of the fine cell clipped to the domain.
            for (int l = 0; l < d; ++l) {
                double lo = decomps[l].corner[ci[l]] + sj[l] * fine_w;
                double hi = lo + fine_w;
                double clo = std::max(lo, 0.0), chi = std::min(hi, 1.0);
                center[l] = clo < chi ? 0.5 * (clo + chi)
                                      : std::clamp(lo, 1e-9, 1.0 - 1e-9);
            }
            auto& slot_coeff = out.coeff[coarse_flat][slot_flat];
            for (const auto& beta : out.alphas) {
                double fact = 1.0;
                for (int l = 0; l < d; ++l) {
                    for (int t = 2; t <= beta.alpha[l]; ++t) fact *= t;
                }
                double base = f.partial(beta, center) / fact;
                // Re-expand prod (x_l - c_l)^{beta_l} into monomials.
                std::function<void(int, double, std::vector<int>&)> expand =
                    [&](int axis, double coef, std::vector<int>& gamma) {
                        if (axis == d) {
                            for (size_t a = 0; a < out.alphas.size(); ++a) {
                                if (out.alphas[a].alpha == gamma) {
                                    slot_coeff[a] += coef;
                                    return;
                                }
                            }
                            throw Error("monomial basis lookup failed");
                        }
                        int b = beta.alpha[axis];
                        for (int g = b; g >= 0; --g) {
                            double c_bg = 1.0;
                            for (int t = 0; t < b - g; ++t) c_bg = c_bg * (b - t) / (t + 1);
                            gamma[axis] = g;
                            expand(axis + 1,
                                   coef * c_bg * std::pow(-center[axis], b - g), gamma);
                        }
                        gamma[axis] = 0;
                    };
                std::vector<int> gamma(d, 0);
                expand(0, base, gamma);
            }
            for (size_t a = 0; a < out.alphas.size(); ++a) {
                out.c_max_per_alpha[a] =
                    std::max(out.c_max_per_alpha[a], std::abs(slot_coeff[a]));
            }
            ++slot_flat;
        } while (advance(sj, slot_lim));
        ++coarse_flat;
    } while (advance(ci, out.cells_per_axis));
    return out;
}

// Stack of univariate cell indicators over the (possibly clipped) coarse
// decomposition of each axis; output index = prefix(axis) + cell.
Network decomp_indicator_stage(const Activation& act, int d, int K,
                               const std::vector<AxisDecomp>& decomps, double delta,
                               double eps) {
    std::vector<Network> parts;
    for (int l = 0; l < d; ++l) {
        Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(1, d);
        sel(0, l) = 1.0;
        for (double corner : decomps[l].corner) {
            Network ind = build_indicator_1d(act, corner, corner + 1.0 / K, delta, eps);
            parts.push_back(premap(ind, sel, Eigen::VectorXd::Zero(1)));
        }
    }
    return stack(parts);
}

// Relative position within the decomposition cell: x_l - corner(x_l).
Network decomp_relative_position(const Activation& act, const ReferencePoint& ref,
                                 int d, int K, const std::vector<AxisDecomp>& decomps,
                                 double delta, double eps) {
    MultiIndex one{{1}};
    std::vector<Network> axes;
    for (int l = 0; l < d; ++l) {
        Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(1, d);
        sel(0, l) = 1.0;
        int cells = static_cast<int>(decomps[l].corner.size());
        std::vector<Network> parts;
        parts.push_back(premap(build_monomial(act, ref, one, 1.2, eps / 2.0), sel,
                               Eigen::VectorXd::Zero(1)));
        for (int k = 0; k < cells; ++k) {
            double corner = decomps[l].corner[k];
            Network ind = build_indicator_1d(act, corner, corner + 1.0 / K, delta,
                                             eps / (2.0 * cells));
            parts.push_back(premap(ind, sel, Eigen::VectorXd::Zero(1)));
        }
        Network bundle = stack(parts);
        Eigen::MatrixXd mix(1, cells + 1);
        mix(0, 0) = 1.0;
        for (int k = 0; k < cells; ++k) mix(0, k + 1) = -decomps[l].corner[k];
        axes.push_back(postmap(mix, Eigen::VectorXd::Zero(1), bundle));
    }
    return stack(axes);
}

// Depth-3 net with K^d outputs: output j = coefficient of refined slot j
// looked up over the coarse decomposition cells (alpha fixed).
Network decomp_coeff_net(const Activation& act, const ReferencePoint& ref,
                         int d, int K, const std::vector<AxisDecomp>& decomps,
                         double delta, const ShiftedPoly& poly, size_t alpha_idx,
                         double eps) {
    double c_max = std::max(poly.c_max_per_alpha[alpha_idx], 1e-9);
    long slot_count = poly.slot_count;
    long coarse_count = poly.coarse_count;
    double eps_axis =
        eps / (c_max * static_cast<double>(coarse_count) * std::pow(2.0, d + 1));
    double eps_prod = eps / (2.0 * c_max * static_cast<double>(coarse_count));

    Network stage1 = decomp_indicator_stage(act, d, K, decomps, delta, eps_axis);

    // One d-ary product per coarse combo.
    int n_inputs = stage1.output_dim();
    std::vector<std::vector<int>> selections;
    std::vector<int> prefix(d, 0);
    for (int l = 1; l < d; ++l) {
        prefix[l] = prefix[l - 1] + static_cast<int>(decomps[l - 1].corner.size());
    }
    std::vector<int> ci(d, 0);
    auto advance = [](std::vector<int>& idx, const std::vector<int>& lim) {
        int axis = static_cast<int>(idx.size()) - 1;
        while (axis >= 0) {
            if (++idx[axis] < lim[axis]) return true;
            idx[axis] = 0;
            --axis;
        }
        return false;
    };
    do {
        std::vector<int> sel(d);
        for (int l = 0; l < d; ++l) sel[l] = prefix[l] + ci[l];
        selections.push_back(sel);
    } while (advance(ci, poly.cells_per_axis));
    Network stage2 = product_stage(act, ref, n_inputs, selections, 1.5, eps_prod);
    Network combos = chain(stage1, stage2);

    Eigen::MatrixXd mix(slot_count, coarse_count);
    for (long cc = 0; cc < coarse_count; ++cc) {
        for (long sl = 0; sl < slot_count; ++sl) {
            mix(sl, cc) = poly.coeff[cc][sl][alpha_idx];
        }
    }
    return postmap(mix, Eigen::VectorXd::Zero(slot_count), combos);
}

// Depth-5 net: the piecewise constant (per refined slot) coefficient field of
// one alpha on the shifted partition.
Network decomp_refined_pwc(const Activation& act, const ReferencePoint& ref,
                           int d, int K, const std::vector<AxisDecomp>& decomps,
                           double delta, const ShiftedPoly& poly, size_t alpha_idx,
                           double eps) {
    double k2 = static_cast<double>(K) * K;
    long kd = poly.slot_count;
    double c_max = std::max(poly.c_max_per_alpha[alpha_idx], 1e-9);
    double eps1 = eps / (4.0 * (c_max + 1.0));
    double eps2 = eps / (2.0 * static_cast<double>(kd));

    Network coarse = decomp_coeff_net(act, ref, d, K, decomps, delta, poly,
                                      alpha_idx, eps1);
    double id_q = realized_bound(coarse, 0.0, 1.0, d == 1 ? 801 : 41) * 1.25 + 0.5;
    Network with_id = chain(coarse, identity_stage(act, ref, static_cast<int>(kd),
                                                   id_q, eps1));

    Network pos = decomp_relative_position(act, ref, d, K, decomps, delta / 2.0,
                                           delta / 2.0);
    Network cells = cell_indicator_stage(act, ref, d, K, 0.0, 1.0 / k2, delta / 2.0,
                                         eps / (2.0 * static_cast<double>(kd)));
    Network inds = chain(pos, cells);

    Network front = stack({with_id, inds});
    std::vector<std::vector<int>> selections;
    for (long j = 0; j < kd; ++j) {
        selections.push_back({static_cast<int>(j), static_cast<int>(kd + j)});
    }
    Network products = product_stage(act, ref, static_cast<int>(2 * kd), selections,
                                     std::max(id_q, 3.0), eps2);
    Eigen::MatrixXd ones(1, kd);
    ones.setOnes();
    Network net = postmap(ones, Eigen::VectorXd::Zero(1), chain(front, products));
    check_gate(net, "shifted_refined_pwc");
    return net;
}

}  // namespace

Network build_shifted_approximator(const Activation& act, const ReferencePoint& ref,
                                   const TargetFunction& f, double s, int K,
                                   double delta, const ShiftIndex& v, double eps,
                                   ApproxBudget* budget) {
    int d = f.d;
    if (static_cast<int>(v.size()) != d) throw ShapeMismatch("shift index vs target d");
    std::vector<AxisDecomp> decomps;
    for (int l = 0; l < d; ++l) decomps.push_back(axis_decomp(K, v[l]));
    ShiftedPoly poly = shifted_poly_coeffs(f, s, K, decomps);
    size_t n_alpha = poly.alphas.size();
    ReferencePoint r = ensure_ref(act, ref, static_cast<int>(std::ceil(s)) + 1);

    GridSpec grid{d, K, delta};
    double eps_a = eps / (2.0 * static_cast<double>(n_alpha));
    for (int attempt = 0; attempt < 3; ++attempt) {
        std::vector<Network> parts;
        for (size_t a = 0; a < n_alpha; ++a) {
            Network pwc = decomp_refined_pwc(act, r, d, K, decomps, delta, poly, a,
                                             eps_a);
            if (poly.alphas[a].order() == 0) {
                double qid = std::max(poly.c_max_per_alpha[a] * 2.0, 1.0);
                parts.push_back(chain(pwc, build_identity(act, r, qid, eps_a, 2)));
            } else {
                Network mono = build_monomial(act, r, poly.alphas[a], 1.0, eps_a);
                Network nu = build_identity(act, r, 1.6, eps_a, 4);
                Network psi2 = chain(mono, nu);
                double q3 = realized_bound(pwc, 0.0, 1.0, d == 1 ? 801 : 41) * 1.25 + 0.5;
                Network front = stack({psi2, pwc});
                Network prod = product_stage(act, r, 2, {{0, 1}}, std::max(2.0, q3),
                                             eps_a);
                parts.push_back(chain(front, prod));
            }
        }
        Network net = parts.size() == 1
                          ? parts[0]
                          : postmap(Eigen::MatrixXd::Ones(1, parts.size()),
                                    Eigen::VectorXd::Zero(1), stack(parts));
        check_gate(net, "shifted_approximator");

        // Certify on the shifted interior region.
        int n = d == 1 ? std::min(static_cast<int>(std::ceil(4.0 / delta)) + 1, 200001)
                       : std::min(static_cast<int>(std::ceil(2.0 / delta)) + 1, 501);
        Eigen::MatrixXd pts = tensor_grid(d, 0.0, 1.0, n);
        Eigen::MatrixXd out = evaluate_batch(net, pts);
        double worst = 0.0;
        std::vector<double> x(d);
        for (long p = 0; p < pts.cols(); ++p) {
            for (int l = 0; l < d; ++l) x[l] = pts(l, p);
            if (!in_interior(grid, x, GridLevel::Refined, &v)) continue;
            worst = std::max(worst, std::abs(out(0, p) - f.value(x)));
        }
        if (worst <= eps) {
            if (budget != nullptr) {
                budget->record("shifted.interior_sup", worst);
                budget->record("shifted.eps_per_alpha", eps_a);
            }
            return net;
        }
        eps_a *= 0.5;
    }
    throw BudgetInfeasible("shifted_approximator",
                           "interior certification missed the target");
}

}  // namespace detail

LinfResult build_linf_approximator(const Activation& act, const ReferencePoint& ref,
                                   const TargetFunction& f, double s, double eps,
                                   const LinfOptions& opts) {
    int d = f.d;
    if (d < 1 || d > 2) throw PreconditionFailed("uniform assembly supports d in 1..2");
    if (!(eps > 0.0 && eps < 1.0)) throw PreconditionFailed("linf eps in (0,1)");
    double c = act.tail_constant;
    double c1 = act.tail_class == TailClass::HeavisideLike ? c : 1.0;
    double w_bound = 2.0 * c1 + 3.0;

    double eps1 = eps / (std::pow(2.0, d + 2) * w_bound);

    double c_cal = opts.C_cal;
    if (c_cal <= 0.0) {
        GridSpec trial{d, 2, 1e-4};
        PiecewisePolynomialSpec probe = local_polynomial_coeffs(f, s, trial);
        c_cal = std::max(2.0 * probe.certified_cell_sup_error * std::pow(2.0, 2.0 * s),
                         1e-6);
    }
    int K = std::max(1, static_cast<int>(std::ceil(
                             std::pow(c_cal / eps1, 1.0 / (2.0 * s)))));
    double delta = 1.0 / (24.0 * static_cast<double>(K) * K);

    ApproxBudget budget;
    budget.eps = eps;
    budget.s = s;
    budget.d = d;
    budget.K = K;
    budget.delta = delta;
    budget.C_cal = c_cal;

    // All shift indices.
    std::vector<ShiftIndex> shifts;
    {
        std::vector<int> cur(d, 1);
        while (true) {
            shifts.push_back(cur);
            int axis = d - 1;
            while (axis >= 0) {
                if (++cur[axis] <= 2) break;
                cur[axis] = 1;
                --axis;
            }
            if (axis < 0) break;
        }
    }

    ReferencePoint r = detail::ensure_ref(act, ref, static_cast<int>(std::ceil(s)) + 1);
    double eps1_cur = eps1;
    for (int attempt = 0; attempt <= opts.max_retries; ++attempt) {
        std::vector<Network> psis;
        double m_psi = 0.0;
        for (const ShiftIndex& v : shifts) {
            Network psi = detail::build_shifted_approximator(act, r, f, s, K, delta, v,
                                                             eps1_cur, &budget);
            m_psi = std::max(m_psi, detail::realized_bound(psi, 0.0, 1.0,
                                                           d == 1 ? 4001 : 101));
            psis.push_back(std::move(psi));
        }

        double eps2 = eps / (std::pow(2.0, d + 2) * (m_psi + std::pow(2.0, d) + 1.0)) /
                      std::pow(2.0, attempt);
        WeightParams params;
        params.grid = GridSpec{1, K, delta};
        params.act = act;
        // Pin the bump slope to the assembly accuracy rather than letting each
        // weight net auto-steepen against its own (much smaller) tolerance;
        // an over-steep bump amplifies position error past what the position
        // builder can deliver, while band suppression only has to hold at the
        // assembly scale (and is certified below either way).
        params.beta =
            2.0 * (2.0 * std::pow(2.0 * c1 + 3.0, d - 1) / (delta * eps)) * c;
        budget.record("linf.eps_shift", eps1_cur);
        budget.record("linf.eps_weight", eps2);

        std::vector<Network> pairs;
        double eps_eta = eps / std::pow(2.0, d + 1);
        for (size_t vi = 0; vi < shifts.size(); ++vi) {
            Network nu = build_weight_multi(act, r, params, shifts[vi], eps2);
            double m_nu = detail::realized_bound(nu, 0.0, 1.0, d == 1 ? 4001 : 101);
            Network nu6 = chain(nu, build_identity(act, r, m_nu + 0.5,
                                                   std::min(eps2, eps_eta / 4.0), 2));
            Network front = stack({psis[vi], nu6});
            Network prod = detail::product_stage(
                act, r, 2, {{0, 1}}, std::max(m_psi, m_nu) + 0.5, eps_eta);
            pairs.push_back(chain(front, prod));
        }
        Network net = postmap(Eigen::MatrixXd::Ones(1, pairs.size()),
                              Eigen::VectorXd::Zero(1), stack(pairs));

        // Full-domain sup certification at spacing <= delta/10.
        int n = static_cast<int>(std::ceil(10.0 / delta)) + 1;
        if (d == 2) n = std::min(n, 1201);
        n = std::min(n, 400001);
        double worst = 0.0;
        Eigen::MatrixXd pts = detail::tensor_grid(d, 0.0, 1.0, n);
        std::vector<double> x(d);
        for (long start = 0; start < pts.cols(); start += 65536) {
            long cnt = std::min<long>(65536, pts.cols() - start);
            Eigen::MatrixXd block = pts.middleCols(start, cnt);
            Eigen::MatrixXd out = evaluate_batch(net, block);
            for (long p = 0; p < cnt; ++p) {
                for (int l = 0; l < d; ++l) x[l] = block(l, p);
                worst = std::max(worst, std::abs(out(0, p) - f.value(x)));
            }
        }
        budget.record("linf.sup_error", worst);
        if (worst <= eps) {
            return LinfResult{std::move(net), std::move(budget), worst};
        }
        eps1_cur *= 0.5;
    }
    throw BudgetInfeasible("linf_assembly", "full-domain certification missed the target");
}

}  // namespace apx
