#include "apx/construct.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "apx/rng.hpp"

namespace apx {
namespace {

constexpr double kWeightOverflow = 1e15;

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

}  // namespace

namespace detail {

std::vector<std::vector<int>> index_list(int k, int d) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(d, 1);
    while (true) {
        out.push_back(cur);
        int axis = d - 1;
        while (axis >= 0) {
            if (++cur[axis] <= k) break;
            cur[axis] = 1;
            --axis;
        }
        if (axis < 0) break;
    }
    return out;
}

Eigen::MatrixXd tensor_grid(int d, double lo, double hi, int n) {
    long total = 1;
    for (int l = 0; l < d; ++l) total *= n;
    Eigen::MatrixXd pts(d, total);
    for (long idx = 0; idx < total; ++idx) {
        long rem = idx;
        for (int l = d - 1; l >= 0; --l) {
            int g = static_cast<int>(rem % n);
            rem /= n;
            pts(l, idx) = lo + (hi - lo) * static_cast<double>(g) / (n - 1);
        }
    }
    return pts;
}

}  // namespace detail

namespace {

int cert_points_per_axis(int d) {
    if (d == 1) return 2001;
    if (d == 2) return 73;
    return 17;
}

void check_norm_gate(const Network& net, const std::string& stage) {
    if (norms(net).linf > kWeightOverflow) {
        throw BudgetInfeasible(stage, "parameter magnitude exceeds 1e15");
    }
}

double heaviside_factor(const Activation& act) {
    // The (1+C1)^d-style bound factors collapse for smooth-ramp activations.
    return act.tail_class == TailClass::HeavisideLike ? 1.0 + act.tail_constant : 1.0;
}

double indicator_bound(const Activation& act) {
    return act.tail_class == TailClass::HeavisideLike
               ? 2.0 * (1.0 + act.tail_constant)
               : 2.0;
}

}  // namespace

long PiecewiseConstantSpec::cell_count() const {
    long n = 1;
    long k2 = static_cast<long>(grid.K) * grid.K;
    for (int l = 0; l < grid.d; ++l) n *= k2;
    return n;
}

long PiecewiseConstantSpec::flat_index(const std::vector<int>& i,
                                       const std::vector<int>& j) const {
    long k2 = static_cast<long>(grid.K) * grid.K;
    long flat = 0;
    for (int l = 0; l < grid.d; ++l) {
        long fine = static_cast<long>(i[l] - 1) * grid.K + (j[l] - 1);
        flat = flat * k2 + fine;
    }
    return flat;
}

double PiecewiseConstantSpec::at(const std::vector<int>& i,
                                 const std::vector<int>& j) const {
    return coeffs[flat_index(i, j)];
}

double PiecewiseConstantSpec::value(const std::vector<double>& x) const {
    std::vector<int> i, j;
    refined_index(grid, x, i, j);
    return at(i, j);
}

PiecewiseConstantSpec PiecewiseConstantSpec::constant(const GridSpec& grid, double c) {
    PiecewiseConstantSpec spec;
    spec.grid = grid;
    PiecewiseConstantSpec tmp;
    tmp.grid = grid;
    spec.coeffs.assign(tmp.cell_count(), c);
    spec.c_max = std::abs(c);
    return spec;
}

double PiecewisePolynomialSpec::value(const std::vector<double>& x) const {
    std::vector<int> i, j;
    refined_index(grid, x, i, j);
    PiecewiseConstantSpec probe;
    probe.grid = grid;
    long cell = probe.flat_index(i, j);
    double acc = 0.0;
    for (size_t a = 0; a < alphas.size(); ++a) {
        double mono = 1.0;
        for (int l = 0; l < grid.d; ++l) {
            for (int p = 0; p < alphas[a].alpha[l]; ++p) mono *= x[l];
        }
        acc += coeffs[cell][a] * mono;
    }
    return acc;
}

double b_m_sum(const std::vector<double>& q, int k) {
    int m = static_cast<int>(q.size());
    if (m < 1) throw PreconditionFailed("b_m_sum needs m >= 1");
    if (m > 24) throw PreconditionFailed("b_m_sum m too large");
    double total = 0.0;
    for (unsigned long mask = 0; mask < (1ul << m); ++mask) {
        double dot = 0.0;
        int sign = 1;
        for (int i = 0; i < m; ++i) {
            if (mask & (1ul << i)) {
                dot += q[i];
            } else {
                dot -= q[i];
                sign = -sign;
            }
        }
        total += sign * std::pow(dot, k);
    }
    return std::ldexp(total, -m);
}

namespace detail {

ReferencePoint ensure_ref(const Activation& act, const ReferencePoint& ref,
                          int m_needed) {
    if (ref.max_order >= m_needed && ref.min_abs_derivative >= 1e-10) return ref;
    return find_reference_point(act, m_needed);
}

double realized_bound(const Network& net, double lo, double hi, int points_per_axis) {
    Eigen::MatrixXd pts = tensor_grid(net.input_dim(), lo, hi, points_per_axis);
    Eigen::MatrixXd out = evaluate_batch(net, pts);
    return out.cwiseAbs().maxCoeff();
}

Network product_stage(const Activation& act, const ReferencePoint& ref,
                      int n_inputs, const std::vector<std::vector<int>>& selections,
                      double q_radius, double eps_each) {
    std::vector<Network> blocks;
    blocks.reserve(selections.size());
    for (const auto& sel : selections) {
        int arity = static_cast<int>(sel.size());
        MultiIndex alpha{std::vector<int>(arity, 1)};
        Network block = build_monomial(act, ref, alpha, q_radius, eps_each);
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(arity, n_inputs);
        for (int r = 0; r < arity; ++r) s(r, sel[r]) = 1.0;
        blocks.push_back(premap(block, s, Eigen::VectorXd::Zero(arity)));
    }
    return stack(blocks);
}

Network identity_stage(const Activation& act, const ReferencePoint& ref,
                       int n_inputs, double q_radius, double eps_each) {
    std::vector<std::vector<int>> selections(n_inputs);
    for (int i = 0; i < n_inputs; ++i) selections[i] = {i};
    return product_stage(act, ref, n_inputs, selections, q_radius, eps_each);
}

}  // namespace detail

Network build_monomial(const Activation& act, const ReferencePoint& ref,
                       const MultiIndex& alpha, double q_radius, double eps,
                       ApproxBudget* budget) {
    int d = alpha.dim();
    int m = alpha.order();
    if (d < 1) throw PreconditionFailed("monomial needs d >= 1");
    if (!(eps > 0.0 && eps < 1.0)) throw PreconditionFailed("monomial eps in (0,1)");
    if (m == 0) {
        // Constant 1; no activation dependence needed.
        Layer l1{1, d, std::vector<double>(d, 0.0), {0.0}};
        Layer l2{1, 1, {0.0}, {1.0}};
        return Network{act, {l1, l2}};
    }
    if (m + 2 > kMaxDerivOrder) {
        throw BudgetInfeasible("monomial", "order too high for the derivative engine");
    }
    ReferencePoint r = detail::ensure_ref(act, ref, m);
    double t0 = r.t0;
    double phi_m = derivative(act, m, t0);
    if (std::abs(phi_m) < 1e-10) {
        throw BudgetInfeasible("monomial", "reference derivative too small");
    }

    // Slot-to-coordinate assignment: coordinate l owns alpha_l slots.
    std::vector<int> slot_coord;
    for (int l = 0; l < d; ++l) {
        for (int a = 0; a < alpha.alpha[l]; ++a) slot_coord.push_back(l);
    }

    double q = std::max(q_radius, 1e-6);
    double mq = m * q;

    // Second-order step selection: the signed symmetric sum cancels the
    // (m+1)-st Taylor term by parity, so the leading truncation error is
    // h^2 (mq)^{m+2} sup|phi^(m+2)| / ((m+2)! |phi^(m)(t0)|).
    double radius = std::min(mq * 0.5, 4.0) + 0.1;
    double sup_m2 = 0.0;
    for (int i = 0; i <= 800; ++i) {
        double t = t0 - radius + 2.0 * radius * i / 800.0;
        sup_m2 = std::max(sup_m2, std::abs(derivative(act, m + 2, t)));
    }
    sup_m2 = std::max(sup_m2, 1e-12);
    double h0 = std::sqrt(eps * factorial(m + 2) * std::abs(phi_m) /
                          (std::pow(mq, m + 2) * sup_m2));
    h0 = std::min({h0, 0.3 / mq, 0.5});

    auto make_net = [&](double h) {
        Layer l1;
        l1.rows = 1 << m;
        l1.cols = d;
        l1.weight.assign(static_cast<size_t>(l1.rows) * d, 0.0);
        l1.bias.assign(l1.rows, t0);
        Layer l2;
        l2.rows = 1;
        l2.cols = l1.rows;
        l2.weight.assign(l1.rows, 0.0);
        l2.bias = {0.0};
        double scale = 1.0 / (std::ldexp(std::pow(h, m), m) * phi_m);
        for (int mask = 0; mask < l1.rows; ++mask) {
            int sign = 1;
            for (int slot = 0; slot < m; ++slot) {
                double nu = (mask >> slot) & 1 ? 1.0 : -1.0;
                if (nu < 0) sign = -sign;
                l1.w(mask, slot_coord[slot]) += h * nu;
            }
            l2.weight[mask] = sign * scale;
        }
        return Network{act, {l1, l2}};
    };

    // Exact-monomial oracle on the certification grid.
    int n = cert_points_per_axis(d);
    Eigen::MatrixXd pts = detail::tensor_grid(d, -q, q, n);
    Eigen::VectorXd truth(pts.cols());
    for (long c = 0; c < pts.cols(); ++c) {
        double v = 1.0;
        for (int l = 0; l < d; ++l) {
            for (int p = 0; p < alpha.alpha[l]; ++p) v *= pts(l, c);
        }
        truth(c) = v;
    }

    double best_err = std::numeric_limits<double>::infinity();
    double best_h = h0;
    Network best_net{act, {}};
    for (double factor : {1.0, 0.5, 2.0, 0.25, 4.0, 0.125, 8.0, 0.0625}) {
        double h = h0 * factor;
        if (!(h > 0.0 && h < 1.0)) continue;
        Network net = make_net(h);
        if (norms(net).linf > kWeightOverflow) continue;
        Eigen::MatrixXd out = evaluate_batch(net, pts);
        double err = (out.transpose().col(0) - truth).cwiseAbs().maxCoeff();
        if (err < best_err) {
            best_err = err;
            best_h = h;
            best_net = net;
        }
        if (err <= eps * 0.9) break;
    }
    if (best_err > eps) {
        char msg[128];
        std::snprintf(msg, sizeof msg,
                      "no feasible step size; best grid error %.3g > eps %.3g "
                      "(order %d, radius %.3g)",
                      best_err, eps, m, q);
        throw BudgetInfeasible("monomial", msg);
    }
    if (budget != nullptr) {
        budget->record("monomial.h", best_h);
        budget->record("monomial.grid_error", best_err);
        budget->record("monomial.t0", t0);
    }
    return best_net;
}

Network build_identity(const Activation& act, const ReferencePoint& ref,
                       double q_radius, double eps, int l_target,
                       ApproxBudget* budget) {
    if (l_target < 2) throw PreconditionFailed("identity depth must be >= 2");
    ReferencePoint r = detail::ensure_ref(act, ref, 1);
    int blocks = l_target - 1;
    double eps_blk = eps / blocks;
    MultiIndex one{{1}};
    for (int attempt = 0; attempt < 4; ++attempt) {
        Network net = build_monomial(act, r, one, q_radius + 1.0, eps_blk, budget);
        for (int b = 1; b < blocks; ++b) {
            net = chain(net, build_monomial(act, r, one, q_radius + 1.0, eps_blk, budget));
        }
        double err = 0.0;
        Eigen::MatrixXd pts = detail::tensor_grid(1, -q_radius, q_radius, 2001);
        Eigen::MatrixXd out = evaluate_batch(net, pts);
        err = (out.row(0) - pts.row(0)).cwiseAbs().maxCoeff();
        if (err <= eps) {
            if (budget != nullptr) budget->record("identity.grid_error", err);
            return net;
        }
        eps_blk *= 0.5;
    }
    throw BudgetInfeasible("identity", "stacked blocks missed the target accuracy");
}

Network build_indicator_1d(const Activation& act, double a, double b,
                           double delta, double eps) {
    if (!(a < b)) throw PreconditionFailed("indicator needs a < b");
    if (!(delta > 0.0 && delta < (b - a) / 3.0)) {
        throw PreconditionFailed("indicator delta range");
    }
    if (!(eps > 0.0 && eps < 1.0)) throw PreconditionFailed("indicator eps in (0,1)");
    double c = act.tail_constant;
    Network net{act, {}};
    if (act.tail_class == TailClass::HeavisideLike) {
        double beta = 4.0 * c / (delta * eps);
        Layer l1{2, 1,
                 {beta, beta},
                 {-beta * (a + delta / 2.0), -beta * (b - delta / 2.0)}};
        Layer l2{1, 2, {1.0, -1.0}, {0.0}};
        net.layers = {l1, l2};
    } else {
        // Smooth-ramp trapezoid: up on [a, a+delta], down on [b-delta, b].
        double c2 = act.tail_class == TailClass::ExactReLU ? 1e-30 : c;
        double beta = act.tail_class == TailClass::ExactReLU
                          ? 2.0 / delta
                          : 4.0 * c2 / (eps * delta);
        double s = 1.0 / (beta * delta);
        Layer l1{4, 1,
                 {beta, beta, beta, beta},
                 {-beta * a, -beta * (a + delta), -beta * (b - delta), -beta * b}};
        Layer l2{1, 4, {s, -s, -s, s}, {0.0}};
        net.layers = {l1, l2};
    }
    check_norm_gate(net, "indicator_1d");
    return net;
}

namespace detail {

Network cell_indicator_stage(const Activation& act, const ReferencePoint& ref,
                             int d, int k_cells, double origin, double cell_w,
                             double delta, double eps) {
    double hf = heaviside_factor(act);
    double eps1 = eps / (std::ldexp(1.0, d + 1) * std::pow(hf, d));
    double eps2 = eps / 2.0;
    ReferencePoint r = detail::ensure_ref(act, ref, std::max(d, 1));

    // Stage 1: d*K univariate cell indicators, output index l*K + (i-1).
    std::vector<Network> axis_nets;
    for (int l = 0; l < d; ++l) {
        Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(1, d);
        sel(0, l) = 1.0;
        for (int i = 0; i < k_cells; ++i) {
            double lo = origin + i * cell_w;
            Network ind = build_indicator_1d(act, lo, lo + cell_w, delta, eps1);
            axis_nets.push_back(premap(ind, sel, Eigen::VectorXd::Zero(1)));
        }
    }
    Network stage1 = stack(axis_nets);

    // Stage 2: one d-ary product per cell multi-index.
    std::vector<std::vector<int>> selections;
    for (const auto& idx : index_list(k_cells, d)) {
        std::vector<int> sel(d);
        for (int l = 0; l < d; ++l) sel[l] = l * k_cells + (idx[l] - 1);
        selections.push_back(sel);
    }
    Network stage2 =
        detail::product_stage(act, r, d * k_cells, selections, indicator_bound(act), eps2);
    Network net = chain(stage1, stage2);
    check_norm_gate(net, "cell_indicators");
    return net;
}

}  // namespace detail

Network build_coarse_indicators(const Activation& act, const ReferencePoint& ref,
                                const GridSpec& grid, double eps) {
    grid.validate();
    return detail::cell_indicator_stage(act, ref, grid.d, grid.K, 0.0, 1.0 / grid.K,
                                 grid.delta, eps);
}

Network build_coarse_pwc(const Activation& act, const ReferencePoint& ref,
                         const PiecewiseConstantSpec& spec, double eps) {
    const GridSpec& grid = spec.grid;
    grid.validate();
    long kd = 1;
    for (int l = 0; l < grid.d; ++l) kd *= grid.K;
    double c_max = std::max(spec.c_max, 1e-9);
    double eps1 = eps / (c_max * static_cast<double>(kd));
    Network ind = build_coarse_indicators(act, ref, grid, eps1);

    // Output j reads sum_i c_{i,j} [ind]_i; both i and j run row-major.
    auto coarse_list = detail::index_list(grid.K, grid.d);
    Eigen::MatrixXd mix(kd, kd);
    for (long jj = 0; jj < kd; ++jj) {
        for (long ii = 0; ii < kd; ++ii) {
            mix(jj, ii) = spec.at(coarse_list[ii], coarse_list[jj]);
        }
    }
    return postmap(mix, Eigen::VectorXd::Zero(kd), ind);
}

Network build_relative_position(const Activation& act, const ReferencePoint& ref,
                                const GridSpec& grid, double eps) {
    grid.validate();
    ReferencePoint r = detail::ensure_ref(act, ref, 1);
    double eps_id = eps / 2.0;
    double eps_ind = eps / (2.0 * grid.K);
    MultiIndex one{{1}};
    std::vector<Network> axes;
    for (int l = 0; l < grid.d; ++l) {
        Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(1, grid.d);
        sel(0, l) = 1.0;
        std::vector<Network> parts;
        parts.push_back(premap(build_monomial(act, r, one, 1.0, eps_id), sel,
                               Eigen::VectorXd::Zero(1)));
        for (int i = 0; i < grid.K; ++i) {
            double lo = static_cast<double>(i) / grid.K;
            Network ind = build_indicator_1d(act, lo, lo + 1.0 / grid.K, grid.delta,
                                             eps_ind);
            parts.push_back(premap(ind, sel, Eigen::VectorXd::Zero(1)));
        }
        Network bundle = stack(parts);
        Eigen::MatrixXd mix(1, grid.K + 1);
        mix(0, 0) = 1.0;
        for (int i = 0; i < grid.K; ++i) {
            mix(0, i + 1) = -static_cast<double>(i) / grid.K;
        }
        axes.push_back(postmap(mix, Eigen::VectorXd::Zero(1), bundle));
    }
    return stack(axes);
}

Network build_refined_indicators(const Activation& act, const ReferencePoint& ref,
                                 const GridSpec& grid, double eps) {
    grid.validate();
    long kd = 1;
    for (int l = 0; l < grid.d; ++l) kd *= grid.K;
    Network pos = build_relative_position(act, ref, grid, grid.delta / 2.0);
    double k2 = static_cast<double>(grid.K) * grid.K;
    // Per-output target eps / K^d on refined interiors.
    Network cells = detail::cell_indicator_stage(act, ref, grid.d, grid.K, 0.0, 1.0 / k2,
                                          grid.delta / 2.0, eps / static_cast<double>(kd));
    Network net = chain(pos, cells);
    check_norm_gate(net, "refined_indicators");
    return net;
}

Network build_refined_pwc(const Activation& act, const ReferencePoint& ref,
                          const PiecewiseConstantSpec& spec, double eps,
                          ApproxBudget* budget) {
    const GridSpec& grid = spec.grid;
    grid.validate();
    ReferencePoint r = detail::ensure_ref(act, ref, 2);
    long kd = 1;
    for (int l = 0; l < grid.d; ++l) kd *= grid.K;
    double hf = heaviside_factor(act);
    double c_max = std::max(spec.c_max, 1e-9);
    double eps1 = eps / (2.0 * (c_max + std::ldexp(1.0, grid.d + 3) * std::pow(hf, grid.d)));
    double eps2 = eps / (2.0 * static_cast<double>(kd));

    Network coarse = build_coarse_pwc(act, ref, spec, eps1);
    double id_q = detail::realized_bound(coarse, 0.0, 1.0,
                                         grid.d == 1 ? 801 : 41) * 1.25 + 0.5;
    Network with_id =
        chain(coarse, detail::identity_stage(act, r, static_cast<int>(kd), id_q, eps1));
    Network inds = build_refined_indicators(act, ref, grid, eps / 2.0);

    Network front = stack({with_id, inds});
    double ind_q = indicator_bound(act) + 0.5;
    std::vector<std::vector<int>> selections;
    for (long j = 0; j < kd; ++j) {
        selections.push_back({static_cast<int>(j), static_cast<int>(kd + j)});
    }
    Network products = detail::product_stage(act, r, static_cast<int>(2 * kd), selections,
                                             std::max(id_q, ind_q), eps2);
    Eigen::MatrixXd ones(1, kd);
    ones.setOnes();
    Network net = postmap(ones, Eigen::VectorXd::Zero(1), chain(front, products));
    check_norm_gate(net, "refined_pwc");
    if (budget != nullptr) {
        budget->record("refined_pwc.eps1", eps1);
        budget->record("refined_pwc.eps2", eps2);
        budget->record("refined_pwc.id_q", id_q);
    }
    return net;
}

Network build_piecewise_monomial(const Activation& act, const ReferencePoint& ref,
                                 const PiecewiseConstantSpec& spec,
                                 const MultiIndex& alpha, double eps,
                                 ApproxBudget* budget) {
    const GridSpec& grid = spec.grid;
    grid.validate();
    if (alpha.dim() != grid.d) throw ShapeMismatch("alpha dim vs grid d");
    if (alpha.order() < 1) throw PreconditionFailed("piecewise monomial needs |alpha| >= 1");
    ReferencePoint r = detail::ensure_ref(act, ref, alpha.order() + 1);
    double c_max = std::max(spec.c_max, 1.0);
    double eps1 = eps / (3.0 + 5.0 * c_max);

    Network mono = build_monomial(act, r, alpha, 1.0, eps1, budget);
    Network nu = build_identity(act, r, 1.6, eps1, 4, budget);
    Network psi2 = chain(mono, nu);  // depth 5
    Network psi3 = build_refined_pwc(act, ref, spec, eps1, budget);
    double q3 = detail::realized_bound(psi3, 0.0, 1.0, grid.d == 1 ? 801 : 41) * 1.25 + 0.5;

    Network front = stack({psi2, psi3});
    Network prod = detail::product_stage(act, r, 2, {{0, 1}}, std::max(2.0, q3), eps1);
    Network net = chain(front, prod);
    check_norm_gate(net, "piecewise_monomial");
    if (budget != nullptr) budget->record("piecewise_monomial.eps1", eps1);
    return net;
}

PiecewisePolynomialSpec local_polynomial_coeffs(const TargetFunction& f, double s,
                                                const GridSpec& grid) {
    grid.validate();
    if (!f.partial) throw DerivativeOracleMissing("target supplies no partials");
    PiecewisePolynomialSpec out;
    out.grid = grid;
    int degree = static_cast<int>(std::ceil(s)) - 1;
    out.taylor_degree = degree;

    // All alpha with |alpha| <= degree, graded row-major.
    std::vector<MultiIndex> alphas;
    std::vector<int> cur(grid.d, 0);
    std::function<void(int, int)> rec = [&](int axis, int left) {
        if (axis == grid.d) {
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
    out.alphas = alphas;

    PiecewiseConstantSpec shape;
    shape.grid = grid;
    long cells = shape.cell_count();
    out.coeffs.assign(cells, std::vector<double>(alphas.size(), 0.0));

    auto coarse_list = detail::index_list(grid.K, grid.d);
    auto refined_list = detail::index_list(grid.K, grid.d);
    double fine_w = 1.0 / (static_cast<double>(grid.K) * grid.K);
    double worst = 0.0;

    for (const auto& ci : coarse_list) {
        for (const auto& rj : refined_list) {
            long cell = shape.flat_index(ci, rj);
            std::vector<double> corner_pt = refined_corner(grid, ci, rj);
            std::vector<double> center(grid.d);
            for (int l = 0; l < grid.d; ++l) center[l] = corner_pt[l] + fine_w / 2.0;

            // Taylor term for beta, expanded into monomials via binomials.
            for (const auto& beta : alphas) {
                double dcoef = f.partial(beta, center);
                double fact = 1.0;
                for (int l = 0; l < grid.d; ++l) fact *= factorial(beta.alpha[l]);
                double base = dcoef / fact;
                // Expand prod (x_l - c_l)^{beta_l}.
                std::function<void(int, double, std::vector<int>&)> expand =
                    [&](int axis, double coef, std::vector<int>& gamma) {
                        if (axis == grid.d) {
                            for (size_t a = 0; a < alphas.size(); ++a) {
                                if (alphas[a].alpha == gamma) {
                                    out.coeffs[cell][a] += coef;
                                    return;
                                }
                            }
                            throw Error("monomial basis lookup failed");
                        }
                        int b = beta.alpha[axis];
                        for (int g = b; g >= 0; --g) {
                            // C(b, g) computed incrementally from g = b down.
                            double c_bg = 1.0;
                            for (int t = 0; t < b - g; ++t) {
                                c_bg = c_bg * (b - t) / (t + 1);
                            }
                            gamma[axis] = g;
                            expand(axis + 1,
                                   coef * c_bg * std::pow(-center[axis], b - g), gamma);
                        }
                        gamma[axis] = 0;
                    };
                std::vector<int> gamma(grid.d, 0);
                expand(0, base, gamma);
            }

            // Certify the per-cell sup error on a small probe grid.
            int probes = grid.d == 1 ? 9 : 5;
            std::vector<double> x(grid.d);
            std::vector<int> g(grid.d, 0);
            bool done = false;
            while (!done) {
                for (int l = 0; l < grid.d; ++l) {
                    x[l] = corner_pt[l] + fine_w * g[l] / (probes - 1);
                }
                double px = 0.0;
                for (size_t a = 0; a < alphas.size(); ++a) {
                    double mono = 1.0;
                    for (int l = 0; l < grid.d; ++l) {
                        for (int p = 0; p < alphas[a].alpha[l]; ++p) mono *= x[l];
                    }
                    px += out.coeffs[cell][a] * mono;
                }
                worst = std::max(worst, std::abs(px - f.value(x)));
                int axis = grid.d - 1;
                while (axis >= 0) {
                    if (++g[axis] < probes) break;
                    g[axis] = 0;
                    --axis;
                }
                if (axis < 0) done = true;
            }
        }
    }
    for (const auto& row : out.coeffs) {
        for (double v : row) out.coef_max = std::max(out.coef_max, std::abs(v));
    }
    out.certified_cell_sup_error = worst;
    return out;
}

L2Result build_l2_approximator(const Activation& act, const ReferencePoint& ref,
                               const TargetFunction& f, double s, double eps,
                               const L2Options& opts) {
    if (!(eps > 0.0 && eps < 1.0)) throw PreconditionFailed("l2 eps in (0,1)");
    int d = f.d;

    // Calibrate C_cal from a trial partition when not supplied.
    double c_cal = opts.C_cal;
    if (c_cal <= 0.0) {
        GridSpec trial{d, 2, 1e-4};
        PiecewisePolynomialSpec probe = local_polynomial_coeffs(f, s, trial);
        double c1_est = probe.certified_cell_sup_error * std::pow(2.0, 2.0 * s);
        c_cal = std::max(2.0 * c1_est, 1e-6);
    }

    // Budget split: Taylor remainder eps/4, interior networks eps/2, bands
    // eps/4, so the nominal contributions sum to eps.
    int k = static_cast<int>(
        std::ceil(std::pow(c_cal / (eps / 4.0), 1.0 / (2.0 * s))));
    k = std::max(k, 1);

    ApproxBudget budget;
    budget.eps = eps;
    budget.s = s;
    budget.d = d;
    budget.K = k;
    budget.C_cal = c_cal;

    double eps_interior = eps / 2.0;

    for (int attempt = 0; attempt <= opts.max_retries; ++attempt) {
        // Band width calibrated so the band's L2 contribution stays below
        // eps/2 for outputs bounded near the coefficient scale.
        GridSpec pre{d, k, 1e-9};
        PiecewisePolynomialSpec poly = local_polynomial_coeffs(f, s, pre);
        double n_alpha = static_cast<double>(poly.alphas.size());
        double b_est = 1.5 * std::max(1.0, poly.coef_max * n_alpha) + f.sobolev_bound;
        double delta = (eps / 4.0) * (eps / 4.0) /
                       (b_est * b_est * 2.0 * d * static_cast<double>(k) * k);
        delta = std::min(delta, 0.9 / (12.0 * k * k));
        delta /= std::pow(2.0, attempt);
        if (delta < 1e-12) break;
        GridSpec grid{d, k, delta};
        budget.delta = delta;
        poly.grid = grid;

        double eps_a = eps_interior / n_alpha / std::pow(2.0, attempt);
        budget.record("l2.eps_per_alpha", eps_a);
        budget.record("l2.delta", delta);

        std::vector<Network> parts;
        try {
            for (size_t a = 0; a < poly.alphas.size(); ++a) {
                PiecewiseConstantSpec spec;
                spec.grid = grid;
                spec.coeffs.resize(poly.coeffs.size());
                for (size_t cellidx = 0; cellidx < poly.coeffs.size(); ++cellidx) {
                    spec.coeffs[cellidx] = poly.coeffs[cellidx][a];
                }
                spec.c_max = 0.0;
                for (double v : spec.coeffs) spec.c_max = std::max(spec.c_max, std::abs(v));
                if (poly.alphas[a].order() == 0) {
                    ReferencePoint r1 = detail::ensure_ref(act, ref, 1);
                    Network pwc = build_refined_pwc(act, ref, spec, eps_a, &budget);
                    double qid = std::max(spec.c_max * 2.0, 1.0);
                    parts.push_back(
                        chain(pwc, build_identity(act, r1, qid, eps_a, 2, &budget)));
                } else {
                    parts.push_back(build_piecewise_monomial(act, ref, spec,
                                                             poly.alphas[a], eps_a,
                                                             &budget));
                }
            }
        } catch (const BudgetInfeasible&) {
            if (attempt == opts.max_retries) throw;
            continue;
        }

        Network net = parts.size() == 1
                          ? parts[0]
                          : postmap(Eigen::MatrixXd::Ones(1, parts.size()),
                                    Eigen::VectorXd::Zero(1), stack(parts));

        // Monte Carlo L2 certification.
        Rng rng = Rng::keyed(opts.mc_seed, 0x4c32u);
        long n = opts.mc_samples;
        long chunk = 8192;
        double sq_sum = 0.0, quad_sum = 0.0;
        for (long start = 0; start < n; start += chunk) {
            long cnt = std::min(chunk, n - start);
            Eigen::MatrixXd pts(d, cnt);
            for (long i = 0; i < cnt; ++i) {
                for (int l = 0; l < d; ++l) pts(l, i) = rng.uniform();
            }
            Eigen::MatrixXd out = evaluate_batch(net, pts);
            std::vector<double> x(d);
            for (long i = 0; i < cnt; ++i) {
                for (int l = 0; l < d; ++l) x[l] = pts(l, i);
                double dev = out(0, i) - f.value(x);
                sq_sum += dev * dev;
                quad_sum += dev * dev * dev * dev;
            }
        }
        double mean_sq = sq_sum / n;
        double err = std::sqrt(mean_sq);
        double var_sq = std::max(quad_sum / n - mean_sq * mean_sq, 0.0);
        double se = err > 0.0 ? std::sqrt(var_sq / n) / (2.0 * err) : 0.0;
        if (err <= eps) {
            budget.record("l2.mc_error", err);
            return L2Result{std::move(net), std::move(budget), err, se};
        }
        if (attempt == opts.max_retries) {
            throw BudgetInfeasible("l2_assembly", "Monte Carlo error " +
                                                      std::to_string(err) +
                                                      " exceeds eps " +
                                                      std::to_string(eps));
        }
    }
    throw BudgetInfeasible("l2_assembly", "band width underflow");
}

}  // namespace apx
