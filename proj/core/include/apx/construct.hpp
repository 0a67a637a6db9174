#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "apx/activation.hpp"
#include "apx/network.hpp"
#include "apx/partition.hpp"

namespace apx {

struct MultiIndex {
    std::vector<int> alpha;

    int dim() const { return static_cast<int>(alpha.size()); }
    int order() const {
        int m = 0;
        for (int a : alpha) m += a;
        return m;
    }
};

// Parameter bundle threading the constructive builders; sub-epsilons, slopes
// and step sizes are recorded by name for audit.
struct ApproxBudget {
    double eps = 0.0;
    double s = 0.0;
    int d = 0;
    int K = 0;
    double delta = 0.0;
    double C_cal = 0.0;
    double C_coef = 0.0;
    std::vector<std::pair<std::string, double>> records;

    void record(const std::string& name, double value) {
        records.emplace_back(name, value);
    }
};

// Coefficients over the K^2d refined cells, stored fine-major per axis:
// flat index uses per-axis fine coordinate (i_l-1)*K + (j_l-1) in [0, K^2).
struct PiecewiseConstantSpec {
    GridSpec grid;
    std::vector<double> coeffs;
    double c_max = 0.0;

    long cell_count() const;
    long flat_index(const std::vector<int>& i, const std::vector<int>& j) const;
    double at(const std::vector<int>& i, const std::vector<int>& j) const;
    double value(const std::vector<double>& x) const;  // reference evaluator

    static PiecewiseConstantSpec constant(const GridSpec& grid, double c);
};

struct PiecewisePolynomialSpec {
    GridSpec grid;
    int taylor_degree = 0;                    // ceil(s) - 1
    std::vector<MultiIndex> alphas;           // all |alpha| <= taylor_degree
    std::vector<std::vector<double>> coeffs;  // [refined cell][alpha]
    double coef_max = 0.0;
    double certified_cell_sup_error = 0.0;

    double value(const std::vector<double>& x) const;  // reference evaluator
};

struct TargetFunction {
    int d = 1;
    std::function<double(const std::vector<double>&)> value;
    std::function<double(const MultiIndex&, const std::vector<double>&)> partial;
    double sobolev_bound = 1.0;
};

// Signed combinatorial sum (1/2^m) sum_nu (prod nu_i) (sum nu_i q_i)^k.
double b_m_sum(const std::vector<double>& q, int k);

// Central-difference monomial block: depth 2, width 2^m, approximates
// x^alpha on [-Q, Q]^d.
Network build_monomial(const Activation& act, const ReferencePoint& ref,
                       const MultiIndex& alpha, double q_radius, double eps,
                       ApproxBudget* budget = nullptr);

// Stacked first-order blocks approximating the identity on [-Q, Q]; depth
// exactly l_target.
Network build_identity(const Activation& act, const ReferencePoint& ref,
                       double q_radius, double eps, int l_target,
                       ApproxBudget* budget = nullptr);

// Depth-2 approximate indicator of [a, b) with exemption bands of width delta
// at both edges.
Network build_indicator_1d(const Activation& act, double a, double b,
                           double delta, double eps);

// Depth 3, K^d outputs approximating the coarse cell indicators.
Network build_coarse_indicators(const Activation& act, const ReferencePoint& ref,
                                const GridSpec& grid, double eps);

// Depth 3, K^d outputs: output j approximates the coarse-cell lookup
// C_j(x) = sum_i c_{i,j} 1_{coarse cell i}(x).
Network build_coarse_pwc(const Activation& act, const ReferencePoint& ref,
                         const PiecewiseConstantSpec& spec, double eps);

// Depth 2, d outputs approximating x - a(x) (position within the coarse cell).
Network build_relative_position(const Activation& act, const ReferencePoint& ref,
                                const GridSpec& grid, double eps);

// Depth 4, K^d outputs; output j approximates the refined-slot indicator with
// per-output accuracy eps / K^d on refined interiors.
Network build_refined_indicators(const Activation& act, const ReferencePoint& ref,
                                 const GridSpec& grid, double eps);

// Depth 5, single output approximating the K^2d-piece piecewise constant with
// width O(K^d).
Network build_refined_pwc(const Activation& act, const ReferencePoint& ref,
                          const PiecewiseConstantSpec& spec, double eps,
                          ApproxBudget* budget = nullptr);

// Depth 6, single output approximating C(x) * x^alpha.
Network build_piecewise_monomial(const Activation& act, const ReferencePoint& ref,
                                 const PiecewiseConstantSpec& spec,
                                 const MultiIndex& alpha, double eps,
                                 ApproxBudget* budget = nullptr);

// Degree-(ceil(s)-1) Taylor coefficients at refined cell centers, re-expanded
// in the monomial basis.
PiecewisePolynomialSpec local_polynomial_coeffs(const TargetFunction& f, double s,
                                                const GridSpec& grid);

struct L2Options {
    double C_cal = 0.0;       // 0: calibrate from the target's Taylor remainder
    long mc_samples = 1000000;
    std::uint64_t mc_seed = 2024;
    int max_retries = 3;
};

struct L2Result {
    Network net;
    ApproxBudget budget;
    double mc_error = 0.0;
    double mc_stderr = 0.0;
};

// Depth-6 L2([0,1]^d) approximator with Monte Carlo certification.
L2Result build_l2_approximator(const Activation& act, const ReferencePoint& ref,
                               const TargetFunction& f, double s, double eps,
                               const L2Options& opts = {});

// Internal helpers shared with the weight-function builders.
namespace detail {

// Row-major enumeration of [K]^d multi-indices (1-based, last axis fastest).
std::vector<std::vector<int>> index_list(int k, int d);

// Uniform tensor grid on [lo,hi]^d, n points per axis, as batch columns.
Eigen::MatrixXd tensor_grid(int d, double lo, double hi, int n);

// K_cells^d outputs (row-major) approximating the indicators of the boxes
// prod [origin+(j-1)w, origin+jw); depth 3.
Network cell_indicator_stage(const Activation& act, const ReferencePoint& ref,
                             int d, int k_cells, double origin, double cell_w,
                             double delta, double eps);

// Stack of depth-2 product blocks; block b multiplies the inputs listed in
// selections[b] (indices into an n_inputs-dim vector).
Network product_stage(const Activation& act, const ReferencePoint& ref,
                      int n_inputs, const std::vector<std::vector<int>>& selections,
                      double q_radius, double eps_each);

// Stack of depth-2 identity blocks, one per input coordinate.
Network identity_stage(const Activation& act, const ReferencePoint& ref,
                       int n_inputs, double q_radius, double eps_each);

// Realized output bound on a dense probe grid of [lo, hi]^d.
double realized_bound(const Network& net, double lo, double hi, int points_per_axis);

ReferencePoint ensure_ref(const Activation& act, const ReferencePoint& ref,
                          int m_needed);

}  // namespace detail

}  // namespace apx
