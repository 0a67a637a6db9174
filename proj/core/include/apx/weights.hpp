#pragma once

#include <vector>

#include "apx/activation.hpp"
#include "apx/construct.hpp"
#include "apx/network.hpp"
#include "apx/partition.hpp"

namespace apx {

// Parameters of the partition-of-unity weight family. beta/beta_tilde <= 0
// means "derive from the accuracy floor at build/eval time".
struct WeightParams {
    GridSpec grid;           // d, K, delta with delta < 1/(12 K^2)
    Activation act;
    double beta = 0.0;       // basis slope
    double beta_tilde = 0.0; // quasi-indicator slope
};

using ShiftIndex = std::vector<int>;  // entries in {1,2}

// Closed-form reference evaluators.
double weight_eval(const WeightParams& params, int i, double x);
double weight_eval(const WeightParams& params, const ShiftIndex& v,
                   const std::vector<double>& x);
double quasi_indicator_eval(const WeightParams& params, int i, double x);

// Depth-3 width-O(K) net matching weight_eval(i, .) off the coarse bands.
Network build_weight_band(const Activation& act, const ReferencePoint& ref,
                          const WeightParams& params, int i, double eps);

// Depth-4 net matching weight_eval(i, .) uniformly on [0,1].
Network build_weight_global(const Activation& act, const ReferencePoint& ref,
                            const WeightParams& params, int i, double eps);

// Depth-5 net matching the d-variate weight of shift v uniformly on [0,1]^d.
Network build_weight_multi(const Activation& act, const ReferencePoint& ref,
                           const WeightParams& params, const ShiftIndex& v,
                           double eps);

struct LinfOptions {
    double C_cal = 0.0;  // 0: calibrate from the target's Taylor remainder
    int max_retries = 2;
};

struct LinfResult {
    Network net;
    ApproxBudget budget;
    double sup_error = 0.0;  // certified full-domain grid sup error
};

// Depth-7 uniform approximator on [0,1]^d assembled from 2^d shifted
// piecewise-polynomial nets and their matching weight nets.
LinfResult build_linf_approximator(const Activation& act, const ReferencePoint& ref,
                                   const TargetFunction& f, double s, double eps,
                                   const LinfOptions& opts = {});

namespace detail {

// Per-axis coarse decomposition used by the shifted approximators: cell k
// covers [corner[k], corner[k] + 1/K) clipped to [0,1].
struct AxisDecomp {
    std::vector<double> corner;
};

AxisDecomp axis_decomp(int K, int shift);

// Depth-6 sup-norm approximator on the shifted partition of shift v,
// accurate on the shifted interior region.
Network build_shifted_approximator(const Activation& act, const ReferencePoint& ref,
                                   const TargetFunction& f, double s, int K,
                                   double delta, const ShiftIndex& v, double eps,
                                   ApproxBudget* budget = nullptr);

}  // namespace detail

}  // namespace apx
