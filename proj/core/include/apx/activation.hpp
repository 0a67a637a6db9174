#pragma once

#include <string>
#include <vector>

#include "apx/errors.hpp"

namespace apx {

enum class ActKind { Sigmoid, TanhShifted, SiLU, GELU, ReLU };

// Tail behaviour classes: smooth step (deviation from the Heaviside function
// decays like C1/|t|) or smooth ramp (deviation from relu bounded by C2).
enum class TailClass { HeavisideLike, ReLULike, ExactReLU };

// Maximum derivative order the closed-form engine supports.
inline constexpr int kMaxDerivOrder = 16;

struct Activation {
    ActKind kind;
    TailClass tail_class;
    double lipschitz;       // certified upper bound on sup |phi'|
    double tail_constant;   // C1 (HeavisideLike) or C2 (ReLULike)

    static Activation make(ActKind kind);
    static Activation from_name(const std::string& name);
    std::string name() const;
    bool smooth() const { return kind != ActKind::ReLU; }
};

struct ReferencePoint {
    double t0 = 0.0;
    int max_order = 0;
    std::vector<double> derivative_values;  // phi^(0)(t0) .. phi^(max_order)(t0)
    double min_abs_derivative = 0.0;        // min over orders 1..max_order
};

struct TailReport {
    TailClass tail_class;
    double max_observed = 0.0;     // max of the class-specific deviation functional
    double implied_constant = 0.0; // smallest constant the grid would certify
    double witness = 0.0;          // argmax t
    bool certified = false;
};

struct ProbeGrid {
    double lo = -50.0;
    double hi = 50.0;
    double step = 0.01;
};

double eval(const Activation& act, double t);

// Exact m-th derivative via closed-form recurrences (sigmoid polynomials,
// Leibniz for t*sigma / t*Phi, Hermite polynomials for Gaussian derivatives).
double derivative(const Activation& act, int m, double t);

// Finite-grid certification of the tail-class inequality; throws
// CertificationFailed if the activation's tail_constant is violated.
TailReport verify_tail_class(const Activation& act, const ProbeGrid& grid = {});

// Deterministic grid search on [-3,3] (step 0.01) for a point where the first
// m_max derivatives are all bounded away from zero.
ReferencePoint find_reference_point(const Activation& act, int m_max);

}  // namespace apx
