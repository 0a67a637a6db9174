#include "apx/activation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <vector>

namespace apx {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

double sigma(double t) {
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    double e = std::exp(t);
    return e / (1.0 + e);
}

double norm_cdf(double t) { return 0.5 * std::erfc(-t * kInvSqrt2); }

double norm_pdf(double t) { return kInvSqrt2Pi * std::exp(-0.5 * t * t); }

// Coefficients of sigma^(m) expanded in powers of sigma:
//   sigma^(m)(t) = sum_{k=1}^{m+1} c[m][k] * sigma(t)^k,
// driven by d/dt sigma^k = k (sigma^k - sigma^{k+1}).
const std::vector<std::vector<double>>& sigma_poly_table() {
    static std::vector<std::vector<double>> table;
    static std::once_flag once;
    std::call_once(once, [] {
        table.resize(kMaxDerivOrder + 1);
        table[0] = {0.0, 1.0};  // index k, k=0 unused
        for (int m = 1; m <= kMaxDerivOrder; ++m) {
            const auto& prev = table[m - 1];
            std::vector<double> cur(m + 2, 0.0);
            for (int k = 1; k < static_cast<int>(prev.size()); ++k) {
                cur[k] += k * prev[k];
                cur[k + 1] -= k * prev[k];
            }
            table[m] = std::move(cur);
        }
    });
    return table;
}

// m-th derivative of the sigmoid.
double sigma_deriv(int m, double t) {
    double s = sigma(t);
    const auto& coef = sigma_poly_table()[m];
    // Horner in s starting from the top power.
    double acc = 0.0;
    for (int k = static_cast<int>(coef.size()) - 1; k >= 1; --k) {
        acc = acc * s + coef[k];
    }
    return acc * s;
}

// k-th derivative of the standard normal cdf, k >= 1:
//   Phi^(k)(t) = pdf(t) * (-1)^{k-1} He_{k-1}(t)
// with probabilists' Hermite polynomials He_0 = 1, He_1 = t,
// He_{n+1} = t He_n - n He_{n-1}.
double norm_cdf_deriv(int k, double t) {
    if (k == 0) return norm_cdf(t);
    double h_prev = 1.0;  // He_0
    double h_cur = t;     // He_1
    int n = k - 1;        // want He_n
    double h;
    if (n == 0) {
        h = h_prev;
    } else if (n == 1) {
        h = h_cur;
    } else {
        for (int i = 1; i < n; ++i) {
            double h_next = t * h_cur - i * h_prev;
            h_prev = h_cur;
            h_cur = h_next;
        }
        h = h_cur;
    }
    double sign = (k % 2 == 1) ? 1.0 : -1.0;
    return sign * norm_pdf(t) * h;
}

}  // namespace

Activation Activation::make(ActKind kind) {
    switch (kind) {
        case ActKind::Sigmoid:
            return {kind, TailClass::HeavisideLike, 2.0, 1.0};
        case ActKind::TanhShifted:
            return {kind, TailClass::HeavisideLike, 2.0, 1.0};
        case ActKind::SiLU:
            return {kind, TailClass::ReLULike, 2.0, 1.0};
        case ActKind::GELU:
            return {kind, TailClass::ReLULike, 2.0, kInvSqrt2Pi};
        case ActKind::ReLU:
            return {kind, TailClass::ExactReLU, 1.0, 0.0};
    }
    throw Error("unknown activation kind");
}

Activation Activation::from_name(const std::string& name) {
    if (name == "sigmoid") return make(ActKind::Sigmoid);
    if (name == "tanh_shifted") return make(ActKind::TanhShifted);
    if (name == "silu") return make(ActKind::SiLU);
    if (name == "gelu") return make(ActKind::GELU);
    if (name == "relu") return make(ActKind::ReLU);
    throw ConfigError("unknown activation name: " + name);
}

std::string Activation::name() const {
    switch (kind) {
        case ActKind::Sigmoid: return "sigmoid";
        case ActKind::TanhShifted: return "tanh_shifted";
        case ActKind::SiLU: return "silu";
        case ActKind::GELU: return "gelu";
        case ActKind::ReLU: return "relu";
    }
    return "?";
}

double eval(const Activation& act, double t) {
    switch (act.kind) {
        case ActKind::Sigmoid: return sigma(t);
        case ActKind::TanhShifted: return 0.5 * (1.0 + std::tanh(t));
        case ActKind::SiLU: return t * sigma(t);
        case ActKind::GELU: return t * norm_cdf(t);
        case ActKind::ReLU: return t > 0.0 ? t : 0.0;
    }
    return 0.0;
}

double derivative(const Activation& act, int m, double t) {
    if (m < 0) throw PreconditionFailed("derivative order must be >= 0");
    if (m == 0) return eval(act, t);
    if (m > kMaxDerivOrder) {
        throw OrderTooHigh("order " + std::to_string(m) + " > " +
                           std::to_string(kMaxDerivOrder));
    }
    switch (act.kind) {
        case ActKind::Sigmoid:
            return sigma_deriv(m, t);
        case ActKind::TanhShifted: {
            // (1/2)(1+tanh t) = sigma(2t)
            return std::ldexp(sigma_deriv(m, 2.0 * t), m);
        }
        case ActKind::SiLU:
            // Leibniz on t * sigma(t)
            return t * sigma_deriv(m, t) + m * (m == 1 ? sigma(t) : sigma_deriv(m - 1, t));
        case ActKind::GELU:
            // Leibniz on t * Phi(t)
            return t * norm_cdf_deriv(m, t) + m * norm_cdf_deriv(m - 1, t);
        case ActKind::ReLU:
            if (m == 1) return t > 0.0 ? 1.0 : 0.0;  // subgradient 0 at the kink
            return 0.0;
    }
    return 0.0;
}

TailReport verify_tail_class(const Activation& act, const ProbeGrid& grid) {
    if (act.tail_class == TailClass::ExactReLU) {
        return {TailClass::ExactReLU, 0.0, 0.0, 0.0, true};
    }
    TailReport report;
    report.tail_class = act.tail_class;
    long n = std::lround((grid.hi - grid.lo) / grid.step);
    for (long i = 0; i <= n; ++i) {
        double t = grid.lo + grid.step * static_cast<double>(i);
        double dev;
        if (act.tail_class == TailClass::HeavisideLike) {
            double h = t >= 0.0 ? 1.0 : 0.0;
            dev = std::abs(eval(act, t) - h) * std::max(1.0, std::abs(t));
        } else {
            double r = t > 0.0 ? t : 0.0;
            dev = std::abs(eval(act, t) - r);
        }
        if (dev > report.max_observed) {
            report.max_observed = dev;
            report.witness = t;
        }
    }
    report.implied_constant = report.max_observed;
    report.certified = report.max_observed <= act.tail_constant + 1e-12;
    if (!report.certified) {
        throw CertificationFailed(
            act.name() + " tail deviation " + std::to_string(report.max_observed) +
                " exceeds constant " + std::to_string(act.tail_constant),
            report.witness);
    }
    return report;
}

ReferencePoint find_reference_point(const Activation& act, int m_max) {
    if (!act.smooth()) throw PreconditionFailed("reference point needs a smooth activation");
    if (m_max < 1 || m_max > kMaxDerivOrder) {
        throw PreconditionFailed("m_max out of range");
    }
    const double lo = -3.0, step = 0.01;
    const int n = 600;
    double best_t = lo;
    double best_score = -1.0;
    for (int i = 0; i <= n; ++i) {
        double t = lo + step * i;
        double score = std::numeric_limits<double>::infinity();
        for (int m = 1; m <= m_max; ++m) {
            score = std::min(score, std::abs(derivative(act, m, t)));
        }
        if (score > best_score) {
            best_score = score;
            best_t = t;
        }
    }
    if (best_score < 1e-10) {
        throw NoReferenceFound(act.name() + " up to order " + std::to_string(m_max));
    }
    ReferencePoint ref;
    ref.t0 = best_t;
    ref.max_order = m_max;
    ref.derivative_values.resize(m_max + 1);
    for (int m = 0; m <= m_max; ++m) {
        ref.derivative_values[m] = derivative(act, m, best_t);
    }
    ref.min_abs_derivative = best_score;
    return ref;
}

}  // namespace apx
