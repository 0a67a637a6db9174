#pragma once

#include <stdexcept>
#include <string>

namespace apx {

// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg) : Error("shape mismatch: " + msg) {}
};

struct NonFiniteIntermediate : Error {
    explicit NonFiniteIntermediate(const std::string& msg)
        : Error("non-finite intermediate: " + msg) {}
};

struct OrderTooHigh : Error {
    explicit OrderTooHigh(const std::string& msg) : Error("derivative order too high: " + msg) {}
};

struct CertificationFailed : Error {
    double witness;
    CertificationFailed(const std::string& msg, double t)
        : Error("certification failed: " + msg + " (witness t=" + std::to_string(t) + ")"),
          witness(t) {}
};

struct NoReferenceFound : Error {
    explicit NoReferenceFound(const std::string& msg) : Error("no reference point: " + msg) {}
};

struct OutOfDomain : Error {
    explicit OutOfDomain(const std::string& msg) : Error("out of domain: " + msg) {}
};

struct IndexOutOfRange : Error {
    explicit IndexOutOfRange(const std::string& msg) : Error("index out of range: " + msg) {}
};

struct BudgetInfeasible : Error {
    std::string stage;
    BudgetInfeasible(const std::string& stage_, const std::string& msg)
        : Error("budget infeasible in " + stage_ + ": " + msg), stage(stage_) {}
};

struct PreconditionFailed : Error {
    explicit PreconditionFailed(const std::string& msg) : Error("precondition failed: " + msg) {}
};

struct DegenerateInput : Error {
    explicit DegenerateInput(const std::string& msg) : Error("degenerate input: " + msg) {}
};

struct EmptyRegion : Error {
    explicit EmptyRegion(const std::string& msg) : Error("empty region: " + msg) {}
};

struct ActivationNotReLU : Error {
    explicit ActivationNotReLU(const std::string& msg) : Error("activation is not relu: " + msg) {}
};

struct DerivativeOracleMissing : Error {
    explicit DerivativeOracleMissing(const std::string& msg)
        : Error("derivative oracle missing: " + msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct DivergedLoss : Error {
    explicit DivergedLoss(const std::string& msg) : Error("diverged loss: " + msg) {}
};

struct AllCellsDiverged : Error {
    explicit AllCellsDiverged(const std::string& msg) : Error("all cells diverged: " + msg) {}
};

}  // namespace apx
