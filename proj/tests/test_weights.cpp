#include <cmath>
#include <vector>

#include "apx/rng.hpp"
#include "apx/weights.hpp"
#include "doctest.h"

using namespace apx;

namespace {

WeightParams make_params(ActKind kind, int d, int K, double delta, double beta,
                         double beta_tilde = 0.0) {
    WeightParams p;
    p.grid = GridSpec{d, K, delta};
    p.act = Activation::make(kind);
    p.beta = beta;
    p.beta_tilde = beta_tilde;
    return p;
}

}  // namespace

TEST_CASE("weight pair is an exact partition of unity") {
    for (ActKind kind : {ActKind::Sigmoid, ActKind::GELU}) {
        WeightParams p = make_params(kind, 1, 3, 1.0 / 216.0, 5e4);
        Rng rng(91);
        for (int t = 0; t < 1000; ++t) {
            double x = rng.uniform(0.0, 1.0);
            double w1 = weight_eval(p, 1, x);
            double w2 = weight_eval(p, 2, x);
            CHECK(w1 + w2 == doctest::Approx(1.0).epsilon(1e-15));
        }
        // Periodic patch at the right endpoint.
        CHECK(weight_eval(p, 1, 1.0) == doctest::Approx(weight_eval(p, 1, 0.0)));
    }

    // Multivariate: the 2^d shifted products sum to one.
    WeightParams p2 = make_params(ActKind::Sigmoid, 2, 2, 1.0 / 96.0, 4e4);
    Rng rng(17);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
        double total = 0.0;
        for (int v1 = 1; v1 <= 2; ++v1) {
            for (int v2 = 1; v2 <= 2; ++v2) {
                total += weight_eval(p2, ShiftIndex{v1, v2}, x);
            }
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
    }
}

TEST_CASE("weights quasi-vanish on their bands and saturate mid-cell") {
    const double eps = 0.05;
    const int K = 3;
    const double delta = 1.0 / 216.0;
    for (ActKind kind : {ActKind::Sigmoid, ActKind::TanhShifted, ActKind::GELU,
                         ActKind::SiLU}) {
        Activation act = Activation::make(kind);
        double beta = 2.0 * (2.0 / (delta * eps)) * act.tail_constant;
        WeightParams p = make_params(kind, 1, K, delta, beta);
        double k2 = static_cast<double>(K) * K;
        // w1 small near the standard refined lattice, w2 near the offset one.
        for (int k = 0; k <= K * K; ++k) {
            for (double off : {-2.0 * delta, 0.0, 2.0 * delta}) {
                double x1 = k / k2 + off;
                if (x1 >= 0.0 && x1 <= 1.0) CHECK(weight_eval(p, 1, x1) <= eps);
                double x2 = (2.0 * k + 1.0) / (2.0 * k2) + off;
                if (x2 >= 0.0 && x2 <= 1.0) CHECK(weight_eval(p, 2, x2) <= eps);
            }
        }
        // Mid-cell the local weight is essentially one.
        CHECK(weight_eval(p, 1, 1.0 / (2.0 * k2)) > 0.9);
        CHECK(weight_eval(p, 2, 1.0 / k2) > 0.9);
    }
}

TEST_CASE("quasi-indicator separates coarse interiors from faces") {
    const int K = 4;
    const double delta = 1.0 / 64.0;  // < 1/(8K)
    for (ActKind kind : {ActKind::Sigmoid, ActKind::GELU}) {
        Activation act = Activation::make(kind);
        double bt = 4.0 * 8.0 * K * act.tail_constant / (delta * 0.02);
        WeightParams p = make_params(kind, 1, K, delta, 1.0, bt);
        for (int k = 0; k <= K; ++k) {
            double face = static_cast<double>(k) / K;
            // Close to a face: nearly zero.
            for (double off : {-delta / 2, 0.0, delta / 2}) {
                double x = face + off;
                if (x < 0.0 || x > 1.0) continue;
                CHECK(std::abs(quasi_indicator_eval(p, 1, x)) <= 0.05);
            }
            // Well inside a cell: nearly one.
            if (k < K) {
                double mid = face + 0.5 / K;
                CHECK(quasi_indicator_eval(p, 1, mid) ==
                      doctest::Approx(1.0).epsilon(0.05));
            }
        }
        // The offset variant shifts the pattern by half a coarse cell.
        CHECK(std::abs(quasi_indicator_eval(p, 2, 0.5 / K)) <= 0.05);
        CHECK(quasi_indicator_eval(p, 2, 1.0 / K) == doctest::Approx(1.0).epsilon(0.05));
    }
}

TEST_CASE("band-restricted weight net matches the reference off coarse bands") {
    const int K = 3;
    const double delta = 1.0 / 216.0;
    const double eps = 0.1;
    for (ActKind kind : {ActKind::Sigmoid, ActKind::GELU}) {
        Activation act = Activation::make(kind);
        ReferencePoint ref = find_reference_point(act, 3);
        WeightParams p = make_params(kind, 1, K, delta, 0.0);
        Network net = build_weight_band(act, ref, p, 1, eps);
        CHECK(net.depth() == 3);
        // Mirror the builder's automatic slope for the reference evaluator.
        p.beta = 2.0 * 4.0 * K * act.tail_constant / (delta * eps);
        double bound = 0.0;
        for (int t = 0; t <= 4000; ++t) {
            double x = t / 4000.0;
            double y = evaluate(net, {x})[0];
            bound = std::max(bound, std::abs(y));
            double dist = std::abs(x * K - std::round(x * K)) / K;
            if (dist <= delta) continue;
            CHECK(std::abs(y - weight_eval(p, 1, x)) <= eps);
        }
        CHECK(bound <= 2.0 * act.tail_constant + 4.0 + eps);

        Network net2 = build_weight_band(act, ref, p, 2, eps);
        CHECK(net2.depth() == 3);
        double x = 0.5 / (K * K) + 0.25 / K;
        CHECK(evaluate(net2, {x})[0] ==
              doctest::Approx(weight_eval(p, 2, x)).epsilon(0.2));
    }
}

TEST_CASE("global weight net is uniformly accurate on [0,1]") {
    const int K = 3;
    const double delta = 1.0 / 216.0;
    const double eps = 0.1;
    for (ActKind kind : {ActKind::Sigmoid, ActKind::GELU}) {
        Activation act = Activation::make(kind);
        ReferencePoint ref = find_reference_point(act, 3);
        WeightParams p = make_params(kind, 1, K, delta, 0.0);
        Network g1 = build_weight_global(act, ref, p, 1, eps);
        CHECK(g1.depth() == 4);
        p.beta = 2.0 * (2.0 / (delta * eps)) * act.tail_constant;
        double worst = 0.0;
        for (int t = 0; t <= 3000; ++t) {
            double x = t / 3000.0;
            worst = std::max(worst,
                             std::abs(evaluate(g1, {x})[0] - weight_eval(p, 1, x)));
        }
        CHECK(worst <= eps);

        // The complement variant mirrors it exactly.
        Network g2 = build_weight_global(act, ref, p, 2, eps);
        CHECK(g2.depth() == 4);
        for (double x : {0.1, 0.37, 0.52, 0.9}) {
            CHECK(evaluate(g1, {x})[0] + evaluate(g2, {x})[0] ==
                  doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("multivariate weight net matches the tensor reference") {
    Activation act = Activation::make(ActKind::Sigmoid);
    ReferencePoint ref = find_reference_point(act, 3);
    const int K = 2;
    const double delta = 1.0 / 96.0;
    const double eps = 0.2;
    WeightParams p = make_params(ActKind::Sigmoid, 1, K, delta, 0.0);
    Network net = build_weight_multi(act, ref, p, ShiftIndex{1, 2}, eps);
    CHECK(net.depth() == 5);
    CHECK(net.input_dim() == 2);

    WeightParams p1 = p;
    p1.beta = 2.0 * (2.0 * (2.0 * act.tail_constant + 3.0) / (delta * eps)) *
              act.tail_constant;
    double worst = 0.0;
    for (int a = 0; a <= 40; ++a) {
        for (int b = 0; b <= 40; ++b) {
            std::vector<double> x = {a / 40.0, b / 40.0};
            double want = weight_eval(p1, ShiftIndex{1, 2}, x);
            worst = std::max(worst, std::abs(evaluate(net, x)[0] - want));
        }
    }
    CHECK(worst <= eps);
}

TEST_CASE("axis decompositions cover [0,1] with shifted coarse cells") {
    detail::AxisDecomp d1 = detail::axis_decomp(4, 1);
    REQUIRE(d1.corner.size() == 4);
    CHECK(d1.corner[0] == doctest::Approx(0.0));
    CHECK(d1.corner[3] == doctest::Approx(0.75));

    detail::AxisDecomp d2 = detail::axis_decomp(4, 2);
    REQUIRE(d2.corner.size() == 5);
    CHECK(d2.corner[0] == doctest::Approx(-1.0 / 32.0));
    CHECK(d2.corner[4] == doctest::Approx(1.0 - 1.0 / 32.0));
    // Consecutive corners are exactly one coarse cell apart.
    for (size_t k = 1; k < d2.corner.size(); ++k) {
        CHECK(d2.corner[k] - d2.corner[k - 1] == doctest::Approx(0.25));
    }
}

TEST_CASE("shifted approximator is accurate on the shifted interior") {
    Activation act = Activation::make(ActKind::Sigmoid);
    ReferencePoint ref = find_reference_point(act, 3);
    TargetFunction f;
    f.d = 1;
    f.value = [](const std::vector<double>& x) { return x[0] * x[0]; };
    f.partial = [](const MultiIndex& a, const std::vector<double>& x) {
        if (a.order() == 0) return x[0] * x[0];
        if (a.order() == 1) return 2.0 * x[0];
        return 0.0;
    };
    const int K = 2;
    const double delta = 1.0 / 96.0;
    ShiftIndex v{2};
    Network net = detail::build_shifted_approximator(act, ref, f, 2.0, K, delta, v,
                                                     0.2, nullptr);
    CHECK(net.depth() == 6);
    GridSpec grid{1, K, delta};
    double worst = 0.0;
    for (int t = 0; t <= 2000; ++t) {
        std::vector<double> x = {t / 2000.0};
        if (!in_interior(grid, x, GridLevel::Refined, &v)) continue;
        worst = std::max(worst, std::abs(evaluate(net, x)[0] - f.value(x)));
    }
    CHECK(worst <= 0.2);
}

TEST_CASE("uniform assembly certifies the full-domain sup error") {
    Activation act = Activation::make(ActKind::Sigmoid);
    ReferencePoint ref = find_reference_point(act, 3);
    const double pi = 3.14159265358979323846;
    TargetFunction f;
    f.d = 1;
    f.value = [pi](const std::vector<double>& x) {
        return 0.5 * std::sin(2.0 * pi * x[0]);
    };
    f.partial = [pi](const MultiIndex& a, const std::vector<double>& x) {
        double w = 2.0 * pi;
        switch (a.order()) {
            case 0: return 0.5 * std::sin(w * x[0]);
            case 1: return 0.5 * w * std::cos(w * x[0]);
            default: return -0.5 * w * w * std::sin(w * x[0]);
        }
    };
    f.sobolev_bound = 0.5 * 4.0 * pi * pi;

    LinfResult res = build_linf_approximator(act, ref, f, 2.0, 0.25);
    CHECK(res.net.depth() == 7);
    CHECK(res.sup_error <= 0.25);
    double worst = 0.0;
    for (int t = 0; t <= 5000; ++t) {
        std::vector<double> x = {t / 5000.0};
        worst = std::max(worst, std::abs(evaluate(res.net, x)[0] - f.value(x)));
    }
    CHECK(worst <= 0.25 + 0.01);
    CHECK(res.budget.K >= 1);
    CHECK(res.budget.delta == doctest::Approx(1.0 / (24.0 * res.budget.K * res.budget.K)));
}
