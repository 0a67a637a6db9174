#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "apx/activation.hpp"
#include "apx/construct.hpp"
#include "apx/errors.hpp"
#include "apx/network.hpp"

namespace apx {

// Random Fourier feature target: sum_k a_k cos(w_k . x + b_k).
struct RFFTarget {
    int d = 1;
    int kfeat = 1;
    std::uint64_t seed = 0;
    std::vector<double> amplitude;               // a_k
    std::vector<std::vector<double>> frequency;  // w_k
    std::vector<double> phase;                   // b_k

    double value(const std::vector<double>& x) const;
    double partial(const MultiIndex& alpha, const std::vector<double>& x) const;
};

RFFTarget gen_rff_target(int d, int kfeat, std::uint64_t seed);

// Sup-norm estimate over a seeded uniform probe cloud.
double sup_norm_estimate(const RFFTarget& target, long n_probes, std::uint64_t seed);

struct Dataset {
    int d = 1;
    long n = 0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    Eigen::MatrixXd inputs;  // d x n, uniform on [0,1]^d
    Eigen::VectorXd labels;  // target/scale + noise
};

// Labels use target.value / scale; per-sample counter-keyed streams.
Dataset gen_dataset(const RFFTarget& target, long n, double sigma,
                    std::uint64_t seed, double scale = 1.0);

struct TrainConfig {
    int width = 16;
    Activation act = Activation::make(ActKind::ReLU);
    double learning_rate = 1e-3;
    double l2_coeff = 0.0;
    long epochs = 1000;
    double truncation = 2.0;
    std::uint64_t init_seed = 1;
    bool single_precision = false;
};

struct TrainResult {
    Network net;                     // depth 2, width M
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> loss_trace;  // one entry per epoch
};

// Full-batch Adam (0.9 / 0.999 / 1e-8) with cosine learning-rate decay on
// MSE + l2_coeff * |params|^2; analytic gradients.
TrainResult train_two_layer(const Dataset& data, const TrainConfig& config);

// Flat two-layer parameter order: W1 (M*d), b1 (M), W2 (M), b2 (1).
long two_layer_param_count(int width, int d);
double two_layer_loss(const std::vector<double>& params, int width,
                      const Dataset& data, const Activation& act, double lambda,
                      std::vector<double>* grad = nullptr);
Network two_layer_network(const std::vector<double>& params, int width, int d,
                          const Activation& act);

// Noiseless truncated-risk MSE on fresh uniform test points.
double generalization_error(const Network& net, const RFFTarget& target,
                            double truncation, long n_test, std::uint64_t seed,
                            double scale = 1.0);

struct GridCell {
    double eta = 0.0;
    double lambda = 0.0;
    double gen_error = 0.0;
    bool diverged = false;
};

struct GridSearchResult {
    double eta = 0.0;
    double lambda = 0.0;
    double gen_error = 0.0;
    Network net;
    std::vector<GridCell> table;
};

// Trains every (eta, lambda) cell with a counter-keyed init stream and picks
// the smallest noiseless test error; diverged cells are excluded.
GridSearchResult grid_search(const Dataset& data, const RFFTarget& target,
                             double target_scale, const TrainConfig& base,
                             const std::vector<double>& etas,
                             const std::vector<double>& lambdas, long n_test,
                             std::uint64_t seed, int act_id, int run);

struct ExperimentRow {
    std::string activation;
    long n = 0;
    int run = 0;
    double eta = 0.0;
    double lambda = 0.0;
    double gen_error = 0.0;
};

struct ExponentSummary {
    std::string activation;
    double alpha = 0.0;  // fitted decay exponent (positive = decaying)
    double r2 = 0.0;
};

struct ExperimentResult {
    std::vector<ExperimentRow> rows;
    std::vector<ExponentSummary> summaries;
    double target_scale = 1.0;
};

struct ExperimentPreset {
    int d = 2;
    int kfeat = 10;
    int width = 256;
    long epochs = 5000;
    std::vector<long> n_ladder;
    int runs = 3;
    std::vector<double> etas;
    std::vector<double> lambdas;
    double sigma = 0.1;
    double truncation = 2.0;
    long n_test = 10000;
    bool normalize_target = true;
    bool single_precision = true;
};

// Named presets: "desk" (minutes) and "paper" (hours).
ExperimentPreset experiment_preset(const std::string& name);

ExperimentResult run_separation_experiment(const ExperimentPreset& preset,
                                           std::uint64_t seed, int threads = 1);

}  // namespace apx
