#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "apx/activation.hpp"
#include "apx/errors.hpp"

namespace apx {

// One affine layer y = W x + b, with W stored row-major.
struct Layer {
    int rows = 0;
    int cols = 0;
    std::vector<double> weight;  // rows*cols entries
    std::vector<double> bias;    // rows entries

    double& w(int r, int c) { return weight[static_cast<size_t>(r) * cols + c]; }
    double w(int r, int c) const { return weight[static_cast<size_t>(r) * cols + c]; }
};

// Dense feedforward network: affine layers with the activation applied
// componentwise between consecutive layers (never after the last).
struct Network {
    Activation activation;
    std::vector<Layer> layers;

    int depth() const { return static_cast<int>(layers.size()); }
    int input_dim() const { return layers.empty() ? 0 : layers.front().cols; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().rows; }
    int width() const;
};

struct NormReport {
    double linf = 0.0;
    double l2 = 0.0;
    long param_count = 0;
};

std::vector<double> evaluate(const Network& net, const std::vector<double>& x);

// Batched forward pass; columns of x are input points.
Eigen::MatrixXd evaluate_batch(const Network& net, const Eigen::MatrixXd& x);

NormReport norms(const Network& net);

// Single affine layer as a depth-1 network.
Network affine_network(const Activation& act, const Layer& layer);

// Composition second(first(x)); depths fuse at the junction (L1 + L2 - 1).
Network chain(const Network& first, const Network& second);

// Block-diagonal combination on disjoint inputs.
Network parallel(const std::vector<Network>& nets);

// Same-input combination: all nets read the same input, outputs concatenate.
Network stack(const std::vector<Network>& nets);

// Linear combination of same-input networks: weights has one entry per output
// coordinate of the stacked nets; result has output dim 1.
Network affine_combine(const std::vector<Network>& nets,
                       const std::vector<double>& weights, double bias);

// Fuse an input-side affine map x -> A x + b into the first layer.
Network premap(const Network& net, const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

// Fuse an output-side affine map y -> A y + b into the last layer.
Network postmap(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Network& net);

// Clamping evaluator T_F (output clipped to [-F, F]); requires d_out = 1.
class TruncatedEvaluator {
public:
    TruncatedEvaluator(Network net, double f);
    double operator()(const std::vector<double>& x) const;
    double bound() const { return f_; }

private:
    Network net_;
    double f_;
};

TruncatedEvaluator truncate(Network net, double f);

// Log covering-number bound 2(L+d)M^2 ln(4^{L+1} d (max{lip,1} M)^L B^{L+1} / tau).
double covering_log_bound(int l, int d, int m, double b, double lipschitz,
                          double tau, double phi_at_zero = 0.5);

// Text serialization (NET v1), value-exact round trip at 17 significant digits.
void save_network(const Network& net, std::ostream& os);
void save_network(const Network& net, const std::string& path);
Network load_network(std::istream& is);
Network load_network_file(const std::string& path);

}  // namespace apx
