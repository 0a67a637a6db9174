#include "apx/network.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace apx {
namespace {

void apply_activation(const Activation& act, Eigen::MatrixXd& z) {
    switch (act.kind) {
        case ActKind::Sigmoid:
            z = (1.0 + (-z.array()).exp()).inverse().matrix();
            break;
        case ActKind::TanhShifted:
            z = (0.5 * (1.0 + z.array().tanh())).matrix();
            break;
        case ActKind::SiLU:
            z = (z.array() / (1.0 + (-z.array()).exp())).matrix();
            break;
        case ActKind::GELU: {
            constexpr double inv_sqrt2 = 0.70710678118654752440084436210485;
            z = z.unaryExpr([](double t) {
                return t * 0.5 * std::erfc(-t * inv_sqrt2);
            });
            break;
        }
        case ActKind::ReLU:
            z = z.cwiseMax(0.0);
            break;
    }
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
weight_map(const Layer& layer) {
    return {layer.weight.data(), layer.rows, layer.cols};
}

void check_chainable(const Network& net) {
    for (size_t i = 0; i + 1 < net.layers.size(); ++i) {
        if (net.layers[i].rows != net.layers[i + 1].cols) {
            throw ShapeMismatch("layer " + std::to_string(i) + " out dim " +
                                std::to_string(net.layers[i].rows) + " vs next in dim " +
                                std::to_string(net.layers[i + 1].cols));
        }
    }
}

}  // namespace

int Network::width() const {
    if (layers.empty()) return 0;
    if (layers.size() == 1) return std::max(layers[0].cols, layers[0].rows);
    int w = 0;
    for (size_t i = 0; i + 1 < layers.size(); ++i) {
        w = std::max(w, layers[i].rows);
    }
    return w;
}

std::vector<double> evaluate(const Network& net, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != net.input_dim()) {
        throw ShapeMismatch("input dim " + std::to_string(x.size()) + " expected " +
                            std::to_string(net.input_dim()));
    }
    Eigen::MatrixXd col(x.size(), 1);
    for (size_t i = 0; i < x.size(); ++i) col(static_cast<int>(i), 0) = x[i];
    Eigen::MatrixXd out = evaluate_batch(net, col);
    return {out.data(), out.data() + out.rows()};
}

Eigen::MatrixXd evaluate_batch(const Network& net, const Eigen::MatrixXd& x) {
    if (net.layers.empty()) throw ShapeMismatch("empty network");
    if (x.rows() != net.input_dim()) {
        throw ShapeMismatch("batch input dim " + std::to_string(x.rows()) + " expected " +
                            std::to_string(net.input_dim()));
    }
    Eigen::MatrixXd z = x;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& layer = net.layers[i];
        z = (weight_map(layer) * z).colwise() +
            Eigen::Map<const Eigen::VectorXd>(layer.bias.data(), layer.rows);
        if (!z.allFinite()) {
            throw NonFiniteIntermediate("layer " + std::to_string(i));
        }
        if (i + 1 < net.layers.size()) {
            apply_activation(net.activation, z);
        }
    }
    return z;
}

NormReport norms(const Network& net) {
    NormReport report;
    double sq = 0.0;
    for (const Layer& layer : net.layers) {
        for (double v : layer.weight) {
            report.linf = std::max(report.linf, std::abs(v));
            sq += v * v;
        }
        for (double v : layer.bias) {
            report.linf = std::max(report.linf, std::abs(v));
            sq += v * v;
        }
        report.param_count += static_cast<long>(layer.weight.size() + layer.bias.size());
    }
    report.l2 = std::sqrt(sq);
    return report;
}

Network affine_network(const Activation& act, const Layer& layer) {
    Network net{act, {layer}};
    check_chainable(net);
    return net;
}

Network chain(const Network& first, const Network& second) {
    if (first.output_dim() != second.input_dim()) {
        throw ShapeMismatch("chain: " + std::to_string(first.output_dim()) + " -> " +
                            std::to_string(second.input_dim()));
    }
    if (first.activation.kind != second.activation.kind) {
        throw ShapeMismatch("chain: mixed activations");
    }
    Network result{first.activation, {}};
    result.layers.assign(first.layers.begin(), first.layers.end() - 1);

    // Fuse the junction: S1 o Fm is a single affine layer.
    const Layer& fm = first.layers.back();
    const Layer& s1 = second.layers.front();
    Layer fused;
    fused.rows = s1.rows;
    fused.cols = fm.cols;
    fused.weight.assign(static_cast<size_t>(fused.rows) * fused.cols, 0.0);
    fused.bias.assign(fused.rows, 0.0);
    Eigen::MatrixXd w = weight_map(s1) * weight_map(fm);
    Eigen::VectorXd b =
        weight_map(s1) * Eigen::Map<const Eigen::VectorXd>(fm.bias.data(), fm.rows) +
        Eigen::Map<const Eigen::VectorXd>(s1.bias.data(), s1.rows);
    for (int r = 0; r < fused.rows; ++r) {
        for (int c = 0; c < fused.cols; ++c) fused.w(r, c) = w(r, c);
        fused.bias[r] = b(r);
    }
    result.layers.push_back(std::move(fused));
    result.layers.insert(result.layers.end(), second.layers.begin() + 1, second.layers.end());
    return result;
}

namespace {

Network combine(const std::vector<Network>& nets, bool shared_input) {
    if (nets.empty()) throw ShapeMismatch("combine: no networks");
    int depth = nets[0].depth();
    for (const Network& net : nets) {
        if (net.depth() != depth) throw ShapeMismatch("combine: depth mismatch");
        if (net.activation.kind != nets[0].activation.kind) {
            throw ShapeMismatch("combine: mixed activations");
        }
        if (shared_input && net.input_dim() != nets[0].input_dim()) {
            throw ShapeMismatch("combine: shared input dims differ");
        }
    }
    Network result{nets[0].activation, {}};
    for (int l = 0; l < depth; ++l) {
        Layer merged;
        bool first_layer_shared = shared_input && l == 0;
        int total_rows = 0, total_cols = 0;
        for (const Network& net : nets) {
            total_rows += net.layers[l].rows;
            total_cols += net.layers[l].cols;
        }
        merged.rows = total_rows;
        merged.cols = first_layer_shared ? nets[0].layers[0].cols : total_cols;
        merged.weight.assign(static_cast<size_t>(merged.rows) * merged.cols, 0.0);
        merged.bias.assign(merged.rows, 0.0);
        int row0 = 0, col0 = 0;
        for (const Network& net : nets) {
            const Layer& layer = net.layers[l];
            int cbase = first_layer_shared ? 0 : col0;
            for (int r = 0; r < layer.rows; ++r) {
                for (int c = 0; c < layer.cols; ++c) {
                    merged.w(row0 + r, cbase + c) = layer.w(r, c);
                }
                merged.bias[row0 + r] = layer.bias[r];
            }
            row0 += layer.rows;
            col0 += layer.cols;
        }
        result.layers.push_back(std::move(merged));
    }
    return result;
}

}  // namespace

Network parallel(const std::vector<Network>& nets) { return combine(nets, false); }

Network stack(const std::vector<Network>& nets) { return combine(nets, true); }

Network affine_combine(const std::vector<Network>& nets,
                       const std::vector<double>& weights, double bias) {
    Network stacked = stack(nets);
    int total = stacked.output_dim();
    if (static_cast<int>(weights.size()) != total) {
        throw ShapeMismatch("affine_combine: " + std::to_string(weights.size()) +
                            " weights for " + std::to_string(total) + " outputs");
    }
    Eigen::MatrixXd a(1, total);
    for (int i = 0; i < total; ++i) a(0, i) = weights[i];
    Eigen::VectorXd b(1);
    b(0) = bias;
    return postmap(a, b, stacked);
}

Network premap(const Network& net, const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    if (a.rows() != net.input_dim() || b.size() != a.rows()) {
        throw ShapeMismatch("premap dims");
    }
    Network result = net;
    Layer& first = result.layers.front();
    Eigen::MatrixXd w = weight_map(net.layers.front()) * a;
    Eigen::VectorXd nb =
        weight_map(net.layers.front()) * b +
        Eigen::Map<const Eigen::VectorXd>(first.bias.data(), first.rows);
    first.cols = static_cast<int>(a.cols());
    first.weight.assign(static_cast<size_t>(first.rows) * first.cols, 0.0);
    for (int r = 0; r < first.rows; ++r) {
        for (int c = 0; c < first.cols; ++c) first.w(r, c) = w(r, c);
        first.bias[r] = nb(r);
    }
    return result;
}

Network postmap(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Network& net) {
    if (a.cols() != net.output_dim() || b.size() != a.rows()) {
        throw ShapeMismatch("postmap dims");
    }
    Network result = net;
    Layer& last = result.layers.back();
    Eigen::MatrixXd w = a * weight_map(net.layers.back());
    Eigen::VectorXd nb =
        a * Eigen::Map<const Eigen::VectorXd>(last.bias.data(), last.rows) + b;
    last.rows = static_cast<int>(a.rows());
    last.weight.assign(static_cast<size_t>(last.rows) * last.cols, 0.0);
    last.bias.assign(last.rows, 0.0);
    for (int r = 0; r < last.rows; ++r) {
        for (int c = 0; c < last.cols; ++c) last.w(r, c) = w(r, c);
        last.bias[r] = nb(r);
    }
    return result;
}

TruncatedEvaluator::TruncatedEvaluator(Network net, double f) : net_(std::move(net)), f_(f) {
    if (net_.output_dim() != 1) throw ShapeMismatch("truncate needs d_out = 1");
}

double TruncatedEvaluator::operator()(const std::vector<double>& x) const {
    double y = evaluate(net_, x)[0];
    if (y > f_) return f_;
    if (y < -f_) return -f_;
    return y;
}

TruncatedEvaluator truncate(Network net, double f) {
    return TruncatedEvaluator(std::move(net), f);
}

double covering_log_bound(int l, int d, int m, double b, double lipschitz,
                          double tau, double phi_at_zero) {
    if (l < 2) throw PreconditionFailed("covering bound needs L >= 2");
    if (m < 1) throw PreconditionFailed("covering bound needs M >= 1");
    if (!(tau > 0.0 && tau <= 1.0)) throw PreconditionFailed("tau must lie in (0,1]");
    double lip = std::max(lipschitz, 1.0);
    double b_floor = std::max(1.0, std::abs(phi_at_zero) / (lip * (d + 1)));
    if (b < b_floor) {
        throw PreconditionFailed("B below floor " + std::to_string(b_floor));
    }
    double log_inner = (l + 1) * std::log(4.0) + std::log(static_cast<double>(d)) +
                       l * std::log(lip * m) + (l + 1) * std::log(b) - std::log(tau);
    return 2.0 * (l + d) * static_cast<double>(m) * m * log_inner;
}

void save_network(const Network& net, std::ostream& os) {
    char buf[64];
    os << "NET v1 act=" << net.activation.name() << " L=" << net.depth()
       << " din=" << net.input_dim() << " dout=" << net.output_dim() << "\n";
    for (const Layer& layer : net.layers) {
        os << "LAYER " << layer.rows << " " << layer.cols << "\n";
        for (int r = 0; r < layer.rows; ++r) {
            for (int c = 0; c < layer.cols; ++c) {
                std::snprintf(buf, sizeof buf, "%.17g", layer.w(r, c));
                os << (c ? " " : "") << buf;
            }
            os << "\n";
        }
        os << "BIAS\n";
        for (int r = 0; r < layer.rows; ++r) {
            std::snprintf(buf, sizeof buf, "%.17g", layer.bias[r]);
            os << (r ? " " : "") << buf;
        }
        os << "\n";
    }
}

void save_network(const Network& net, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path);
    save_network(net, os);
}

Network load_network(std::istream& is) {
    std::string tag, version, act_field, l_field, din_field, dout_field;
    if (!(is >> tag >> version >> act_field >> l_field >> din_field >> dout_field) ||
        tag != "NET" || version != "v1") {
        throw Error("bad network header");
    }
    auto field_value = [](const std::string& field, const char* key) {
        std::string prefix = std::string(key) + "=";
        if (field.rfind(prefix, 0) != 0) throw Error("bad network header field " + field);
        return field.substr(prefix.size());
    };
    Network net{Activation::from_name(field_value(act_field, "act")), {}};
    int depth = std::stoi(field_value(l_field, "L"));
    int din = std::stoi(field_value(din_field, "din"));
    int dout = std::stoi(field_value(dout_field, "dout"));
    for (int l = 0; l < depth; ++l) {
        std::string kw;
        Layer layer;
        if (!(is >> kw >> layer.rows >> layer.cols) || kw != "LAYER") {
            throw Error("bad LAYER record");
        }
        layer.weight.resize(static_cast<size_t>(layer.rows) * layer.cols);
        for (double& v : layer.weight) {
            if (!(is >> v)) throw Error("short weight block");
        }
        if (!(is >> kw) || kw != "BIAS") throw Error("bad BIAS record");
        layer.bias.resize(layer.rows);
        for (double& v : layer.bias) {
            if (!(is >> v)) throw Error("short bias block");
        }
        net.layers.push_back(std::move(layer));
    }
    check_chainable(net);
    if (net.input_dim() != din || net.output_dim() != dout) {
        throw Error("network header dims disagree with layers");
    }
    return net;
}

Network load_network_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    return load_network(is);
}

}  // namespace apx
