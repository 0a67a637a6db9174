#include "apx/learn.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "apx/analysis.hpp"
#include "apx/rng.hpp"

namespace apx {
namespace {

constexpr double kPi = 3.14159265358979323846;

int act_id(ActKind kind) { return static_cast<int>(kind); }

// Flushes subnormal floats to zero for the lifetime of a training run.
// Exactly-zero unit gradients (dead relu units in particular) make the Adam
// moment buffers decay through the subnormal range, where x86 arithmetic
// pays a large per-operation penalty. The mode is per-thread and restored
// on scope exit.
class DenormalFlushGuard {
public:
    DenormalFlushGuard() {
#if defined(__SSE2__)
        saved_ftz_ = _MM_GET_FLUSH_ZERO_MODE();
        saved_daz_ = _MM_GET_DENORMALS_ZERO_MODE();
        _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
        _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
    }
    ~DenormalFlushGuard() {
#if defined(__SSE2__)
        _MM_SET_FLUSH_ZERO_MODE(saved_ftz_);
        _MM_SET_DENORMALS_ZERO_MODE(saved_daz_);
#endif
    }
    DenormalFlushGuard(const DenormalFlushGuard&) = delete;
    DenormalFlushGuard& operator=(const DenormalFlushGuard&) = delete;

private:
#if defined(__SSE2__)
    unsigned saved_ftz_ = 0;
    unsigned saved_daz_ = 0;
#endif
};

template <typename S>
struct TwoLayerParams {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
    Mat w1;  // M x d
    Vec b1;  // M
    Vec w2;  // M
    S b2 = S(0);

    void setZero(int m, int d) {
        w1 = Mat::Zero(m, d);
        b1 = Vec::Zero(m);
        w2 = Vec::Zero(m);
        b2 = S(0);
    }
};

// Per-epoch working matrices, allocated once and reused across the whole
// training run (fresh M x n temporaries every epoch dominate the runtime).
template <typename S>
struct TrainScratch {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    using Arr = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
    Mat z, a, dphi, dz;
    Arr tmp;
    Vec out, r, dout;

    void resize(int m, long n) {
        z.resize(m, n);
        a.resize(m, n);
        dphi.resize(m, n);
        dz.resize(m, n);
        tmp.resize(m, n);
        out.resize(n);
        r.resize(n);
        dout.resize(n);
    }
};

// Vectorized activation value (and optionally derivative) over a matrix of
// pre-activations; writes into preallocated buffers, no heap traffic.
template <typename S>
void act_apply(ActKind kind,
               const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& z,
               Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& value,
               Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>* deriv,
               Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>& tmp) {
    const auto& t = z.array();
    switch (kind) {
        case ActKind::Sigmoid: {
            tmp = S(1) / (S(1) + (-t).exp());
            value = tmp.matrix();
            if (deriv) deriv->array() = tmp * (S(1) - tmp);
            return;
        }
        case ActKind::TanhShifted: {
            tmp = t.tanh();
            value.array() = (S(1) + tmp) / S(2);
            if (deriv) deriv->array() = (S(1) - tmp.square()) / S(2);
            return;
        }
        case ActKind::SiLU: {
            tmp = S(1) / (S(1) + (-t).exp());
            value.array() = t * tmp;
            if (deriv) deriv->array() = tmp * (S(1) + t * (S(1) - tmp));
            return;
        }
        case ActKind::GELU: {
            tmp = (S(1) + (t / S(std::sqrt(2.0))).erf()) / S(2);
            value.array() = t * tmp;
            if (deriv) {
                deriv->array() =
                    tmp + t * ((-t.square() / S(2)).exp() / S(std::sqrt(2.0 * kPi)));
            }
            return;
        }
        case ActKind::ReLU: {
            value.array() = t.max(S(0));
            if (deriv) {
                deriv->array() = (t > S(0)).template cast<S>();
            }
            return;
        }
    }
}

template <typename S>
double loss_and_grad(const TwoLayerParams<S>& p, ActKind kind,
                     const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& x,
                     const Eigen::Matrix<S, Eigen::Dynamic, 1>& y, double lambda,
                     TwoLayerParams<S>* grad, TrainScratch<S>& ws) {
    const long n = x.cols();
    ws.z.noalias() = p.w1 * x;
    ws.z.colwise() += p.b1;
    act_apply<S>(kind, ws.z, ws.a, grad != nullptr ? &ws.dphi : nullptr, ws.tmp);
    ws.out.noalias() = ws.a.transpose() * p.w2;
    ws.out.array() += p.b2;
    ws.r = ws.out - y;
    double mse = static_cast<double>(ws.r.squaredNorm()) / static_cast<double>(n);
    double reg = static_cast<double>(p.w1.squaredNorm() + p.b1.squaredNorm() +
                                     p.w2.squaredNorm()) +
                 static_cast<double>(p.b2) * static_cast<double>(p.b2);
    double loss = mse + lambda * reg;
    if (grad != nullptr) {
        S scale = S(2.0 / static_cast<double>(n));
        ws.dout = ws.r * scale;  // n
        grad->w2.noalias() = ws.a * ws.dout;
        grad->w2 += S(2.0 * lambda) * p.w2;
        grad->b2 = ws.dout.sum() + S(2.0 * lambda) * p.b2;
        ws.dz.noalias() = p.w2 * ws.dout.transpose();
        ws.dz.array() *= ws.dphi.array();
        grad->w1.noalias() = ws.dz * x.transpose();
        grad->w1 += S(2.0 * lambda) * p.w1;
        grad->b1 = ws.dz.rowwise().sum();
        grad->b1 += S(2.0 * lambda) * p.b1;
    }
    return loss;
}

template <typename S>
TrainResult train_impl(const Dataset& data, const TrainConfig& config) {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
    const int m = config.width;
    const int d = data.d;
    if (m < 1 || config.epochs < 1 || !(config.learning_rate > 0.0)) {
        throw PreconditionFailed("training config must have positive sizes");
    }
    DenormalFlushGuard denormal_guard;
    Mat x = data.inputs.cast<S>();
    Vec y = data.labels.cast<S>();

    // Layer-wise uniform init in +-fan_in^{-1/2}.
    Rng rng = Rng::keyed(config.init_seed, 0x717);
    TwoLayerParams<S> p;
    p.setZero(m, d);
    double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    double s2 = 1.0 / std::sqrt(static_cast<double>(m));
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < d; ++c) p.w1(r, c) = S(rng.uniform(-s1, s1));
    }
    for (int r = 0; r < m; ++r) p.b1(r) = S(rng.uniform(-s1, s1));
    for (int r = 0; r < m; ++r) p.w2(r) = S(rng.uniform(-s2, s2));
    p.b2 = S(rng.uniform(-s2, s2));

    TwoLayerParams<S> g, mom, vel;
    g.setZero(m, d);
    mom.setZero(m, d);
    vel.setZero(m, d);

    const double beta1 = 0.9, beta2 = 0.999, eps_adam = 1e-8;
    double b1t = 1.0, b2t = 1.0;
    TrainResult result;
    result.loss_trace.reserve(config.epochs);

    auto adam_update = [&](auto& param, auto& m1, auto& v1, const auto& grad,
                           double lr) {
        m1.array() = S(beta1) * m1.array() + S(1.0 - beta1) * grad.array();
        v1.array() = S(beta2) * v1.array() + S(1.0 - beta2) * grad.array().square();
        auto mhat = m1.array() / S(1.0 - b1t);
        auto vhat = v1.array() / S(1.0 - b2t);
        param.array() -= S(lr) * mhat / (vhat.sqrt() + S(eps_adam));
    };

    TrainScratch<S> ws;
    ws.resize(m, data.n);
    for (long t = 0; t < config.epochs; ++t) {
        double loss = loss_and_grad<S>(p, config.act.kind, x, y,
                                       config.l2_coeff, &g, ws);
        if (!std::isfinite(loss)) {
            throw DivergedLoss("non-finite training loss at epoch " + std::to_string(t));
        }
        if (t == 0) result.initial_loss = loss;
        result.loss_trace.push_back(loss);
        double lr = config.learning_rate *
                    (1.0 + std::cos(kPi * static_cast<double>(t) /
                                    static_cast<double>(config.epochs))) /
                    2.0;
        b1t *= beta1;
        b2t *= beta2;
        adam_update(p.w1, mom.w1, vel.w1, g.w1, lr);
        adam_update(p.b1, mom.b1, vel.b1, g.b1, lr);
        adam_update(p.w2, mom.w2, vel.w2, g.w2, lr);
        {
            mom.b2 = S(beta1) * mom.b2 + S(1.0 - beta1) * g.b2;
            vel.b2 = S(beta2) * vel.b2 + S(1.0 - beta2) * g.b2 * g.b2;
            double mhat = static_cast<double>(mom.b2) / (1.0 - b1t);
            double vhat = static_cast<double>(vel.b2) / (1.0 - b2t);
            p.b2 = S(static_cast<double>(p.b2) -
                     lr * mhat / (std::sqrt(vhat) + eps_adam));
        }
    }
    result.final_loss = loss_and_grad<S>(p, config.act.kind, x, y,
                                         config.l2_coeff, nullptr, ws);

    std::vector<double> flat(two_layer_param_count(m, d));
    long idx = 0;
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < d; ++c) flat[idx++] = static_cast<double>(p.w1(r, c));
    }
    for (int r = 0; r < m; ++r) flat[idx++] = static_cast<double>(p.b1(r));
    for (int r = 0; r < m; ++r) flat[idx++] = static_cast<double>(p.w2(r));
    flat[idx++] = static_cast<double>(p.b2);
    result.net = two_layer_network(flat, m, d, config.act);
    return result;
}

}  // namespace

double RFFTarget::value(const std::vector<double>& x) const {
    double acc = 0.0;
    for (int k = 0; k < kfeat; ++k) {
        double arg = phase[k];
        for (int l = 0; l < d; ++l) arg += frequency[k][l] * x[l];
        acc += amplitude[k] * std::cos(arg);
    }
    return acc;
}

double RFFTarget::partial(const MultiIndex& alpha, const std::vector<double>& x) const {
    if (alpha.dim() != d) throw ShapeMismatch("partial order vs target dimension");
    double acc = 0.0;
    int order = alpha.order();
    for (int k = 0; k < kfeat; ++k) {
        double arg = phase[k] + order * kPi / 2.0;
        double coef = amplitude[k];
        for (int l = 0; l < d; ++l) {
            arg += frequency[k][l] * x[l];
            for (int a = 0; a < alpha.alpha[l]; ++a) coef *= frequency[k][l];
        }
        acc += coef * std::cos(arg);
    }
    return acc;
}

RFFTarget gen_rff_target(int d, int kfeat, std::uint64_t seed) {
    if (d < 1 || kfeat < 1) throw PreconditionFailed("target needs d, Kfeat >= 1");
    RFFTarget t;
    t.d = d;
    t.kfeat = kfeat;
    t.seed = seed;
    Rng rng = Rng::keyed(seed, 0xf17);
    for (int k = 0; k < kfeat; ++k) {
        std::vector<double> w(d);
        for (int l = 0; l < d; ++l) w[l] = rng.normal();
        t.frequency.push_back(std::move(w));
        t.phase.push_back(rng.uniform(0.0, 2.0 * kPi));
        t.amplitude.push_back(rng.normal());
    }
    return t;
}

double sup_norm_estimate(const RFFTarget& target, long n_probes, std::uint64_t seed) {
    Rng rng = Rng::keyed(seed, 0x5b9);
    double best = 0.0;
    std::vector<double> x(target.d);
    for (long t = 0; t < n_probes; ++t) {
        for (int l = 0; l < target.d; ++l) x[l] = rng.uniform();
        best = std::max(best, std::abs(target.value(x)));
    }
    return best;
}

Dataset gen_dataset(const RFFTarget& target, long n, double sigma,
                    std::uint64_t seed, double scale) {
    if (n < 1) throw PreconditionFailed("dataset needs n >= 1");
    if (!(scale > 0.0)) throw PreconditionFailed("target scale must be positive");
    Dataset data;
    data.d = target.d;
    data.n = n;
    data.sigma = sigma;
    data.seed = seed;
    data.inputs.resize(target.d, n);
    data.labels.resize(n);
    std::vector<double> x(target.d);
    for (long i = 0; i < n; ++i) {
        Rng rx = Rng::keyed(seed, 1, static_cast<std::uint64_t>(i));
        for (int l = 0; l < target.d; ++l) {
            x[l] = rx.uniform();
            data.inputs(l, i) = x[l];
        }
        double noise = 0.0;
        if (sigma > 0.0) {
            Rng rn = Rng::keyed(seed, 2, static_cast<std::uint64_t>(i));
            noise = sigma * rn.normal();
        }
        data.labels(i) = target.value(x) / scale + noise;
    }
    return data;
}

long two_layer_param_count(int width, int d) {
    return static_cast<long>(width) * d + 2L * width + 1;
}

double two_layer_loss(const std::vector<double>& params, int width,
                      const Dataset& data, const Activation& act, double lambda,
                      std::vector<double>* grad) {
    const int d = data.d;
    if (static_cast<long>(params.size()) != two_layer_param_count(width, d)) {
        throw ShapeMismatch("two-layer parameter vector size");
    }
    TwoLayerParams<double> p;
    p.setZero(width, d);
    long idx = 0;
    for (int r = 0; r < width; ++r) {
        for (int c = 0; c < d; ++c) p.w1(r, c) = params[idx++];
    }
    for (int r = 0; r < width; ++r) p.b1(r) = params[idx++];
    for (int r = 0; r < width; ++r) p.w2(r) = params[idx++];
    p.b2 = params[idx++];

    TwoLayerParams<double> g;
    if (grad != nullptr) g.setZero(width, d);
    TrainScratch<double> ws;
    ws.resize(width, data.n);
    double loss = loss_and_grad<double>(p, act.kind, data.inputs, data.labels,
                                        lambda, grad != nullptr ? &g : nullptr, ws);
    if (grad != nullptr) {
        grad->assign(params.size(), 0.0);
        idx = 0;
        for (int r = 0; r < width; ++r) {
            for (int c = 0; c < d; ++c) (*grad)[idx++] = g.w1(r, c);
        }
        for (int r = 0; r < width; ++r) (*grad)[idx++] = g.b1(r);
        for (int r = 0; r < width; ++r) (*grad)[idx++] = g.w2(r);
        (*grad)[idx++] = g.b2;
    }
    return loss;
}

Network two_layer_network(const std::vector<double>& params, int width, int d,
                          const Activation& act) {
    if (static_cast<long>(params.size()) != two_layer_param_count(width, d)) {
        throw ShapeMismatch("two-layer parameter vector size");
    }
    Network net{act, {}};
    Layer l1;
    l1.rows = width;
    l1.cols = d;
    long idx = 0;
    for (long k = 0; k < static_cast<long>(width) * d; ++k) {
        l1.weight.push_back(params[idx++]);
    }
    for (int r = 0; r < width; ++r) l1.bias.push_back(params[idx++]);
    Layer l2;
    l2.rows = 1;
    l2.cols = width;
    for (int r = 0; r < width; ++r) l2.weight.push_back(params[idx++]);
    l2.bias.push_back(params[idx++]);
    net.layers = {l1, l2};
    return net;
}

TrainResult train_two_layer(const Dataset& data, const TrainConfig& config) {
    return config.single_precision ? train_impl<float>(data, config)
                                   : train_impl<double>(data, config);
}

double generalization_error(const Network& net, const RFFTarget& target,
                            double truncation, long n_test, std::uint64_t seed,
                            double scale) {
    if (n_test < 10000) throw PreconditionFailed("test risk needs >= 1e4 samples");
    Rng rng = Rng::keyed(seed, 0x7e57);
    std::vector<double> x(target.d);
    const long chunk = 4096;
    Eigen::MatrixXd pts(target.d, chunk);
    double acc = 0.0;
    long done = 0;
    while (done < n_test) {
        long cnt = std::min(chunk, n_test - done);
        std::vector<double> want(cnt);
        for (long i = 0; i < cnt; ++i) {
            for (int l = 0; l < target.d; ++l) {
                x[l] = rng.uniform();
                pts(l, i) = x[l];
            }
            want[i] = target.value(x) / scale;
        }
        Eigen::MatrixXd out = evaluate_batch(net, pts.leftCols(cnt));
        for (long i = 0; i < cnt; ++i) {
            double pred = std::clamp(out(0, i), -truncation, truncation);
            double dev = pred - want[i];
            acc += dev * dev;
        }
        done += cnt;
    }
    return acc / static_cast<double>(n_test);
}

GridSearchResult grid_search(const Dataset& data, const RFFTarget& target,
                             double target_scale, const TrainConfig& base,
                             const std::vector<double>& etas,
                             const std::vector<double>& lambdas, long n_test,
                             std::uint64_t seed, int act_id_key, int run) {
    if (etas.empty() || lambdas.empty()) {
        throw PreconditionFailed("grid search needs nonempty grids");
    }
    GridSearchResult result;
    result.gen_error = std::numeric_limits<double>::infinity();
    int cell = 0;
    for (double eta : etas) {
        for (double lambda : lambdas) {
            TrainConfig cfg = base;
            cfg.learning_rate = eta;
            cfg.l2_coeff = lambda;
            cfg.init_seed = Rng::keyed(seed, static_cast<std::uint64_t>(act_id_key),
                                       static_cast<std::uint64_t>(data.n),
                                       static_cast<std::uint64_t>(run),
                                       static_cast<std::uint64_t>(cell))
                                .next_u64();
            GridCell entry;
            entry.eta = eta;
            entry.lambda = lambda;
            try {
                TrainResult trained = train_two_layer(data, cfg);
                entry.gen_error = generalization_error(trained.net, target,
                                                       cfg.truncation, n_test,
                                                       seed, target_scale);
                if (entry.gen_error < result.gen_error) {
                    result.gen_error = entry.gen_error;
                    result.eta = eta;
                    result.lambda = lambda;
                    result.net = trained.net;
                }
            } catch (const DivergedLoss&) {
                entry.diverged = true;
                entry.gen_error = std::numeric_limits<double>::quiet_NaN();
            }
            result.table.push_back(entry);
            ++cell;
        }
    }
    if (!std::isfinite(result.gen_error)) {
        throw AllCellsDiverged("every grid cell diverged");
    }
    return result;
}

ExperimentPreset experiment_preset(const std::string& name) {
    ExperimentPreset p;
    if (name == "desk") {
        p.n_ladder = {256, 512, 1024, 2048};
        p.etas = {1e-3, 1e-2};
        p.lambdas = {1e-5, 1e-4, 1e-3, 1e-2};
        return p;
    }
    if (name == "paper") {
        p.d = 5;
        p.kfeat = 50;
        p.width = 6000;
        p.epochs = 50000;
        p.n_ladder = {1024, 1448, 2048, 2896, 4096, 5792};
        p.runs = 5;
        p.etas = {1e-4, 1e-3, 1e-2};
        p.lambdas = {1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1};
        p.normalize_target = false;
        return p;
    }
    throw PreconditionFailed("unknown experiment preset: " + name);
}

ExperimentResult run_separation_experiment(const ExperimentPreset& preset,
                                           std::uint64_t seed, int threads) {
    RFFTarget target = gen_rff_target(preset.d, preset.kfeat,
                                      mix_key(seed, 0x7a69));
    double scale = preset.normalize_target
                       ? std::max(sup_norm_estimate(target, 10000, seed), 1e-9)
                       : 1.0;

    const std::vector<ActKind> acts = {ActKind::ReLU, ActKind::GELU,
                                       ActKind::TanhShifted};
    struct Job {
        ActKind kind;
        long n;
        int run;
    };
    std::vector<Job> jobs;
    for (ActKind kind : acts) {
        for (long n : preset.n_ladder) {
            for (int run = 0; run < preset.runs; ++run) jobs.push_back({kind, n, run});
        }
    }

    std::vector<ExperimentRow> rows(jobs.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            size_t j = next.fetch_add(1);
            if (j >= jobs.size()) return;
            const Job& job = jobs[j];
            Activation act = Activation::make(job.kind);
            // Datasets are shared across activations for a like-for-like sweep.
            Dataset data = gen_dataset(target, job.n, preset.sigma,
                                       Rng::keyed(seed, 0xda7a,
                                                  static_cast<std::uint64_t>(job.n),
                                                  static_cast<std::uint64_t>(job.run))
                                           .next_u64(),
                                       scale);
            TrainConfig base;
            base.width = preset.width;
            base.act = act;
            base.epochs = preset.epochs;
            base.truncation = preset.truncation;
            base.single_precision = preset.single_precision;
            GridSearchResult best = grid_search(data, target, scale, base,
                                                preset.etas, preset.lambdas,
                                                preset.n_test, seed,
                                                act_id(job.kind), job.run);
            rows[j] = ExperimentRow{act.name(), job.n, job.run, best.eta,
                                    best.lambda, best.gen_error};
        }
    };
    int n_threads = std::max(threads, 1);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ExperimentResult result;
    result.rows = rows;
    result.target_scale = scale;
    for (ActKind kind : acts) {
        std::string name = Activation::make(kind).name();
        std::vector<std::pair<double, double>> points;
        for (long n : preset.n_ladder) {
            double sum = 0.0;
            int cnt = 0;
            for (const ExperimentRow& row : rows) {
                if (row.activation == name && row.n == n) {
                    sum += row.gen_error;
                    ++cnt;
                }
            }
            if (cnt > 0) {
                points.emplace_back(static_cast<double>(n),
                                    std::max(sum / cnt, 1e-300));
            }
        }
        LogFit fit = fit_log_slope(points);
        result.summaries.push_back(ExponentSummary{name, -fit.slope, fit.r2});
    }
    return result;
}

}  // namespace apx
