#pragma once

#include "subdiff/errors.hpp"
#include "subdiff/laplace.hpp"
#include "subdiff/neural_field.hpp"
#include "subdiff/problem.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace subdiff {

/// Independent, reproducible stream derived from a master seed.
inline std::mt19937_64 make_stream(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
    return std::mt19937_64(seq);
}

namespace streams {
inline constexpr std::uint64_t kInitSolution = 1;
inline constexpr std::uint64_t kInitCoefficient = 2;
inline constexpr std::uint64_t kSampler = 3;
inline constexpr std::uint64_t kMeasurements = 4;
}  // namespace streams

inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id) {
    return make_stream(master_seed, stream_id)();
}

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam; one instance per parameter vector.
class Adam {
public:
    Adam(Eigen::Index n, AdamConfig cfg = {}) : cfg_(cfg), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

    void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad) {
        if (grad.size() != m_.size() || params.size() != m_.size()) throw ContractViolation("Adam: size mismatch");
        ++t_;
        pow1_ *= cfg_.beta1;
        pow2_ *= cfg_.beta2;
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 / (1.0 - pow1_);
        const double c2 = 1.0 / (1.0 - pow2_);
        params.array() -= cfg_.learning_rate * (m_.array() * c1) / ((v_.array() * c2).sqrt() + cfg_.epsilon);
    }

    [[nodiscard]] long steps() const { return t_; }
    [[nodiscard]] const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    Eigen::VectorXd m_, v_;
    double pow1_ = 1.0, pow2_ = 1.0;
    long t_ = 0;
};

/// Training range of the Laplace variable: [ln2 / T, M ln2 / t1].
struct SInterval {
    double min = 0.0;
    double max = 0.0;

    static SInterval from(double final_time, double t1, int stehfest_terms) {
        if (!(t1 > 0.0 && t1 < final_time)) throw DomainError("SInterval: need 0 < t1 < T");
        return {std::numbers::ln2 / final_time, std::numbers::ln2 / t1 * stehfest_terms};
    }

    [[nodiscard]] bool contains(double s, double rel_tol = 1e-12) const {
        return s >= min * (1.0 - rel_tol) && s <= max * (1.0 + rel_tol);
    }
};

enum class SDistribution { Uniform, LogUniform };

struct NetworkShape {
    int width = 256;
    int depth = 5;  // hidden layers

    [[nodiscard]] std::vector<int> hidden() const { return std::vector<int>(static_cast<std::size_t>(depth), width); }

    friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

struct TrainConfig {
    NetworkShape network;
    int residual_batch = 1000;
    int boundary_batch = 1600;
    ForwardWeights weights;
    AdamConfig adam;
    long iterations = 120000;
    int stehfest_terms = 4;
    double t1 = 0.01;
    std::uint64_t seed = 1;
    SDistribution s_distribution = SDistribution::Uniform;
    int log_stride = 100;

    void validate(const ProblemSpec& spec) const {
        if (residual_batch < 1 || boundary_batch < 1) throw ContractViolation("TrainConfig: batch sizes must be >= 1");
        if (network.width < 1 || network.depth < 1) throw ContractViolation("TrainConfig: network must have a hidden layer");
        if (iterations < 0) throw ContractViolation("TrainConfig: iterations must be >= 0");
        if (log_stride < 1) throw ContractViolation("TrainConfig: log stride must be >= 1");
        if (stehfest_terms % 2 != 0 || stehfest_terms < 2) throw DomainError("TrainConfig: Stehfest M must be even");
        if (!(t1 > 0.0 && t1 < spec.final_time)) throw DomainError("TrainConfig: need 0 < t1 < T");
    }

    [[nodiscard]] SInterval s_interval(const ProblemSpec& spec) const {
        return SInterval::from(spec.final_time, t1, stehfest_terms);
    }
};

/// Draws (x, s) pairs: x uniform in the box or on its boundary, s on the training interval.
class CollocationSampler {
public:
    CollocationSampler(const Box& box, SInterval interval, SDistribution dist, std::mt19937_64 rng)
        : box_(box), interval_(interval), dist_(dist), rng_(std::move(rng)) {
        const int d = box_.dim();
        std::vector<double> area;
        for (int k = 0; k < d; ++k) {
            double a = 1.0;
            for (int j = 0; j < d; ++j)
                if (j != k) a *= box_.upper[j] - box_.lower[j];
            area.push_back(a);
            area.push_back(a);
        }
        faces_ = std::discrete_distribution<int>(area.begin(), area.end());
    }

    double sample_s() {
        const double u = unit_(rng_);
        if (dist_ == SDistribution::LogUniform)
            return std::exp(std::log(interval_.min) + u * (std::log(interval_.max) - std::log(interval_.min)));
        return interval_.min + u * (interval_.max - interval_.min);
    }

    void interior(Eigen::Ref<Eigen::MatrixXd> x, Eigen::Ref<Eigen::VectorXd> s) {
        for (Eigen::Index i = 0; i < x.cols(); ++i) {
            for (int k = 0; k < box_.dim(); ++k) x(k, i) = box_.lower[k] + unit_(rng_) * (box_.upper[k] - box_.lower[k]);
            s(i) = sample_s();
        }
    }

    void boundary(Eigen::Ref<Eigen::MatrixXd> x, Eigen::Ref<Eigen::VectorXd> s) {
        for (Eigen::Index i = 0; i < x.cols(); ++i) {
            const int face = faces_(rng_);
            const int axis = face / 2;
            for (int k = 0; k < box_.dim(); ++k) {
                if (k == axis)
                    x(k, i) = face % 2 == 0 ? box_.lower[k] : box_.upper[k];
                else
                    x(k, i) = box_.lower[k] + unit_(rng_) * (box_.upper[k] - box_.lower[k]);
            }
            s(i) = sample_s();
        }
    }

    CollocationBatch next(int n_interior, int n_boundary) {
        const int d = box_.dim();
        CollocationBatch b;
        b.interior_x.resize(d, n_interior);
        b.interior_s.resize(n_interior);
        b.boundary_x.resize(d, n_boundary);
        b.boundary_s.resize(n_boundary);
        interior(b.interior_x, b.interior_s);
        boundary(b.boundary_x, b.boundary_s);
        return b;
    }

    std::mt19937_64& rng() { return rng_; }

private:
    Box box_;
    SInterval interval_;
    SDistribution dist_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
    std::discrete_distribution<int> faces_;
};

inline CollocationBatch sample_batch(const ProblemSpec& spec, const TrainConfig& cfg, std::mt19937_64& rng) {
    cfg.validate(spec);
    CollocationSampler sampler(spec.domain, cfg.s_interval(spec), cfg.s_distribution, rng);
    CollocationBatch b = sampler.next(cfg.residual_batch, cfg.boundary_batch);
    rng = sampler.rng();
    return b;
}

struct LossRecord {
    long iteration = 0;
    double total = 0.0;
    double equation = 0.0;
    double boundary = 0.0;
    double observation = std::numeric_limits<double>::quiet_NaN();
    double prior = std::numeric_limits<double>::quiet_NaN();
};

struct ForwardTrainResult {
    NeuralField net;
    std::vector<LossRecord> history;
};

using ProgressFn = std::function<void(const LossRecord&)>;

inline NeuralField make_solution_net(const ProblemSpec& spec, const TrainConfig& cfg) {
    return NeuralField({spec.dim, true, cfg.network.hidden()}, derive_seed(cfg.seed, streams::kInitSolution));
}

/// Adam on the forward loss with a fresh collocation batch every iteration.
inline ForwardTrainResult train_forward(const ProblemSpec& spec, const TrainConfig& cfg, const ProgressFn& progress = {}) {
    spec.validate();
    cfg.validate(spec);
    ForwardTrainResult result{make_solution_net(spec, cfg), {}};
    NeuralField& net = result.net;
    CollocationSampler sampler(spec.domain, cfg.s_interval(spec), cfg.s_distribution,
                               make_stream(cfg.seed, streams::kSampler));
    Adam adam(net.num_parameters(), cfg.adam);
    Eigen::VectorXd grad;
    LossWorkspace ws;
    for (long it = 0; it < cfg.iterations; ++it) {
        const CollocationBatch batch = sampler.next(cfg.residual_batch, cfg.boundary_batch);
        ForwardLoss loss;
        try {
            loss = forward_loss(net, spec, batch, cfg.weights, &grad, ws);
        } catch (const TrainingDivergence& e) {
            throw TrainingDivergence(e.term(), it);
        }
        if (it % cfg.log_stride == 0 || it + 1 == cfg.iterations) {
            result.history.push_back({it, loss.total, loss.equation, loss.boundary});
            if (progress) progress(result.history.back());
        }
        adam.step(net.parameters(), grad);
    }
    return result;
}

/// Range of times a trained Laplace-domain model can be inverted at.
struct TimeWindow {
    double t1 = 0.01;
    double final_time = 1.0;
};

/// Batched transform: (x: d x N, s: N) -> N values.
using BatchTransform = std::function<Eigen::VectorXd(const Eigen::MatrixXd&, const Eigen::VectorXd&)>;

/**
 * u(x, t) = (ln2 / t) sum_i mu_i u~(x, i ln2 / t) for every point column and time.
 * Returns a points x times matrix. Times outside [t1, T] are refused.
 */
inline Eigen::MatrixXd reconstruct(const BatchTransform& transform, const Eigen::MatrixXd& points,
                                   const std::vector<double>& times, const StehfestRule& rule, const TimeWindow& window) {
    const Eigen::Index p = points.cols();
    const int m = rule.terms();
    Eigen::MatrixXd out(p, static_cast<Eigen::Index>(times.size()));
    for (std::size_t j = 0; j < times.size(); ++j) {
        const double t = times[j];
        if (!(t >= window.t1 * (1.0 - 1e-12) && t <= window.final_time * (1.0 + 1e-12)))
            throw OutOfTrainedRange("reconstruct: t=" + std::to_string(t) + " outside trained range [" +
                                    std::to_string(window.t1) + ", " + std::to_string(window.final_time) + "]");
        const std::vector<double> nodes = rule.nodes(t);
        Eigen::MatrixXd x(points.rows(), p * m);
        Eigen::VectorXd s(p * m);
        for (int i = 0; i < m; ++i) {
            x.middleCols(i * p, p) = points;
            s.segment(i * p, p).setConstant(nodes[i]);
        }
        const Eigen::VectorXd v = transform(x, s);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
        for (int i = 0; i < m; ++i) acc += rule.coefficients()[i] * v.segment(i * p, p);
        out.col(static_cast<Eigen::Index>(j)) = (std::numbers::ln2 / t) * acc;
    }
    return out;
}

inline Eigen::MatrixXd reconstruct(const NeuralField& net, const Eigen::MatrixXd& points, const std::vector<double>& times,
                                   const StehfestRule& rule, const TimeWindow& window) {
    return reconstruct([&net](const Eigen::MatrixXd& x, const Eigen::VectorXd& s) { return eval_batch(net, x, s); },
                       points, times, rule, window);
}

}  // namespace subdiff
