#pragma once

#include "subdiff/errors.hpp"
#include "subdiff/fdm.hpp"
#include "subdiff/neural_field.hpp"
#include "subdiff/problem.hpp"
#include "subdiff/training.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace subdiff {

struct InverseWeights {
    double equation = 1.0;
    double boundary = 2000.0;
    double observation = 1000.0;
    double prior = 100.0;
};

struct InverseConfig {
    NetworkShape solution_net{256, 5};
    NetworkShape coefficient_net{64, 4};
    int residual_batch = 1000;
    int boundary_batch = 4000;
    int observation_batch = 2048;
    int observation_grid = 31;  // nodes per axis inside the observation region
    int prior_grid = 51;        // nodes per axis; its boundary nodes carry the known coefficient
    double noise = 0.001;
    double observation_lower = 0.3;
    double observation_upper = 0.7;
    InverseWeights weights;
    AdamConfig adam;
    long iterations = 150000;
    int stehfest_terms = 4;
    double t1 = 0.01;
    std::uint64_t seed = 1;
    SDistribution s_distribution = SDistribution::Uniform;
    int log_stride = 100;

    [[nodiscard]] Box observation_region(int d) const {
        return {std::vector<double>(d, observation_lower), std::vector<double>(d, observation_upper)};
    }

    void validate(const ProblemSpec& spec) const {
        if (residual_batch < 1 || boundary_batch < 1 || observation_batch < 1)
            throw ContractViolation("InverseConfig: batch sizes must be >= 1");
        if (observation_grid < 2 || prior_grid < 2) throw ContractViolation("InverseConfig: grids need >= 2 nodes per axis");
        if (!(noise >= 0.0)) throw DomainError("InverseConfig: noise level must be >= 0");
        if (!(weights.equation > 0 && weights.boundary > 0 && weights.observation > 0 && weights.prior > 0))
            throw DomainError("InverseConfig: loss weights must be positive");
        for (int k = 0; k < spec.dim; ++k)
            if (!(observation_lower > spec.domain.lower[k] && observation_upper < spec.domain.upper[k] &&
                  observation_lower < observation_upper))
                throw DomainError("InverseConfig: observation region must lie strictly inside the domain");
        if (iterations < 0 || log_stride < 1) throw ContractViolation("InverseConfig: bad iteration settings");
        if (!(t1 > 0.0 && t1 < spec.final_time)) throw DomainError("InverseConfig: need 0 < t1 < T");
    }

    [[nodiscard]] SInterval s_interval(const ProblemSpec& spec) const {
        return SInterval::from(spec.final_time, t1, stehfest_terms);
    }
};

/// Laplace-domain observations h~(x, s) = (1 + eps) u~(x, s) at points inside the observation region.
struct MeasurementSet {
    Eigen::MatrixXd x;  // d x N
    Eigen::VectorXd s;
    Eigen::VectorXd h;

    [[nodiscard]] Eigen::Index size() const { return x.cols(); }
};

/// All nodes of an n^d tensor grid over `box`, axis 0 fastest.
inline Eigen::MatrixXd tensor_points(const Box& box, int n) {
    const int d = box.dim();
    Eigen::Index total = 1;
    for (int k = 0; k < d; ++k) total *= n;
    Eigen::MatrixXd p(d, total);
    for (Eigen::Index f = 0; f < total; ++f) {
        Eigen::Index rem = f;
        for (int k = 0; k < d; ++k) {
            const int i = static_cast<int>(rem % n);
            rem /= n;
            p(k, f) = box.lower[k] + (box.upper[k] - box.lower[k]) * i / (n - 1);
        }
    }
    return p;
}

/// Boundary nodes of an n^d tensor grid over `box`.
inline Eigen::MatrixXd tensor_boundary_points(const Box& box, int n) {
    const Eigen::MatrixXd all = tensor_points(box, n);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index f = 0; f < all.cols(); ++f) {
        for (int k = 0; k < box.dim(); ++k) {
            if (all(k, f) == box.lower[k] || all(k, f) == box.upper[k]) {
                keep.push_back(f);
                break;
            }
        }
    }
    Eigen::MatrixXd out(box.dim(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = all.col(keep[i]);
    return out;
}

using LaplaceSolutionFn = std::function<double(std::span<const double>, double)>;

inline MeasurementSet synthesize_measurements(const ProblemSpec& spec, const LaplaceSolutionFn& exact,
                                              const InverseConfig& cfg, std::mt19937_64& rng) {
    cfg.validate(spec);
    MeasurementSet m;
    m.x = tensor_points(cfg.observation_region(spec.dim), cfg.observation_grid);
    m.s.resize(m.x.cols());
    m.h.resize(m.x.cols());
    CollocationSampler sampler(spec.domain, cfg.s_interval(spec), cfg.s_distribution, rng);
    for (Eigen::Index i = 0; i < m.x.cols(); ++i) {
        m.s(i) = sampler.sample_s();
        m.h(i) = (1.0 + cfg.noise) * exact(std::span<const double>(m.x.col(i).data(), spec.dim), m.s(i));
    }
    rng = sampler.rng();
    return m;
}

/// Known coefficient on the domain boundary.
struct PriorSet {
    Eigen::MatrixXd x;
    Eigen::VectorXd a;
};

inline PriorSet make_prior(const ProblemSpec& spec, int grid) {
    PriorSet p;
    p.x = tensor_boundary_points(spec.domain, grid);
    p.a.resize(p.x.cols());
    std::vector<double> g(spec.dim);
    for (Eigen::Index i = 0; i < p.x.cols(); ++i)
        p.a(i) = spec.diffusion_at(std::span<const double>(p.x.col(i).data(), spec.dim), g);
    return p;
}

struct InverseLoss {
    double total = 0.0;
    double equation = 0.0;
    double boundary = 0.0;
    double observation = 0.0;
    double prior = 0.0;
};

/// Network outputs (or closed-form stand-ins) at every point set the inverse loss reads.
struct InverseBundles {
    BundleBatch u_interior;      // order 2 at residual points
    BundleBatch a_interior;      // order 1 at residual points
    Eigen::VectorXd u_boundary;  // at boundary points
    Eigen::VectorXd u_observed;  // at the measurement mini-batch
    Eigen::VectorXd a_prior;     // at prior points
};

struct InverseAdjoints {
    BundleBatch u_interior, a_interior;
    Eigen::VectorXd u_boundary, u_observed, a_prior;
};

/**
 * Sum of r_ip^2 over the given residual points, where r_ip is the Laplace
 * residual with the coefficient network's value and gradient in the divergence
 * term. When the adjoint pointers are set they receive d(w_eq mean r_ip^2)/dbundle
 * for a mean over `n_total` points.
 */
inline double inverse_interior_terms(const ProblemSpec& spec, double w_eq, const Eigen::Ref<const Eigen::MatrixXd>& x,
                                     const Eigen::Ref<const Eigen::VectorXd>& s, const BundleBatch& u, const BundleBatch& a,
                                     Eigen::Index n_total, BundleBatch* u_adj = nullptr, BundleBatch* a_adj = nullptr) {
    const int d = spec.dim;
    const Eigen::Index n = x.cols();
    if (u_adj) {
        u_adj->value.resize(n);
        u_adj->gradient.resize(d, n);
        u_adj->second.resize(d, n);
    }
    if (a_adj) {
        a_adj->value.resize(n);
        a_adj->gradient.resize(d, n);
        a_adj->second.resize(0, 0);
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::span<const double> xi(x.col(i).data(), d);
        const double s_alpha = std::pow(s(i), spec.alpha);
        const double c = spec.reaction(xi);
        const double rhs = laplace_rhs(spec, xi, s(i));
        const double av = a.value(i);
        double div = 0.0, lap = 0.0;
        for (int k = 0; k < d; ++k) {
            div += av * u.second(k, i) + a.gradient(k, i) * u.gradient(k, i);
            lap += u.second(k, i);
        }
        const double r = s_alpha * u.value(i) - div - c * u.value(i) - rhs;
        sum += r * r;
        const double rbar = 2.0 * w_eq * r / static_cast<double>(n_total);
        if (u_adj) {
            u_adj->value(i) = rbar * (s_alpha - c);
            for (int k = 0; k < d; ++k) {
                u_adj->gradient(k, i) = -rbar * a.gradient(k, i);
                u_adj->second(k, i) = -rbar * av;
            }
        }
        if (a_adj) {
            a_adj->value(i) = -rbar * lap;
            for (int k = 0; k < d; ++k) a_adj->gradient(k, i) = -rbar * u.gradient(k, i);
        }
    }
    return sum;
}

/**
 * total = w_eq mean(r_ip^2) + w_bd mean(u_bd^2) + w_obs mean((u - h)^2) + w_prior mean((a_nn - a)^2).
 * Fills `adj` with dtotal/dbundles when given.
 */
inline InverseLoss inverse_loss_from_bundles(const ProblemSpec& spec, const InverseWeights& w, const CollocationBatch& batch,
                                             const Eigen::VectorXd& observed_h, const Eigen::VectorXd& prior_a,
                                             const InverseBundles& b, InverseAdjoints* adj = nullptr) {
    const Eigen::Index nr = batch.interior_x.cols();
    const Eigen::Index nb = b.u_boundary.size();
    const Eigen::Index no = b.u_observed.size();
    const Eigen::Index np = b.a_prior.size();
    if (nr == 0 || nb == 0 || no == 0 || np == 0) throw DomainError("inverse_loss: empty batch");

    InverseLoss loss;
    loss.equation = inverse_interior_terms(spec, w.equation, batch.interior_x, batch.interior_s, b.u_interior,
                                           b.a_interior, nr, adj ? &adj->u_interior : nullptr,
                                           adj ? &adj->a_interior : nullptr) /
                    static_cast<double>(nr);
    check_finite(loss.equation, "L_eq");

    loss.boundary = b.u_boundary.squaredNorm() / static_cast<double>(nb);
    check_finite(loss.boundary, "L_bd");
    const Eigen::VectorXd obs_err = b.u_observed - observed_h;
    loss.observation = obs_err.squaredNorm() / static_cast<double>(no);
    check_finite(loss.observation, "L_obs");
    const Eigen::VectorXd prior_err = b.a_prior - prior_a;
    loss.prior = prior_err.squaredNorm() / static_cast<double>(np);
    check_finite(loss.prior, "L_prior");

    loss.total = w.equation * loss.equation + w.boundary * loss.boundary + w.observation * loss.observation +
                 w.prior * loss.prior;
    if (adj) {
        adj->u_boundary = (2.0 * w.boundary / static_cast<double>(nb)) * b.u_boundary;
        adj->u_observed = (2.0 * w.observation / static_cast<double>(no)) * obs_err;
        adj->a_prior = (2.0 * w.prior / static_cast<double>(np)) * prior_err;
    }
    return loss;
}

/// Observation mini-batch and prior points for one loss evaluation.
struct InverseBatch {
    CollocationBatch collocation;
    MeasurementSet observed;
    PriorSet prior;
};

/// Buffers reused across inverse_loss calls.
struct InverseWorkspace {
    Eigen::Index chunk = LossWorkspace::kDefaultChunk;
    FieldTape u_tape, a_tape;
    BundleBatch u_adj, a_adj;
};

namespace detail {
// mean((v - target)^2) over a value-only pass in chunks (target 0 when absent);
// backpropagates 2 w (v - target) / n when grad is set.
inline double squared_value_terms(const NeuralField& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& s,
                                  const Eigen::VectorXd* target, double w, Eigen::VectorXd* grad, InverseWorkspace& ws,
                                  const char* term) {
    const Eigen::Index n = x.cols();
    double sum = 0.0;
    for (Eigen::Index c0 = 0; c0 < n; c0 += ws.chunk) {
        const Eigen::Index len = std::min(ws.chunk, n - c0);
        net.forward_into(ws.u_tape, x.middleCols(c0, len), net.laplace_input() ? s.segment(c0, len) : s.head(0),
                         DerivativeOrder::Value);
        Eigen::VectorXd err = ws.u_tape.outputs().value;
        if (target) err -= target->segment(c0, len);
        sum += err.squaredNorm();
        check_finite(sum, term);
        if (grad) {
            ws.u_adj.value = (2.0 * w / static_cast<double>(n)) * err;
            ws.u_adj.gradient.resize(0, 0);
            ws.u_adj.second.resize(0, 0);
            ws.u_tape.backward(ws.u_adj, *grad);
        }
    }
    return sum / static_cast<double>(n);
}
}  // namespace detail

/// Loss of the two networks; gradients (overwritten) when the pointers are non-null.
inline InverseLoss inverse_loss(const NeuralField& u_net, const NeuralField& a_net, const ProblemSpec& spec,
                                const InverseWeights& w, const InverseBatch& batch, Eigen::VectorXd* u_grad,
                                Eigen::VectorXd* a_grad, InverseWorkspace& ws) {
    if (a_net.laplace_input() || a_net.spatial_dim() != spec.dim)
        throw ContractViolation("inverse_loss: coefficient network takes x only");
    if (!u_net.laplace_input() || u_net.spatial_dim() != spec.dim)
        throw ContractViolation("inverse_loss: solution network takes (x, s)");
    const CollocationBatch& cb = batch.collocation;
    const Eigen::Index nr = cb.interior_x.cols();
    if (nr == 0 || cb.boundary_x.cols() == 0 || batch.observed.size() == 0 || batch.prior.x.cols() == 0)
        throw DomainError("inverse_loss: empty batch");
    if (ws.chunk < 1) throw ContractViolation("inverse_loss: chunk must be >= 1");
    if (u_grad) u_grad->setZero(u_net.num_parameters());
    if (a_grad) a_grad->setZero(a_net.num_parameters());

    InverseLoss loss;
    const Eigen::VectorXd none;
    for (Eigen::Index c0 = 0; c0 < nr; c0 += ws.chunk) {
        const Eigen::Index len = std::min(ws.chunk, nr - c0);
        const auto x = cb.interior_x.middleCols(c0, len);
        u_net.forward_into(ws.u_tape, x, cb.interior_s.segment(c0, len), DerivativeOrder::Second);
        a_net.forward_into(ws.a_tape, x, none, DerivativeOrder::Gradient);
        loss.equation += inverse_interior_terms(spec, w.equation, x, cb.interior_s.segment(c0, len), ws.u_tape.outputs(),
                                                ws.a_tape.outputs(), nr, u_grad ? &ws.u_adj : nullptr,
                                                a_grad ? &ws.a_adj : nullptr);
        check_finite(loss.equation, "L_eq");
        if (u_grad) ws.u_tape.backward(ws.u_adj, *u_grad);
        if (a_grad) ws.a_tape.backward(ws.a_adj, *a_grad);
    }
    loss.equation /= static_cast<double>(nr);

    loss.boundary = detail::squared_value_terms(u_net, cb.boundary_x, cb.boundary_s, nullptr, w.boundary, u_grad, ws, "L_bd");
    loss.observation = detail::squared_value_terms(u_net, batch.observed.x, batch.observed.s, &batch.observed.h,
                                                   w.observation, u_grad, ws, "L_obs");
    loss.prior = detail::squared_value_terms(a_net, batch.prior.x, none, &batch.prior.a, w.prior, a_grad, ws, "L_prior");

    loss.total = w.equation * loss.equation + w.boundary * loss.boundary + w.observation * loss.observation +
                 w.prior * loss.prior;
    if (u_grad && !u_grad->allFinite()) throw TrainingDivergence("solution-network gradient");
    if (a_grad && !a_grad->allFinite()) throw TrainingDivergence("coefficient-network gradient");
    return loss;
}

inline InverseLoss inverse_loss(const NeuralField& u_net, const NeuralField& a_net, const ProblemSpec& spec,
                                const InverseWeights& w, const InverseBatch& batch, Eigen::VectorXd* u_grad = nullptr,
                                Eigen::VectorXd* a_grad = nullptr) {
    InverseWorkspace ws;
    return inverse_loss(u_net, a_net, spec, w, batch, u_grad, a_grad, ws);
}

/// The same loss with the exact (u~, a) pair standing in for both networks.
inline InverseLoss exact_pair_loss(const ProblemSpec& spec, const InverseWeights& w, const InverseBatch& batch) {
    if (!spec.exact_laplace) throw ContractViolation("exact_pair_loss: problem has no closed-form solution");
    const ExactLaplaceSolution& ex = *spec.exact_laplace;
    const int d = spec.dim;
    const CollocationBatch& cb = batch.collocation;
    InverseBundles b;
    b.u_interior = BundleBatch::zeros(d, cb.interior_x.cols(), DerivativeOrder::Second);
    b.a_interior = BundleBatch::zeros(d, cb.interior_x.cols(), DerivativeOrder::Gradient);
    std::vector<double> g(d);
    for (Eigen::Index i = 0; i < cb.interior_x.cols(); ++i) {
        const std::span<const double> x(cb.interior_x.col(i).data(), d);
        const DerivativeBundle u = ex.derivatives(x, cb.interior_s(i));
        b.u_interior.value(i) = u.value;
        b.a_interior.value(i) = spec.diffusion_at(x, g);
        for (int k = 0; k < d; ++k) {
            b.u_interior.gradient(k, i) = u.gradient[k];
            b.u_interior.second(k, i) = u.second[k];
            b.a_interior.gradient(k, i) = g[k];
        }
    }
    auto values = [&](const Eigen::MatrixXd& x, const Eigen::VectorXd& s) {
        Eigen::VectorXd v(x.cols());
        for (Eigen::Index i = 0; i < x.cols(); ++i) v(i) = ex.value(std::span<const double>(x.col(i).data(), d), s(i));
        return v;
    };
    b.u_boundary = values(cb.boundary_x, cb.boundary_s);
    b.u_observed = values(batch.observed.x, batch.observed.s);
    b.a_prior.resize(batch.prior.x.cols());
    for (Eigen::Index i = 0; i < batch.prior.x.cols(); ++i)
        b.a_prior(i) = spec.diffusion_at(std::span<const double>(batch.prior.x.col(i).data(), d), g);
    return inverse_loss_from_bundles(spec, w, cb, batch.observed.h, batch.prior.a, b);
}

struct InverseTrainResult {
    NeuralField u_net;
    NeuralField a_net;
    std::vector<LossRecord> history;
    MeasurementSet measurements;
};

/// Draws the per-iteration batches: fresh collocation points and an observation mini-batch.
class InverseSampler {
public:
    InverseSampler(const ProblemSpec& spec, const InverseConfig& cfg, const MeasurementSet& measurements, PriorSet prior)
        : cfg_(cfg),
          measurements_(measurements),
          prior_(std::move(prior)),
          sampler_(spec.domain, cfg.s_interval(spec), cfg.s_distribution, make_stream(cfg.seed, streams::kSampler)),
          order_(static_cast<std::size_t>(measurements.size())) {
        std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    }

    InverseBatch next() {
        InverseBatch b;
        b.collocation = sampler_.next(cfg_.residual_batch, cfg_.boundary_batch);
        b.prior = prior_;
        const Eigen::Index n = measurements_.size();
        if (cfg_.observation_batch >= n) {
            b.observed = measurements_;
        } else {
            // Partial Fisher-Yates: first k entries form a uniform sample without replacement.
            const auto k = static_cast<std::size_t>(cfg_.observation_batch);
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, order_.size() - 1);
                std::swap(order_[i], order_[pick(sampler_.rng())]);
            }
            const int d = static_cast<int>(measurements_.x.rows());
            b.observed.x.resize(d, static_cast<Eigen::Index>(k));
            b.observed.s.resize(static_cast<Eigen::Index>(k));
            b.observed.h.resize(static_cast<Eigen::Index>(k));
            for (std::size_t i = 0; i < k; ++i) {
                const auto j = order_[i];
                b.observed.x.col(static_cast<Eigen::Index>(i)) = measurements_.x.col(j);
                b.observed.s(static_cast<Eigen::Index>(i)) = measurements_.s(j);
                b.observed.h(static_cast<Eigen::Index>(i)) = measurements_.h(j);
            }
        }
        return b;
    }

private:
    const InverseConfig& cfg_;
    const MeasurementSet& measurements_;
    PriorSet prior_;
    CollocationSampler sampler_;
    std::vector<Eigen::Index> order_;
};

inline InverseTrainResult train_inverse(const ProblemSpec& spec, const InverseConfig& cfg, const ProgressFn& progress = {}) {
    spec.validate();
    cfg.validate(spec);
    if (!spec.exact_laplace) throw ContractViolation("train_inverse: synthetic measurements need a closed-form solution");
    const ExactLaplaceSolution& ex = *spec.exact_laplace;
    std::mt19937_64 mrng = make_stream(cfg.seed, streams::kMeasurements);
    InverseTrainResult result{
        NeuralField({spec.dim, true, cfg.solution_net.hidden()}, derive_seed(cfg.seed, streams::kInitSolution)),
        NeuralField({spec.dim, false, cfg.coefficient_net.hidden()}, derive_seed(cfg.seed, streams::kInitCoefficient)),
        {},
        synthesize_measurements(spec, [&ex](std::span<const double> x, double s) { return ex.value(x, s); }, cfg, mrng)};

    InverseSampler sampler(spec, cfg, result.measurements, make_prior(spec, cfg.prior_grid));
    Adam u_opt(result.u_net.num_parameters(), cfg.adam);
    Adam a_opt(result.a_net.num_parameters(), cfg.adam);
    Eigen::VectorXd ug, ag;
    InverseWorkspace ws;
    for (long it = 0; it < cfg.iterations; ++it) {
        const InverseBatch batch = sampler.next();
        InverseLoss loss;
        try {
            loss = inverse_loss(result.u_net, result.a_net, spec, cfg.weights, batch, &ug, &ag, ws);
        } catch (const TrainingDivergence& e) {
            throw TrainingDivergence(e.term(), it);
        }
        if (it % cfg.log_stride == 0 || it + 1 == cfg.iterations) {
            result.history.push_back({it, loss.total, loss.equation, loss.boundary, loss.observation, loss.prior});
            if (progress) progress(result.history.back());
        }
        u_opt.step(result.u_net.parameters(), ug);
        a_opt.step(result.a_net.parameters(), ag);
    }
    return result;
}

/// Relative l2 error of the coefficient network against the true a(x) on an n^d grid over `region`.
inline double coefficient_error(const NeuralField& a_net, const ProblemSpec& spec, const Box& region, int n) {
    const Eigen::MatrixXd pts = tensor_points(region, n);
    const Eigen::VectorXd pred = eval_batch(a_net, pts, Eigen::VectorXd());
    Eigen::VectorXd truth(pts.cols());
    std::vector<double> g(spec.dim);
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
        truth(i) = spec.diffusion_at(std::span<const double>(pts.col(i).data(), spec.dim), g);
    return relative_l2(truth, pred);
}

}  // namespace subdiff
