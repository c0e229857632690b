#pragma once

#include "subdiff/errors.hpp"
#include "subdiff/laplace.hpp"
#include "subdiff/neural_field.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace subdiff {

using ScalarField = std::function<double(std::span<const double>)>;
/// Returns a(x) and writes grad a(x) into the second argument (length d).
using CoefficientField = std::function<double(std::span<const double>, std::span<double>)>;

/// A * prod_k sin(w_k pi x_k) on the unit box; vanishes on its boundary for integer w_k.
struct SineProduct {
    double amplitude = 1.0;
    std::vector<double> wavenumbers;

    [[nodiscard]] int dim() const { return static_cast<int>(wavenumbers.size()); }

    [[nodiscard]] double value(std::span<const double> x) const {
        double v = amplitude;
        for (int k = 0; k < dim(); ++k) v *= std::sin(wavenumbers[k] * std::numbers::pi * x[k]);
        return v;
    }

    /// pi^2 |w|^2, so that Laplacian(phi) = -eigenvalue() * phi.
    [[nodiscard]] double eigenvalue() const {
        double e = 0.0;
        for (double w : wavenumbers) e += w * w;
        return std::numbers::pi * std::numbers::pi * e;
    }

    [[nodiscard]] DerivativeBundle derivatives(std::span<const double> x) const {
        const int d = dim();
        std::vector<double> sn(d), cs(d);
        for (int k = 0; k < d; ++k) {
            sn[k] = std::sin(wavenumbers[k] * std::numbers::pi * x[k]);
            cs[k] = std::cos(wavenumbers[k] * std::numbers::pi * x[k]);
        }
        DerivativeBundle b;
        b.value = amplitude;
        for (int k = 0; k < d; ++k) b.value *= sn[k];
        b.gradient.assign(d, 0.0);
        b.second.assign(d, 0.0);
        for (int k = 0; k < d; ++k) {
            double rest = amplitude;
            for (int j = 0; j < d; ++j)
                if (j != k) rest *= sn[j];
            const double w = wavenumbers[k] * std::numbers::pi;
            b.gradient[k] = rest * w * cs[k];
            b.second[k] = -w * w * b.value;
        }
        return b;
    }

    [[nodiscard]] ScalarField as_field() const {
        return [p = *this](std::span<const double> x) { return p.value(x); };
    }
};

struct SeparableTerm {
    ScalarField spatial;
    TimeProfile profile;
};

struct Box {
    std::vector<double> lower;
    std::vector<double> upper;

    static Box unit(int d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }
    [[nodiscard]] int dim() const { return static_cast<int>(lower.size()); }
    [[nodiscard]] bool contains(std::span<const double> x) const {
        for (int k = 0; k < dim(); ++k)
            if (x[k] < lower[k] || x[k] > upper[k]) return false;
        return true;
    }
};

/// Closed-form Laplace-domain solution sum_j phi_j(x) g_j(s).
struct ExactLaplaceSolution {
    struct Mode {
        SineProduct shape;
        std::function<double(double)> transform;
    };
    std::vector<Mode> modes;

    [[nodiscard]] double value(std::span<const double> x, double s) const {
        double v = 0.0;
        for (const Mode& m : modes) v += m.shape.value(x) * m.transform(s);
        return v;
    }

    [[nodiscard]] DerivativeBundle derivatives(std::span<const double> x, double s) const {
        DerivativeBundle out;
        out.gradient.assign(x.size(), 0.0);
        out.second.assign(x.size(), 0.0);
        for (const Mode& m : modes) {
            const double g = m.transform(s);
            const DerivativeBundle b = m.shape.derivatives(x);
            out.value += b.value * g;
            for (std::size_t k = 0; k < x.size(); ++k) {
                out.gradient[k] += b.gradient[k] * g;
                out.second[k] += b.second[k] * g;
            }
        }
        return out;
    }
};

/// Separable time-domain solution sum_j phi_j(x) p_j(t), when a problem is manufactured.
struct ExactTimeSolution {
    struct Mode {
        SineProduct shape;
        TimeProfile profile;
    };
    std::vector<Mode> modes;

    [[nodiscard]] double value(std::span<const double> x, double t) const {
        double v = 0.0;
        for (const Mode& m : modes) v += m.shape.value(x) * m.profile.value_at(t);
        return v;
    }
};

/**
 * Caputo subdiffusion problem on a box with homogeneous Dirichlet data:
 *   d^alpha u = div(a grad u) + c u + f,  u(x, 0) = u0(x),  u = 0 on the boundary.
 */
struct ProblemSpec {
    std::string name;
    int dim = 1;
    Box domain = Box::unit(1);
    double alpha = 0.5;
    double final_time = 1.0;
    CoefficientField diffusion;
    ScalarField reaction;
    ScalarField initial;
    std::vector<SeparableTerm> source;
    std::optional<ExactLaplaceSolution> exact_laplace;
    std::optional<ExactTimeSolution> exact_time;

    void validate() const {
        if (dim < 1 || dim > 3) throw ContractViolation("ProblemSpec: dimension must be 1, 2 or 3");
        if (domain.dim() != dim || static_cast<int>(domain.upper.size()) != dim)
            throw ContractViolation("ProblemSpec: domain dimension mismatch");
        for (int k = 0; k < dim; ++k)
            if (!(domain.lower[k] < domain.upper[k])) throw ContractViolation("ProblemSpec: empty box side");
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("ProblemSpec: alpha must lie in (0, 1)");
        if (!(final_time > 0.0)) throw DomainError("ProblemSpec: final time must be positive");
        if (!diffusion || !reaction || !initial) throw ContractViolation("ProblemSpec: coefficient fields missing");
    }

    [[nodiscard]] double diffusion_at(std::span<const double> x, std::span<double> grad) const {
        const double a = diffusion(x, grad);
        if (!(a > 0.0)) throw DomainError("ProblemSpec: diffusion coefficient must be positive");
        return a;
    }

    [[nodiscard]] double source_at(std::span<const double> x, double t) const {
        double f = 0.0;
        for (const SeparableTerm& term : source) f += term.spatial(x) * term.profile.value_at(t);
        return f;
    }
};

/// F(x, s) = s^(alpha-1) u0(x) + f~(x, s).
inline double laplace_rhs(const ProblemSpec& spec, std::span<const double> x, double s) {
    if (!(s > 0.0)) throw DomainError("laplace_rhs: s must be positive");
    double f = std::pow(s, spec.alpha - 1.0) * spec.initial(x);
    for (const SeparableTerm& term : spec.source) f += term.spatial(x) * term.profile.laplace(s);
    return f;
}

/// Problem data at one collocation point, everything the residual needs except the network.
struct PointData {
    double s_alpha = 0.0;
    double diffusion = 0.0;
    std::array<double, 3> diffusion_grad{};
    double reaction = 0.0;
    double rhs = 0.0;
};

inline PointData point_data(const ProblemSpec& spec, std::span<const double> x, double s) {
    PointData p;
    p.s_alpha = std::pow(s, spec.alpha);
    p.diffusion = spec.diffusion_at(x, std::span<double>(p.diffusion_grad.data(), x.size()));
    p.reaction = spec.reaction(x);
    p.rhs = laplace_rhs(spec, x, s);
    return p;
}

/// r = s^alpha u - (a Lap u + grad a . grad u) - c u - F, given u's bundle and the diffusion value/gradient.
inline double residual_from_bundle(double s_alpha, double rhs, double reaction, double a, std::span<const double> grad_a,
                                   double value, std::span<const double> grad, std::span<const double> second) {
    double div = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) div += a * second[k] + grad_a[k] * grad[k];
    return s_alpha * value - div - reaction * value - rhs;
}

inline double residual_from_bundle(const ProblemSpec& spec, std::span<const double> x, double s,
                                   const DerivativeBundle& u) {
    const PointData p = point_data(spec, x, s);
    return residual_from_bundle(p.s_alpha, p.rhs, p.reaction, p.diffusion,
                                std::span<const double>(p.diffusion_grad.data(), x.size()), u.value, u.gradient,
                                u.second);
}

inline double laplace_residual(const NeuralField& net, const ProblemSpec& spec, std::span<const double> x, double s) {
    if (net.spatial_dim() != spec.dim || !net.laplace_input())
        throw ContractViolation("laplace_residual: network must take (x, s) with x of the problem dimension");
    return residual_from_bundle(spec, x, s, net.spatial_derivatives(x, s));
}

/// Residual points (x, s) in the interior and boundary points (x, s) on the box boundary.
struct CollocationBatch {
    Eigen::MatrixXd interior_x;  // d x N_r
    Eigen::VectorXd interior_s;
    Eigen::MatrixXd boundary_x;  // d x N_bd
    Eigen::VectorXd boundary_s;
};

struct ForwardWeights {
    double equation = 1.0;
    double boundary = 2000.0;
};

struct ForwardLoss {
    double total = 0.0;
    double equation = 0.0;
    double boundary = 0.0;
};

inline void check_finite(double v, const char* term) {
    if (!std::isfinite(v)) throw TrainingDivergence(term);
}

/// Buffers reused across forward_loss calls; the loss is evaluated in column chunks that stay cache resident.
struct LossWorkspace {
    static constexpr Eigen::Index kDefaultChunk = 32;
    Eigen::Index chunk = kDefaultChunk;
    FieldTape tape;
    BundleBatch adjoint;
};

/**
 * total = w_eq mean(r^2) + w_bd mean(u_bd^2). When `grad` is non-null it
 * receives dtotal/dparams (overwritten).
 */
inline ForwardLoss forward_loss(const NeuralField& net, const ProblemSpec& spec, const CollocationBatch& batch,
                                const ForwardWeights& w, Eigen::VectorXd* grad, LossWorkspace& ws) {
    const int d = spec.dim;
    const Eigen::Index nr = batch.interior_x.cols();
    const Eigen::Index nb = batch.boundary_x.cols();
    if (nr == 0 || nb == 0) throw DomainError("forward_loss: empty collocation batch");
    if (net.spatial_dim() != d || !net.laplace_input()) throw ContractViolation("forward_loss: network/problem mismatch");
    if (ws.chunk < 1) throw ContractViolation("forward_loss: chunk must be >= 1");

    ForwardLoss loss;
    if (grad) grad->setZero(net.num_parameters());

    for (Eigen::Index c0 = 0; c0 < nr; c0 += ws.chunk) {
        const Eigen::Index len = std::min(ws.chunk, nr - c0);
        net.forward_into(ws.tape, batch.interior_x.middleCols(c0, len), batch.interior_s.segment(c0, len),
                         DerivativeOrder::Second);
        const BundleBatch& u = ws.tape.outputs();
        BundleBatch& adj = ws.adjoint;
        adj.value.resize(len);
        adj.gradient.resize(d, len);
        adj.second.resize(d, len);
        for (Eigen::Index i = 0; i < len; ++i) {
            const std::span<const double> x(batch.interior_x.col(c0 + i).data(), d);
            const PointData p = point_data(spec, x, batch.interior_s(c0 + i));
            double div = 0.0;
            for (int k = 0; k < d; ++k) div += p.diffusion * u.second(k, i) + p.diffusion_grad[k] * u.gradient(k, i);
            const double r = p.s_alpha * u.value(i) - div - p.reaction * u.value(i) - p.rhs;
            loss.equation += r * r;
            const double rbar = 2.0 * w.equation * r / static_cast<double>(nr);
            adj.value(i) = rbar * (p.s_alpha - p.reaction);
            for (int k = 0; k < d; ++k) {
                adj.gradient(k, i) = -rbar * p.diffusion_grad[k];
                adj.second(k, i) = -rbar * p.diffusion;
            }
        }
        check_finite(loss.equation, "L_eq");
        if (grad) ws.tape.backward(adj, *grad);
    }
    loss.equation /= static_cast<double>(nr);

    for (Eigen::Index c0 = 0; c0 < nb; c0 += ws.chunk) {
        const Eigen::Index len = std::min(ws.chunk, nb - c0);
        net.forward_into(ws.tape, batch.boundary_x.middleCols(c0, len), batch.boundary_s.segment(c0, len),
                         DerivativeOrder::Value);
        const Eigen::VectorXd& ub = ws.tape.outputs().value;
        loss.boundary += ub.squaredNorm();
        check_finite(loss.boundary, "L_bd");
        if (grad) {
            BundleBatch& adj = ws.adjoint;
            adj.value = (2.0 * w.boundary / static_cast<double>(nb)) * ub;
            adj.gradient.resize(0, 0);
            adj.second.resize(0, 0);
            ws.tape.backward(adj, *grad);
        }
    }
    loss.boundary /= static_cast<double>(nb);

    loss.total = w.equation * loss.equation + w.boundary * loss.boundary;
    if (grad && !grad->allFinite()) throw TrainingDivergence("parameter gradient");
    return loss;
}

inline ForwardLoss forward_loss(const NeuralField& net, const ProblemSpec& spec, const CollocationBatch& batch,
                                const ForwardWeights& w, Eigen::VectorXd* grad = nullptr) {
    LossWorkspace ws;
    return forward_loss(net, spec, batch, w, grad, ws);
}

}  // namespace subdiff
