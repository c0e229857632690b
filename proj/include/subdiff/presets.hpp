#pragma once

#include "subdiff/problem.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace subdiff {

inline CoefficientField constant_diffusion(double a) {
    return [a](std::span<const double>, std::span<double> grad) {
        std::fill(grad.begin(), grad.end(), 0.0);
        return a;
    };
}

inline ScalarField constant_field(double c) {
    return [c](std::span<const double>) { return c; };
}

/// a(x) = 0.5 + exp(-(x_1 + ... + x_d)).
inline CoefficientField exponential_diffusion() {
    return [](std::span<const double> x, std::span<double> grad) {
        double sum = 0.0;
        for (double v : x) sum += v;
        const double e = std::exp(-sum);
        std::fill(grad.begin(), grad.end(), -e);
        return 0.5 + e;
    };
}

/**
 * Manufactured problem with exact solution u(x, t) = phi(x) p(t). The source is
 *   f = phi * Caputo[p](t) + p(t) * (-a Lap phi - grad a . grad phi - c phi),
 * so u solves the equation exactly for any a(x), constant or not.
 */
inline ProblemSpec manufactured_problem(std::string name, const SineProduct& phi, const TimeProfile& p,
                                        CoefficientField a, double c, double alpha, double final_time = 1.0) {
    ProblemSpec spec;
    spec.name = std::move(name);
    spec.dim = phi.dim();
    spec.domain = Box::unit(spec.dim);
    spec.alpha = alpha;
    spec.final_time = final_time;
    spec.diffusion = a;
    spec.reaction = constant_field(c);
    const double p0 = p.value_at(0.0);
    spec.initial = [phi, p0](std::span<const double> x) { return p0 * phi.value(x); };
    spec.source.push_back({phi.as_field(), p.caputo(alpha)});
    spec.source.push_back({[phi, a, c](std::span<const double> x) {
                               const DerivativeBundle b = phi.derivatives(x);
                               std::array<double, 3> ga{};
                               const double av = a(x, std::span<double>(ga.data(), x.size()));
                               double g = -c * b.value;
                               for (std::size_t k = 0; k < x.size(); ++k) g -= av * b.second[k] + ga[k] * b.gradient[k];
                               return g;
                           },
                           p});
    spec.exact_laplace = ExactLaplaceSolution{{{phi, [p](double s) { return p.laplace(s); }}}};
    spec.exact_time = ExactTimeSolution{{{phi, p}}};
    return spec;
}

/**
 * Constant a, c with initial value and sources built from Dirichlet eigenmodes.
 * Each mode decouples: u~ = phi (s^(alpha-1) A + p~(s)) / (s^alpha + a lambda - c).
 */
inline ProblemSpec eigenmode_problem(std::string name, int dim, double a, double c, double alpha, double final_time,
                                     const std::vector<SineProduct>& initial_modes,
                                     const std::vector<std::pair<SineProduct, TimeProfile>>& source_modes) {
    ProblemSpec spec;
    spec.name = std::move(name);
    spec.dim = dim;
    spec.domain = Box::unit(dim);
    spec.alpha = alpha;
    spec.final_time = final_time;
    spec.diffusion = constant_diffusion(a);
    spec.reaction = constant_field(c);
    spec.initial = [initial_modes](std::span<const double> x) {
        double v = 0.0;
        for (const SineProduct& m : initial_modes) v += m.value(x);
        return v;
    };
    ExactLaplaceSolution exact;
    for (const SineProduct& m : initial_modes) {
        const double shift = a * m.eigenvalue() - c;
        exact.modes.push_back({m, [alpha, shift](double s) {
                                   return std::pow(s, alpha - 1.0) / (std::pow(s, alpha) + shift);
                               }});
    }
    for (const auto& [m, p] : source_modes) {
        spec.source.push_back({m.as_field(), p});
        const double shift = a * m.eigenvalue() - c;
        exact.modes.push_back({m, [alpha, shift, p](double s) { return p.laplace(s) / (std::pow(s, alpha) + shift); }});
    }
    spec.exact_laplace = std::move(exact);
    return spec;
}

namespace presets {

/// 2D, T = 1: u0 = sin(pi x) sin(pi y), f = 5 sin(2 pi x) sin(3 pi y).
inline ProblemSpec forward2d_t1(double alpha = 0.5) {
    return eigenmode_problem("forward2d-t1", 2, 1.0, 0.0, alpha, 1.0, {{1.0, {1, 1}}},
                             {{{5.0, {2, 3}}, TimeProfile{{1.0, 0.0}}}});
}

/// 2D, T = 10: u0 = 3 sin(pi x) sin(pi y), f = 3 sin(pi x) sin(2 pi y).
inline ProblemSpec forward2d_t10(double alpha = 0.5) {
    return eigenmode_problem("forward2d-t10", 2, 1.0, 0.0, alpha, 10.0, {{3.0, {1, 1}}},
                             {{{3.0, {1, 2}}, TimeProfile{{1.0, 0.0}}}});
}

/// 3D manufactured u = (2t + 5) sin(pi x) sin(pi y) sin(pi z), a = 1, c = 0.
inline ProblemSpec forward3d(double alpha = 0.5) {
    return manufactured_problem("forward3d", {1.0, {1, 1, 1}}, TimeProfile{{2.0, 1.0}, {5.0, 0.0}},
                                constant_diffusion(1.0), 0.0, alpha);
}

/// 1D analog of forward3d: u = (2t + 5) sin(pi x).
inline ProblemSpec forward1d(double alpha = 0.5) {
    return manufactured_problem("forward1d", {1.0, {1}}, TimeProfile{{2.0, 1.0}, {5.0, 0.0}}, constant_diffusion(1.0),
                                0.0, alpha);
}

/// 2D analog of forward3d: u = (2t + 5) sin(pi x) sin(pi y).
inline ProblemSpec forward2d_mms(double alpha = 0.5) {
    return manufactured_problem("forward2d-mms", {1.0, {1, 1}}, TimeProfile{{2.0, 1.0}, {5.0, 0.0}},
                                constant_diffusion(1.0), 0.0, alpha);
}

/// u = (1 + t^2) sin(pi x): smooth but not linear in t, so the L1 scheme has a genuine temporal error.
inline ProblemSpec quadratic1d(double alpha = 0.5) {
    return manufactured_problem("quadratic1d", {1.0, {1}}, TimeProfile{{1.0, 2.0}, {1.0, 0.0}},
                                constant_diffusion(1.0), 0.0, alpha);
}

/// Coefficient identification: u = (3t + 5) sin(2 pi x) sin(pi y) sin(pi z), a = 0.5 + exp(-(x+y+z)).
inline ProblemSpec inverse3d(double alpha = 0.5) {
    return manufactured_problem("inverse3d", {1.0, {2, 1, 1}}, TimeProfile{{3.0, 1.0}, {5.0, 0.0}},
                                exponential_diffusion(), 0.0, alpha);
}

/// 2D analog: u = (3t + 5) sin(2 pi x) sin(pi y), a = 0.5 + exp(-(x+y)).
inline ProblemSpec inverse2d(double alpha = 0.5) {
    return manufactured_problem("inverse2d", {1.0, {2, 1}}, TimeProfile{{3.0, 1.0}, {5.0, 0.0}},
                                exponential_diffusion(), 0.0, alpha);
}

inline const std::vector<std::string>& names() {
    static const std::vector<std::string> all{"forward1d",   "forward2d-mms", "forward2d-t1", "forward2d-t10",
                                              "forward3d",   "quadratic1d",   "inverse2d",    "inverse3d"};
    return all;
}

inline ProblemSpec by_name(const std::string& name, double alpha = 0.5) {
    if (name == "forward1d") return forward1d(alpha);
    if (name == "forward2d-mms") return forward2d_mms(alpha);
    if (name == "forward2d-t1") return forward2d_t1(alpha);
    if (name == "forward2d-t10") return forward2d_t10(alpha);
    if (name == "forward3d") return forward3d(alpha);
    if (name == "quadratic1d") return quadratic1d(alpha);
    if (name == "inverse2d") return inverse2d(alpha);
    if (name == "inverse3d") return inverse3d(alpha);
    throw ContractViolation("unknown problem preset '" + name + "'");
}

}  // namespace presets
}  // namespace subdiff
