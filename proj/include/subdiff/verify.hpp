#pragma once

#include "subdiff/fdm.hpp"
#include "subdiff/inverse.hpp"
#include "subdiff/laplace.hpp"
#include "subdiff/neural_field.hpp"
#include "subdiff/presets.hpp"
#include "subdiff/problem.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace subdiff {

struct CheckResult {
    std::string group;
    std::string name;
    bool pass = false;
    double value = 0.0;      // measured deviation
    double tolerance = 0.0;  // pass iff value <= tolerance
};

/// Adds `delta` to mu_index of the M-term rule before the identity checks (sensitivity demonstration).
struct StehfestCorruption {
    int m = 4;
    int index = 1;  // 1-based
    double delta = 1e-6;
};

struct VerifyOptions {
    std::optional<StehfestCorruption> corrupt;
};

namespace verify_detail {

class Recorder {
public:
    explicit Recorder(std::vector<CheckResult>& out) : out_(out) {}

    void check(const std::string& group, const std::string& name, double value, double tol) {
        out_.push_back({group, name, std::isfinite(value) && value <= tol, value, tol});
    }

private:
    std::vector<CheckResult>& out_;
};

inline double rel(double a, double ref, double floor) { return std::abs(a - ref) / std::max(std::abs(ref), floor); }

// Exact rational value of sum_i w_i mu_i for double coefficients.
inline double exact_weighted_sum(const std::vector<double>& mu, bool over_i) {
    using boost::multiprecision::cpp_rational;
    cpp_rational acc = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        cpp_rational v(mu[i]);
        if (over_i) v /= static_cast<int>(i + 1);
        acc += v;
    }
    return acc.convert_to<double>();
}

inline void stehfest(Recorder& r, const VerifyOptions& opt) {
    const std::string g = "stehfest";
    const std::vector<double> m4 = StehfestRule(4).coefficients();
    const double ref4[] = {-2.0, 26.0, -48.0, 24.0};
    double dev4 = 0.0;
    for (int i = 0; i < 4; ++i) dev4 = std::max(dev4, std::abs(m4[i] - ref4[i]));
    r.check(g, "M4_coefficients", dev4, 0.0);

    for (int m = 2; m <= StehfestRule::kMaxTerms; m += 2) {
        const StehfestRule rule(m);
        using boost::multiprecision::cpp_rational;
        cpp_rational s0 = 0, s1 = 0;
        double ulps = 0.0;
        for (int i = 0; i < m; ++i) {
            s0 += rule.exact()[i];
            s1 += rule.exact()[i] / (i + 1);
            const double f = rule.coefficients()[i];
            const double ulp = std::nextafter(std::abs(f), INFINITY) - std::abs(f);
            ulps = std::max(ulps, cpp_rational(abs(cpp_rational(f) - rule.exact()[i]) / cpp_rational(ulp)).convert_to<double>());
        }
        r.check(g, "exact_identities_M" + std::to_string(m), (s0 == 0 && s1 == 1) ? 0.0 : 1.0, 0.0);
        r.check(g, "export_within_1ulp_M" + std::to_string(m), ulps, 1.0);
    }

    // Double coefficients summed exactly; the only admissible deviation is their rounding.
    for (int m = 2; m <= 14; m += 2) {
        std::vector<double> mu = StehfestRule(m).coefficients();
        if (opt.corrupt && opt.corrupt->m == m) mu.at(static_cast<std::size_t>(opt.corrupt->index - 1)) += opt.corrupt->delta;
        double bound0 = 0.0, bound1 = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            bound0 += std::abs(mu[i]);
            bound1 += std::abs(mu[i]) / static_cast<double>(i + 1);
        }
        const double u = std::ldexp(1.0, -53);
        r.check(g, "sum_mu_M" + std::to_string(m), std::abs(exact_weighted_sum(mu, false)), std::max(1e-12, bound0 * u));
        r.check(g, "sum_mu_over_i_M" + std::to_string(m), std::abs(exact_weighted_sum(mu, true) - 1.0),
                std::max(1e-12, bound1 * u));
    }
}

inline void nilt(Recorder& r) {
    const std::string g = "nilt";
    for (int m = 2; m <= 8; m += 2) {
        const StehfestRule rule(m);
        double dev = 0.0;
        for (double t : {0.01, 0.3, 1.0, 7.0}) dev = std::max(dev, std::abs(nilt_stehfest([](double s) { return 1.0 / s; }, t, rule) - 1.0));
        r.check(g, "step_M" + std::to_string(m), dev, 1e-12);
    }
    const StehfestRule r12(12);
    double dev = 0.0;
    for (double t : {0.5, 1.0, 2.0})
        dev = std::max(dev, rel(nilt_stehfest([](double s) { return 1.0 / (s + 1.0); }, t, r12), std::exp(-t), 0.0));
    r.check(g, "exp_decay_M12", dev, 1e-2);
    r.check(g, "ramp_M12", std::abs(nilt_stehfest([](double s) { return 1.0 / (s * s); }, 1.0, r12) - 1.0), 1e-3);
}

inline void caputo(Recorder& r) {
    const std::string g = "caputo-laplace";
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> us(0.05, 300.0), ua(0.01, 0.99);
    double dev = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double s = us(gen), a = ua(gen);
        dev = std::max(dev, std::abs(caputo_laplace(s, a, 1.0 / s, 1.0)));
    }
    r.check(g, "constant_is_zero", dev, 1e-12);
    for (double beta : {0.5, 1.0, 1.5}) {
        double d = 0.0;
        for (int i = 0; i < 50; ++i) {
            const double s = us(gen), a = ua(gen);
            const TimeProfile p{{1.0, beta}};
            const double lhs = caputo_laplace(s, a, laplace_of_profile(p, s), p.value_at(0.0));
            const TimeProfile dp{{gamma_fn(beta + 1) / gamma_fn(beta + 1 - a), beta - a}};
            d = std::max(d, rel(lhs, laplace_of_profile(dp, s), 0.0));
        }
        char name[32];
        std::snprintf(name, sizeof name, "power_%.1f", beta);
        r.check(g, name, d, 1e-10);
    }
}

inline NeuralField probe_net(int d, std::vector<int> hidden, std::uint64_t seed) {
    NeuralField net({d, true, std::move(hidden)}, seed);
    std::mt19937_64 gen(seed + 5);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int l = 0; l < net.num_layers(); ++l)
        for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)(i) = u(gen);
    return net;
}

inline void derivatives(Recorder& r) {
    const std::string g = "derivatives";
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double dg = 0.0, dl = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
        const int d = 1 + trial % 3;
        const NeuralField net = probe_net(d, {24, 24, 24}, 100 + trial);
        std::vector<double> x(static_cast<std::size_t>(d));
        for (double& v : x) v = u(gen);
        const double s = 0.7 + 100 * u(gen);
        const DerivativeBundle b = net.spatial_derivatives(x, s);
        double lap_fd = 0.0;
        for (int k = 0; k < d; ++k) {
            std::vector<double> xp = x, xm = x;
            xp[k] += 1e-4;
            xm[k] -= 1e-4;
            dg = std::max(dg, rel(b.gradient[k], (net.eval(xp, s) - net.eval(xm, s)) / 2e-4, 1e-3));
            xp = x;
            xm = x;
            xp[k] += 1e-3;
            xm[k] -= 1e-3;
            lap_fd += (net.eval(xp, s) - 2 * net.eval(x, s) + net.eval(xm, s)) / 1e-6;
        }
        dl = std::max(dl, rel(b.laplacian(), lap_fd, 1e-3));
    }
    r.check(g, "gradient_vs_fd", dg, 1e-6);
    r.check(g, "laplacian_vs_fd", dl, 1e-4);

    // Parameter gradient of sum(value^2 + laplacian) against central differences.
    const int d = 2, n = 5;
    const NeuralField net = probe_net(d, {16, 16, 16}, 7);
    Eigen::MatrixXd x(d, n);
    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i) {
        x(0, i) = u(gen);
        x(1, i) = u(gen);
        s(i) = 0.7 + 20 * u(gen);
    }
    auto loss = [](const BundleBatch& b, BundleBatch& adj) {
        double v = 0.0;
        for (Eigen::Index i = 0; i < b.value.size(); ++i) {
            v += b.value(i) * b.value(i) + b.second.col(i).sum();
            adj.value(i) = 2 * b.value(i);
            adj.second.col(i).setOnes();
        }
        return v;
    };
    Eigen::VectorXd grad;
    parameter_gradient(net, x, s, DerivativeOrder::Second, loss, grad);
    auto value_of = [&](const NeuralField& nn) {
        const FieldTape t = nn.forward(x, s, DerivativeOrder::Second);
        BundleBatch adj = BundleBatch::zeros(d, n, DerivativeOrder::Second);
        return loss(t.outputs(), adj);
    };
    double dp = 0.0;
    std::uniform_int_distribution<Eigen::Index> pick(0, net.num_parameters() - 1);
    for (int probe = 0; probe < 20; ++probe) {
        const Eigen::Index j = pick(gen);
        NeuralField plus = net, minus = net;
        plus.parameters()(j) += 1e-5;
        minus.parameters()(j) -= 1e-5;
        const double fd = (value_of(plus) - value_of(minus)) / 2e-5;
        dp = std::max(dp, std::abs(grad(j) - fd) / std::max(std::abs(fd), 1e-3 * grad.cwiseAbs().maxCoeff()));
    }
    r.check(g, "parameter_gradient_vs_fd", dp, 1e-4);

    double sw = 0.0;
    for (double z : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
        const double h = 1e-5;
        sw = std::max(sw, rel(swish::d1(z), (swish::value(z + h) - swish::value(z - h)) / (2 * h), 1e-3));
        sw = std::max(sw, rel(swish::d2(z), (swish::d1(z + h) - swish::d1(z - h)) / (2 * h), 1e-3));
    }
    r.check(g, "swish_derivatives", sw, 1e-8);
}

inline void residual(Recorder& r) {
    const std::string g = "residual";
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.0, 1.0), ls(std::log(0.05), std::log(300.0));
    for (const std::string& name : presets::names()) {
        const ProblemSpec spec = presets::by_name(name);
        if (!spec.exact_laplace) continue;
        double worst = 0.0;
        std::vector<double> x(static_cast<std::size_t>(spec.dim));
        for (int i = 0; i < 50; ++i) {
            for (double& v : x) v = u(gen);
            const double s = std::exp(ls(gen));
            worst = std::max(worst, std::abs(residual_from_bundle(spec, x, s, spec.exact_laplace->derivatives(x, s))));
        }
        r.check(g, "exact_solution_" + name, worst, 1e-9);
    }
}

inline void l1(Recorder& r) {
    const std::string g = "l1-scheme";
    double bad = 0.0;
    for (double a : {0.1, 0.5, 0.9}) {
        const std::vector<double> b = l1_weights(a, 100);
        if (b[0] != 1.0) bad += 1;
        for (std::size_t j = 1; j < b.size(); ++j)
            if (!(b[j] > 0 && b[j] < b[j - 1])) bad += 1;
    }
    r.check(g, "weights_positive_decreasing", bad, 0.0);

    auto err = [](int steps) {
        const ProblemSpec spec = presets::quadratic1d(0.5);
        const Grid grid(Box::unit(1), {1001}, 1.0, steps + 1);
        const FieldHistory h = solve_l1(spec, grid);
        double e = 0.0;
        for (int i = 0; i < 1001; ++i)
            e = std::max(e, std::abs(h.level(steps)[i] - 2.0 * std::sin(std::numbers::pi * grid.coordinate(0, i))));
        return e;
    };
    r.check(g, "temporal_order_alpha0.5", std::abs(std::log2(err(20) / err(40)) - 1.5), 0.3);
}

inline void inverse(Recorder& r) {
    const std::string g = "inverse";
    for (const ProblemSpec& spec : {presets::inverse2d(), presets::inverse3d()}) {
        InverseConfig cfg;
        cfg.noise = 0.0;
        cfg.observation_grid = 5;
        cfg.residual_batch = 50;
        cfg.boundary_batch = 30;
        cfg.observation_batch = 20;
        auto rng = make_stream(1, streams::kMeasurements);
        const ExactLaplaceSolution& ex = *spec.exact_laplace;
        const MeasurementSet ms =
            synthesize_measurements(spec, [&ex](std::span<const double> x, double s) { return ex.value(x, s); }, cfg, rng);
        InverseSampler sampler(spec, cfg, ms, make_prior(spec, 5));
        const InverseLoss l = exact_pair_loss(spec, cfg.weights, sampler.next());
        r.check(g, "exact_pair_loss_" + spec.name, l.total, 1e-9);
    }
}

}  // namespace verify_detail

/// Fast invariant suite; one entry per named check.
inline std::vector<CheckResult> run_verify(const VerifyOptions& opt = {}) {
    std::vector<CheckResult> out;
    verify_detail::Recorder r(out);
    verify_detail::stehfest(r, opt);
    verify_detail::nilt(r);
    verify_detail::caputo(r);
    verify_detail::derivatives(r);
    verify_detail::residual(r);
    verify_detail::l1(r);
    verify_detail::inverse(r);
    return out;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
    for (const CheckResult& c : results)
        if (!c.pass) return false;
    return true;
}

inline void print_report(std::ostream& os, const std::vector<CheckResult>& results) {
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %-34s %-12s %-12s %s\n", "group", "check", "deviation", "tolerance", "result");
    os << line;
    int failed = 0;
    for (const CheckResult& c : results) {
        std::snprintf(line, sizeof line, "%-16s %-34s %-12.3e %-12.3e %s\n", c.group.c_str(), c.name.c_str(), c.value,
                      c.tolerance, c.pass ? "PASS" : "FAIL");
        os << line;
        if (!c.pass) ++failed;
    }
    os << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " checks passed\n";
    if (failed) {
        os << "failed:";
        for (const CheckResult& c : results)
            if (!c.pass) os << ' ' << c.group << '/' << c.name;
        os << '\n';
    }
}

}  // namespace subdiff
