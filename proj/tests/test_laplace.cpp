#include "subdiff/laplace.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_dec_float.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace subdiff {
namespace {

using boost::multiprecision::cpp_dec_float_50;

// Independent oracle: integral_0^inf e^{-st} f(t) dt by double-exponential quadrature.
template <class F>
double laplace_quadrature(F f, double s) {
    boost::math::quadrature::exp_sinh<double> integrator;
    return integrator.integrate([&](double t) { return std::exp(-s * t) * f(t); }, 1e-14);
}

TEST(Gamma, AccurateOnWorkingRange) {
    for (double x = 0.05; x < 20.0; x += 0.173) {
        const cpp_dec_float_50 ref = boost::math::tgamma(cpp_dec_float_50(x));
        const double r = ref.convert_to<double>();
        EXPECT_LE(std::abs(gamma_fn(x) - r) / r, 1e-13) << x;
    }
    EXPECT_NEAR(gamma_fn(1.5), std::sqrt(std::numbers::pi) / 2, 1e-15);
}

TEST(TimeProfile, RejectsNonIntegrableExponent) {
    TimeProfile p;
    EXPECT_THROW(p.add(1.0, -1.0), DomainError);
    EXPECT_NO_THROW(p.add(1.0, -0.5));
    EXPECT_TRUE(std::isinf(p.value_at(0.0)));
    const TimeProfile q{{2.0, 1.0}, {5.0, 0.0}};
    EXPECT_EQ(q.value_at(0.0), 5.0);
    EXPECT_EQ(q.value_at(1.0), 7.0);
}

TEST(LaplaceOfProfile, ClosedForms) {
    EXPECT_DOUBLE_EQ(laplace_of_profile(TimeProfile{{1.0, 0.0}}, 2.0), 0.5);
    for (double s : {0.5, 1.0, 3.0, 40.0}) EXPECT_NEAR(laplace_of_profile(TimeProfile{{1.0, 1.0}}, s), 1.0 / (s * s), 1e-15 / (s * s));
    EXPECT_THROW((void)laplace_of_profile(TimeProfile{{1.0, 0.0}}, 0.0), DomainError);
}

TEST(LaplaceOfProfile, MatchesQuadrature) {
    // 2 t^{1-alpha} with alpha = 0.5 at s = 1.
    const double quad = laplace_quadrature([](double t) { return 2.0 * std::sqrt(t); }, 1.0);
    EXPECT_NEAR(quad, 1.7724539, 1e-7);
    EXPECT_NEAR(laplace_of_profile(TimeProfile{{2.0, 0.5}}, 1.0), quad, 1e-12);
    // Mixed profile at an awkward s.
    const TimeProfile p{{0.7, 1.5}, {-2.0, 0.25}, {3.0, 0.0}};
    const double q2 = laplace_quadrature([&](double t) { return p.value_at(t); }, 2.7);
    EXPECT_NEAR(p.laplace(2.7), q2, 1e-10);
}

TEST(CaputoLaplace, ConstantHasZeroDerivative) {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> us(0.01, 300.0), ua(0.01, 0.99);
    for (int i = 0; i < 100; ++i) {
        const double s = us(gen), a = ua(gen);
        EXPECT_NEAR(caputo_laplace(s, a, 1.0 / s, 1.0), 0.0, 1e-14 * std::pow(s, a - 1.0) + 1e-300);
    }
}

TEST(CaputoLaplace, LinearFunctionAgainstQuadrature) {
    // Caputo d^{1/2} t = t^{1/2} / Gamma(3/2); its transform at s = 4 by quadrature.
    const double quad = laplace_quadrature([](double t) { return std::sqrt(t) / std::tgamma(1.5); }, 4.0);
    EXPECT_NEAR(quad, 0.125, 1e-10);
    EXPECT_NEAR(caputo_laplace(4.0, 0.5, 1.0 / 16.0, 0.0), quad, 1e-12);
    EXPECT_EQ(caputo_laplace(4.0, 0.5, 0.3, 0.0), std::pow(4.0, 0.5) * 0.3);
}

TEST(CaputoLaplace, PowerFunctionsMatchAnalyticDerivative) {
    for (double beta : {0.5, 1.0, 1.5}) {
        for (double alpha : {0.2, 0.5, 0.9}) {
            const TimeProfile p{{1.0, beta}};
            const TimeProfile dp = p.caputo(alpha);
            for (double s : {0.3, 1.0, 17.0, 250.0}) {
                const double lhs = caputo_laplace(s, alpha, p.laplace(s), p.value_at(0.0));
                const double rhs = dp.laplace(s);
                EXPECT_LE(std::abs(lhs - rhs), 1e-10 * std::abs(rhs));
            }
        }
    }
}

TEST(CaputoLaplace, DomainErrors) {
    EXPECT_THROW((void)caputo_laplace(1.0, 1.0, 0.0, 0.0), DomainError);
    EXPECT_THROW((void)caputo_laplace(1.0, 0.0, 0.0, 0.0), DomainError);
    EXPECT_THROW((void)caputo_laplace(-1.0, 0.5, 0.0, 0.0), DomainError);
    // Approaches s f~ - f(0) as alpha -> 1.
    EXPECT_NEAR(caputo_laplace(3.0, 1.0 - 1e-9, 0.2, 0.7), 3.0 * 0.2 - 0.7, 1e-8);
}

TEST(Stehfest, SmallRulesByHand) {
    EXPECT_EQ(stehfest_coefficients(2), (std::vector<double>{2.0, -2.0}));
    EXPECT_EQ(stehfest_coefficients(4), (std::vector<double>{-2.0, 26.0, -48.0, 24.0}));
}

TEST(Stehfest, ExactIdentitiesForEveryRule) {
    using R = StehfestRule::Rational;
    for (int m = 2; m <= StehfestRule::kMaxTerms; m += 2) {
        const StehfestRule rule(m);
        R sum = 0, weighted = 0;
        for (int i = 1; i <= m; ++i) {
            sum += rule.exact()[i - 1];
            weighted += rule.exact()[i - 1] / i;
        }
        EXPECT_EQ(sum, R(0)) << m;
        EXPECT_EQ(weighted, R(1)) << m;
    }
}

// Sum of |mu_i| (or |mu_i|/i): the cancellation scale that bounds double roundoff.
double mass(const std::vector<double>& mu, bool weighted) {
    double m = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) m += std::abs(mu[i]) / (weighted ? static_cast<double>(i + 1) : 1.0);
    return m;
}

TEST(Stehfest, FloatIdentitiesSmallRules) {
    for (int m = 2; m <= 8; m += 2) {
        const std::vector<double> mu = stehfest_coefficients(m);
        double sum = 0.0, weighted = 0.0;
        for (int i = 1; i <= m; ++i) {
            sum += mu[i - 1];
            weighted += mu[i - 1] / i;
        }
        EXPECT_LE(std::abs(sum), 1e-12) << m;
        EXPECT_LE(std::abs(weighted - 1.0), 1e-12) << m;
    }
}

TEST(Stehfest, FloatIdentitiesWithinConditioningBound) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (int m = 10; m <= 14; m += 2) {
        const std::vector<double> mu = stehfest_coefficients(m);
        double sum = 0.0, weighted = 0.0;
        for (int i = 1; i <= m; ++i) {
            sum += mu[i - 1];
            weighted += mu[i - 1] / i;
        }
        EXPECT_LE(std::abs(sum), 4 * m * eps * mass(mu, false)) << m;
        EXPECT_LE(std::abs(weighted - 1.0), 4 * m * eps * mass(mu, true)) << m;
    }
}

TEST(Stehfest, FloatExportWithinOneUlp) {
    for (int m = 2; m <= StehfestRule::kMaxTerms; m += 2) {
        const StehfestRule rule(m);
        for (int i = 0; i < m; ++i) {
            const auto& r = rule.exact()[i];
            const cpp_dec_float_50 hi =
                cpp_dec_float_50(boost::multiprecision::numerator(r)) / cpp_dec_float_50(boost::multiprecision::denominator(r));
            const double ref = hi.convert_to<double>();
            const double got = rule.coefficients()[i];
            EXPECT_LE(std::abs(got - ref), std::abs(std::nextafter(ref, 2 * ref) - ref)) << m << " " << i;
        }
    }
}

TEST(Stehfest, RejectsBadTermCounts) {
    EXPECT_THROW(StehfestRule(3), DomainError);
    EXPECT_THROW(StehfestRule(0), DomainError);
    EXPECT_THROW(StehfestRule(20), DomainError);
}

TEST(Nilt, InvertsStep) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (int m = 2; m <= 14; m += 2) {
        const StehfestRule rule(m);
        const double tol = m <= 8 ? 1e-12 : 4 * m * eps * mass(rule.coefficients(), true);
        for (double t : {0.01, 0.3, 1.0, 10.0})
            EXPECT_NEAR(nilt_stehfest([](double s) { return 1.0 / s; }, t, rule), 1.0, tol) << m << " " << t;
    }
}

TEST(Nilt, ClosedFormPairs) {
    const StehfestRule rule(12);
    EXPECT_NEAR(nilt_stehfest([](double s) { return 1.0 / (s * s); }, 1.0, rule), 1.0, 1e-3);
    for (double t : {0.5, 1.0, 2.0}) {
        const double got = nilt_stehfest([](double s) { return 1.0 / (s + 1.0); }, t, rule);
        EXPECT_LE(std::abs(got - std::exp(-t)) / std::exp(-t), 1e-2) << t;
    }
}

TEST(Nilt, NodesAreExact) {
    const StehfestRule rule(6);
    std::vector<double> seen;
    (void)nilt_stehfest(
        [&](double s) {
            seen.push_back(s);
            return 1.0;
        },
        0.25, rule);
    ASSERT_EQ(seen.size(), 6u);
    for (int i = 1; i <= 6; ++i) EXPECT_EQ(seen[i - 1], std::numbers::ln2 / 0.25 * i);
}

TEST(Nilt, LinearInTransform) {
    const StehfestRule rule(8);
    auto f1 = [](double s) { return 1.0 / (s + 2.0); };
    auto f2 = [](double s) { return 1.0 / (s * s + 1.0); };
    for (double t : {0.1, 0.7, 3.0}) {
        const double lhs = nilt_stehfest([&](double s) { return 3.0 * f1(s) - 0.5 * f2(s); }, t, rule);
        const double rhs = 3.0 * nilt_stehfest(f1, t, rule) - 0.5 * nilt_stehfest(f2, t, rule);
        EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(rhs)));
    }
}

TEST(Nilt, ErrorPaths) {
    const StehfestRule rule(4);
    EXPECT_THROW((void)nilt_stehfest([](double) { return 1.0; }, 0.0, rule), DomainError);
    EXPECT_THROW((void)nilt_stehfest([](double) { return std::nan(""); }, 1.0, rule), DomainError);
}

}  // namespace
}  // namespace subdiff
