#pragma once

#include "subdiff/errors.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace subdiff {

/// Gamma function. glibc's tgamma is accurate to a few ulp on (0, 20); the
/// test suite pins this against closed forms at 1e-13 relative.
inline double gamma_fn(double x) { return std::tgamma(x); }

/// f(t) = sum_k c_k t^beta_k with every beta_k > -1.
class TimeProfile {
public:
    struct Term {
        double coefficient;
        double exponent;
    };

    TimeProfile() = default;
    TimeProfile(std::initializer_list<Term> terms) {
        for (const Term& t : terms) add(t.coefficient, t.exponent);
    }

    TimeProfile& add(double coefficient, double exponent) {
        if (!(exponent > -1.0)) throw DomainError("TimeProfile: exponent must exceed -1 for Laplace integrability");
        terms_.push_back({coefficient, exponent});
        return *this;
    }

    [[nodiscard]] const std::vector<Term>& terms() const { return terms_; }

    [[nodiscard]] double value_at(double t) const {
        double v = 0.0;
        for (const Term& term : terms_) {
            if (t == 0.0) {
                if (term.exponent == 0.0)
                    v += term.coefficient;
                else if (term.exponent < 0.0)
                    return std::numeric_limits<double>::infinity();
            } else {
                v += term.coefficient * std::pow(t, term.exponent);
            }
        }
        return v;
    }

    /// L[f](s) = sum_k c_k Gamma(beta_k + 1) / s^(beta_k + 1).
    [[nodiscard]] double laplace(double s) const {
        if (!(s > 0.0)) throw DomainError("laplace_of_profile: s must be positive");
        double v = 0.0;
        for (const Term& term : terms_) v += term.coefficient * gamma_fn(term.exponent + 1.0) * std::pow(s, -term.exponent - 1.0);
        return v;
    }

    /// Caputo derivative of order alpha, exact termwise: t^b -> Gamma(b+1)/Gamma(b+1-alpha) t^(b-alpha), constants vanish.
    [[nodiscard]] TimeProfile caputo(double alpha) const {
        TimeProfile out;
        for (const Term& term : terms_) {
            if (term.exponent == 0.0) continue;
            out.add(term.coefficient * gamma_fn(term.exponent + 1.0) / gamma_fn(term.exponent + 1.0 - alpha),
                    term.exponent - alpha);
        }
        return out;
    }

private:
    std::vector<Term> terms_;
};

inline double laplace_of_profile(const TimeProfile& profile, double s) { return profile.laplace(s); }

/// L[Caputo d^alpha f](s) = s^alpha f~(s) - s^(alpha-1) f(0).
inline double caputo_laplace(double s, double alpha, double f_tilde, double f0) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("caputo_laplace: alpha must lie in (0, 1)");
    if (!(s > 0.0)) throw DomainError("caputo_laplace: s must be positive");
    if (f0 == 0.0) return std::pow(s, alpha) * f_tilde;
    return std::pow(s, alpha) * f_tilde - std::pow(s, alpha - 1.0) * f0;
}

/**
 * Gaver-Stehfest weights for an even number of terms M.
 *
 *   mu_i = (-1)^(M/2 + i) sum_{k=floor((i+1)/2)}^{min(i, M/2)}
 *          k^(M/2) (2k)! / ((M/2 - k)! k! (k-1)! (i-k)! (2k-i)!)
 *
 * evaluated in exact rational arithmetic and rounded once to double. M above 18
 * is refused: the alternating sum loses all digits in double precision.
 * With a trained network as f~, M = 4 tends to give the best reconstruction;
 * larger M amplifies network error.
 */
class StehfestRule {
public:
    using Rational = boost::multiprecision::cpp_rational;
    static constexpr int kMaxTerms = 18;

    explicit StehfestRule(int m) : m_(m) {
        if (m < 2 || m > kMaxTerms || m % 2 != 0)
            throw DomainError("StehfestRule: M must be even and in [2, " + std::to_string(kMaxTerms) + "], got " +
                              std::to_string(m));
        exact_ = exact_coefficients(m);
        mu_.reserve(exact_.size());
        for (const Rational& r : exact_) mu_.push_back(r.convert_to<double>());
    }

    [[nodiscard]] int terms() const { return m_; }
    [[nodiscard]] const std::vector<double>& coefficients() const { return mu_; }
    [[nodiscard]] const std::vector<Rational>& exact() const { return exact_; }

    /// Laplace-variable nodes s_i = i ln2 / t, i = 1..M.
    [[nodiscard]] std::vector<double> nodes(double t) const {
        if (!(t > 0.0)) throw DomainError("StehfestRule: t must be positive");
        const double step = std::numbers::ln2 / t;
        std::vector<double> s(static_cast<std::size_t>(m_));
        for (int i = 1; i <= m_; ++i) s[i - 1] = step * i;
        return s;
    }

    /// (ln2/t) sum_i mu_i values[i-1], values taken at nodes(t).
    [[nodiscard]] double combine(double t, std::span<const double> values) const {
        if (static_cast<int>(values.size()) != m_) throw ContractViolation("StehfestRule::combine: need M values");
        // Extended accumulator: the terms alternate and reach |mu_i| ~ 1e4 at M = 8.
        long double acc = 0.0L;
        for (int i = 0; i < m_; ++i) acc += static_cast<long double>(mu_[i]) * values[i];
        return static_cast<double>(static_cast<long double>(std::numbers::ln2 / t) * acc);
    }

    static std::vector<Rational> exact_coefficients(int m) {
        using boost::multiprecision::cpp_int;
        const int half = m / 2;
        std::vector<cpp_int> fact(static_cast<std::size_t>(2 * m + 1));
        fact[0] = 1;
        for (int i = 1; i <= 2 * m; ++i) fact[i] = fact[i - 1] * i;

        std::vector<Rational> mu;
        for (int i = 1; i <= m; ++i) {
            Rational sum = 0;
            for (int k = (i + 1) / 2; k <= std::min(i, half); ++k) {
                cpp_int num = boost::multiprecision::pow(cpp_int(k), static_cast<unsigned>(half)) * fact[2 * k];
                cpp_int den = fact[half - k] * fact[k] * fact[k - 1] * fact[i - k] * fact[2 * k - i];
                sum += Rational(num, den);
            }
            mu.push_back(((half + i) % 2 == 0) ? sum : Rational(-sum));
        }
        return mu;
    }

private:
    int m_;
    std::vector<Rational> exact_;
    std::vector<double> mu_;
};

inline std::vector<double> stehfest_coefficients(int m) { return StehfestRule(m).coefficients(); }

/// Invert f~ at time t. Evaluation points are exactly s_i = i ln2 / t.
template <class Transform>
double nilt_stehfest(Transform&& f_tilde, double t, const StehfestRule& rule) {
    if (!(t > 0.0)) throw DomainError("nilt_stehfest: t must be positive");
    const std::vector<double> s = rule.nodes(t);
    std::vector<double> values(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        values[i] = f_tilde(s[i]);
        if (!std::isfinite(values[i]))
            throw DomainError("nilt_stehfest: transform is non-finite at s=" + std::to_string(s[i]));
    }
    return rule.combine(t, values);
}

}  // namespace subdiff
