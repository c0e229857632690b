#pragma once

#include <stdexcept>
#include <string>

namespace subdiff {

/// Precondition on an argument or object shape was violated.
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument lies outside the mathematical domain of an operation (s <= 0, odd M, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A loss term or gradient became non-finite during optimization.
class TrainingDivergence : public std::runtime_error {
public:
    TrainingDivergence(std::string term, long iteration = -1)
        : std::runtime_error(format(term, iteration)), term_(std::move(term)), iteration_(iteration) {}

    [[nodiscard]] const std::string& term() const noexcept { return term_; }
    [[nodiscard]] long iteration() const noexcept { return iteration_; }

private:
    static std::string format(const std::string& term, long iteration) {
        std::string msg = "non-finite value in " + term;
        if (iteration >= 0) msg += " at iteration " + std::to_string(iteration);
        return msg;
    }

    std::string term_;
    long iteration_;
};

/// Evaluation requested outside the range a model was trained for.
class OutOfTrainedRange : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace subdiff
