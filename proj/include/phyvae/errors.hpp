#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace phyvae {

/// Incompatible tensor shapes, broken layer chains, mismatched state/gradient shapes.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// log of a nonpositive value, overflow in exp, nonpositive variances, NaN/Inf outputs.
class NumericDomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A recorded node whose operation has no reverse-mode rule.
class MissingBackwardRule : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Planar flow with w = 0: the direction constraint is undefined.
class DegenerateDirectionError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// |1 + u^T psi(z)| fell below the singularity threshold.
class SingularJacobianError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class EmptyBatchError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// ODE state became non-finite.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(std::size_t step, const std::string& what)
        : std::runtime_error("integration diverged at step " + std::to_string(step) + ": " + what),
          step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Malformed input files; `line` is 1-based, 0 when not tied to a line.
class DataError : public std::runtime_error {
public:
    DataError(std::size_t line, const std::string& what)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Non-finite training loss.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t epoch, std::size_t batch)
        : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch)),
          epoch_(epoch), batch_(batch) {}
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

}  // namespace phyvae
