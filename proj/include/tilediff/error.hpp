#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace tilediff {

/// Base class of every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

/// Misconfiguration: a precondition on user-supplied parameters failed.
class InvalidParameter : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "invalid_parameter"; }
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "shape_mismatch"; }
};

/// A caller broke an interface contract (e.g. a denoiser returned the wrong shape).
class ContractViolation : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "contract_violation"; }
};

class DomainError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "domain_error"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "io_error"; }
};

/// Where in a pyramid run a numerical failure happened. Fields stay empty
/// when the failing call had no such context (e.g. a bare solver step).
struct FailureSite {
    std::optional<int> step;
    std::optional<int> stage;
    std::optional<int> iteration;
    std::optional<long> patch;

    std::string describe() const;
};

class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& what, FailureSite site);

    const FailureSite& site() const noexcept { return site_; }
    const std::string& reason() const noexcept { return reason_; }
    const char* kind() const noexcept override { return "numerical_failure"; }

    /// Returns a copy with the unset fields of `site` filled from `outer`.
    NumericalFailure with_context(const FailureSite& outer) const;

private:
    std::string reason_;
    FailureSite site_;
};

}  // namespace tilediff
