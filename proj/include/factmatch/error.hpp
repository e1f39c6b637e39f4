#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace factmatch {

enum class ErrorKind {
    Io,
    InvalidConfig,
    MissingColumn,
    NonFiniteValue,
    DuplicateId,
    SingularCovariance,
    BothAlignmentsInfeasible,
    OddVertexCount,
    ParityViolation,
    InfeasibleMatch,
    TooFewUnits,
    DegenerateStratum,
    MissingOutcome,
    RankDeficientQ,
    LeverageOne,
    TooFewStrata,
    ExactTooLarge,
    EmptyGrid,
    TooLarge,
    ChecksumMismatch,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind so the
/// CLI can map it onto its exit-code contract.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace factmatch
