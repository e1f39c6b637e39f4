#include "factmatch/error.hpp"

namespace factmatch {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io: return "Io";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::MissingColumn: return "MissingColumn";
        case ErrorKind::NonFiniteValue: return "NonFiniteValue";
        case ErrorKind::DuplicateId: return "DuplicateId";
        case ErrorKind::SingularCovariance: return "SingularCovariance";
        case ErrorKind::BothAlignmentsInfeasible: return "BothAlignmentsInfeasible";
        case ErrorKind::OddVertexCount: return "OddVertexCount";
        case ErrorKind::ParityViolation: return "ParityViolation";
        case ErrorKind::InfeasibleMatch: return "InfeasibleMatch";
        case ErrorKind::TooFewUnits: return "TooFewUnits";
        case ErrorKind::DegenerateStratum: return "DegenerateStratum";
        case ErrorKind::MissingOutcome: return "MissingOutcome";
        case ErrorKind::RankDeficientQ: return "RankDeficientQ";
        case ErrorKind::LeverageOne: return "LeverageOne";
        case ErrorKind::TooFewStrata: return "TooFewStrata";
        case ErrorKind::ExactTooLarge: return "ExactTooLarge";
        case ErrorKind::EmptyGrid: return "EmptyGrid";
        case ErrorKind::TooLarge: return "TooLarge";
        case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace factmatch
