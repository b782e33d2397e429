#pragma once

#include <stdexcept>
#include <string>

namespace bscbf {

enum class ErrorKind {
    Configuration,
    IntegrationDiverged,
    Evaluation,
    RelativeDegree,
    Estimation,
    InvalidInitialState,
    IllPosed,
    DegeneratePair,
    Infeasible,
    Io,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::Configuration: return "configuration";
        case ErrorKind::IntegrationDiverged: return "integration-diverged";
        case ErrorKind::Evaluation: return "evaluation";
        case ErrorKind::RelativeDegree: return "relative-degree";
        case ErrorKind::Estimation: return "estimation";
        case ErrorKind::InvalidInitialState: return "invalid-initial-state";
        case ErrorKind::IllPosed: return "ill-posed";
        case ErrorKind::DegeneratePair: return "degenerate-pair";
        case ErrorKind::Infeasible: return "infeasible";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Thrown by em_step/simulate when a state entry becomes NaN or Inf.
class DivergedError : public Error {
public:
    DivergedError(const std::string& what, int entry, long step = -1)
        : Error(ErrorKind::IntegrationDiverged, what), entry_(entry), step_(step) {}

    int entry() const noexcept { return entry_; }
    long step() const noexcept { return step_; }

private:
    int entry_;
    long step_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace bscbf
