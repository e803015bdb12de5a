// Error taxonomy shared by the library and the CLI exit-code mapping.
#pragma once

#include <stdexcept>
#include <string>

namespace ncdyadic {

// Exit codes: 0 ok, 1 suite assertion failed, then one code per error family.
enum class ErrorCode : int {
    Config = 2,        // malformed config / file / arguments
    Lattice = 3,       // LatticeTooLarge, BeyondLeafLevel
    Data = 4,          // NotPositive, shape mismatches, bad file payloads
    Spectral = 5,      // NotHermitian, EigenFailure, PowerIterationStalled
    Precondition = 6,  // LambdaTooSmall, NoParentLevel, ZeroInput, unknown preset
};

class Error : public std::runtime_error {
  public:
    Error(std::string name, const std::string& what, ErrorCode code)
        : std::runtime_error(name + ": " + what), name_(std::move(name)), code_(code) {}

    const std::string& name() const { return name_; }
    int exit_code() const { return static_cast<int>(code_); }

  private:
    std::string name_;
    ErrorCode code_;
};

struct LatticeError : Error {
    LatticeError(std::string name, const std::string& what)
        : Error(std::move(name), what, ErrorCode::Lattice) {}
};

struct DataError : Error {
    DataError(std::string name, const std::string& what)
        : Error(std::move(name), what, ErrorCode::Data) {}
};

struct SpectralError : Error {
    SpectralError(std::string name, const std::string& what)
        : Error(std::move(name), what, ErrorCode::Spectral) {}
};

struct PreconditionError : Error {
    PreconditionError(std::string name, const std::string& what)
        : Error(std::move(name), what, ErrorCode::Precondition) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("ConfigError", what, ErrorCode::Config) {}
};

// Carries the smallest lambda for which the construction is admissible.
struct LambdaTooSmall : PreconditionError {
    LambdaTooSmall(double lambda, double minimal)
        : PreconditionError("LambdaTooSmall",
                            "lambda=" + std::to_string(lambda) +
                                " is below the minimal admissible value " + std::to_string(minimal)),
          minimal_lambda(minimal) {}
    double minimal_lambda;
};

// Power iteration hit the iteration cap; best_estimate is still a lower bound.
struct PowerIterationStalled : SpectralError {
    explicit PowerIterationStalled(double best)
        : SpectralError("PowerIterationStalled",
                        "no stagnation before the iteration cap; best estimate " +
                            std::to_string(best)),
          best_estimate(best) {}
    double best_estimate;
};

}  // namespace ncdyadic
