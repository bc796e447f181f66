#pragma once

#include <stdexcept>
#include <string>

namespace dkp {

// Error taxonomy used across the library. The CLI maps each class to a
// distinct exit code.
struct InvalidInputError : std::runtime_error {
    explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnusableSegmentError : std::runtime_error {
    explicit UnusableSegmentError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InternalError : std::runtime_error {
    explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-fatal diagnostics (skipped short trajectories, empty bins, ...).
// Sink is swappable so tests can capture warnings.
using WarnSink = void (*)(const std::string&);

void warn(const std::string& msg);
WarnSink set_warn_sink(WarnSink sink);  // returns the previous sink

}  // namespace dkp
