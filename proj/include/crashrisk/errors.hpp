#pragma once

#include <stdexcept>
#include <string>

namespace crashrisk {

// Base class for all library errors. ConfigError maps to CLI exit code 2,
// every other Error to exit code 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};

class EmptyRowOrColumn : public Error {
public:
    explicit EmptyRowOrColumn(const std::string& msg) : Error(msg) {}
};

class ZeroVariance : public Error {
public:
    ZeroVariance(const std::string& msg, int column) : Error(msg), column(column) {}
    int column;
};

class TooFewObserved : public Error {
public:
    TooFewObserved(const std::string& msg, int column) : Error(msg), column(column) {}
    int column;
};

class DegenerateCluster : public Error {
public:
    explicit DegenerateCluster(const std::string& msg) : Error(msg) {}
};

class TooFewSamples : public Error {
public:
    explicit TooFewSamples(const std::string& msg) : Error(msg) {}
};

class IncompleteRows : public Error {
public:
    explicit IncompleteRows(const std::string& msg) : Error(msg) {}
};

class NoCandidates : public Error {
public:
    NoCandidates(const std::string& msg, int crash_id) : Error(msg), crash_id(crash_id) {}
    int crash_id;
};

class MinRatio : public Error {
public:
    explicit MinRatio(const std::string& msg) : Error(msg) {}
};

class SingleClass : public Error {
public:
    explicit SingleClass(const std::string& msg) : Error(msg) {}
};

class NonPositiveWeight : public Error {
public:
    explicit NonPositiveWeight(const std::string& msg) : Error(msg) {}
};

class EmptyProbe : public Error {
public:
    explicit EmptyProbe(const std::string& msg) : Error(msg) {}
};

class InfeasibleRatio : public Error {
public:
    explicit InfeasibleRatio(const std::string& msg) : Error(msg) {}
};

class TooFewPerClass : public Error {
public:
    explicit TooFewPerClass(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Raised when a numeric invariant that should hold by construction is
// violated at runtime; always indicates a bug, never bad input.
class InternalError : public Error {
public:
    explicit InternalError(const std::string& msg) : Error(msg) {}
};

}  // namespace crashrisk
