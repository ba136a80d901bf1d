#ifndef NTUMATCH_ERRORS_HPP
#define NTUMATCH_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ntumatch {

struct InvalidInput : std::runtime_error {
    explicit InvalidInput(const std::string& msg) : std::runtime_error("invalid input: " + msg) {}
};

struct InvalidBounds : std::runtime_error {
    explicit InvalidBounds(const std::string& msg) : std::runtime_error("invalid bounds: " + msg) {}
};

/// Malformed table or config: carries a row/column locator where known.
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& msg) : std::runtime_error("schema error: " + msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

struct EstimationError : std::runtime_error {
    explicit EstimationError(const std::string& msg) : std::runtime_error("estimation error: " + msg) {}
};

/// Internal sampler state stopped satisfying its invariants.
struct StateCorruption : std::runtime_error {
    explicit StateCorruption(const std::string& msg) : std::runtime_error("state corruption: " + msg) {}
};

} // namespace ntumatch

#endif
