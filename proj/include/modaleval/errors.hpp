#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace modaleval {

// Base for every typed error the library throws. kind() is a stable
// machine-readable tag (one per error family); what() carries the detail.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& detail)
        : std::runtime_error(kind + ": " + detail), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

inline Error io_error(const std::string& detail) { return Error("IoError", detail); }

} // namespace modaleval
