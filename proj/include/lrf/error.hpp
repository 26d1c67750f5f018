// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace lrf {

/// Broad failure category; the CLI maps each one to its exit code.
enum class ErrorKind {
    usage,     // bad arguments or configuration
    data,      // malformed, missing, or inconsistent input
    numerical  // NaN/Inf or other numerical breakdown
};

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, ErrorKind kind = ErrorKind::data)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace lrf
