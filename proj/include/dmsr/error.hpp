// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dmsr {

enum class ErrorKind {
    InvalidParameter,
    SingularMatrix,
    Render,
    State,
    Training,
    Config,
    Parse,
    Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    // Errors caused by bad user input as opposed to failures while running.
    bool is_validation() const noexcept {
        return kind_ == ErrorKind::InvalidParameter || kind_ == ErrorKind::Config ||
               kind_ == ErrorKind::Parse;
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace dmsr
