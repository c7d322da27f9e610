// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cdemapper {

/// Malformed input stream. Carries the byte offset and 1-based line of the fault.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t byte, std::size_t line)
        : std::runtime_error(what), byte_(byte), line_(line) {}
    std::size_t byte() const noexcept { return byte_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t byte_;
    std::size_t line_;
};

/// Violated cross-record constraint (duplicate id, unknown reference).
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BuildError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ImportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Index artifact missing or written by an incompatible format version.
class ArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Upstream LLM failure that has no fallback (embedding requests).
class GatewayError : public std::runtime_error {
public:
    GatewayError(const std::string& what, std::vector<std::size_t> failed_batches)
        : std::runtime_error(what), failed_batches_(std::move(failed_batches)) {}
    const std::vector<std::size_t>& failed_batches() const noexcept { return failed_batches_; }

private:
    std::vector<std::size_t> failed_batches_;
};

} // namespace cdemapper
