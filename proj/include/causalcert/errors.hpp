#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace causalcert {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed configuration: spec strings, CLI flags, config files, bad arguments.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Input data that violates the data model.
class DataError : public Error {
public:
    using Error::Error;
};

class SchemaError : public DataError {
public:
    SchemaError(const std::string& msg, std::string column)
        : DataError(msg), column_(std::move(column)) {}
    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& msg, std::size_t row, std::string column)
        : DataError(msg), row_(row), column_(std::move(column)) {}
    // Zero-based data row (header excluded).
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

// Observed outcome disagrees with the oracle potential outcome of the received arm.
class ConsistencyError : public DataError {
public:
    ConsistencyError(const std::string& msg, std::size_t row) : DataError(msg), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

// A split or subset left one treatment arm empty.
class DegenerateSplitError : public DataError {
public:
    using DataError::DataError;
};

// Numeric argument outside the domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

}  // namespace causalcert
