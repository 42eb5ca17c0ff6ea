#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mr2 {

/// Base of every error raised by the library. The CLI maps the concrete
/// subclasses onto its exit-code taxonomy.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument combination (k-dagger out of range, bad index, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A combinatorial object would exceed its configured size cap.
class CapacityError : public Error {
public:
    CapacityError(const std::string& what, double requested)
        : Error(what), requested_(requested) {}
    double requested() const noexcept { return requested_; }

private:
    double requested_;
};

/// Problems with input data: missing columns, malformed cells, NaN/Inf.
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t row, std::string column)
        : DataError(what), row_(row), column_(std::move(column)) {}
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

/// An instrument column (raw or generated) has zero sample variance.
class DegenerateInstrumentError : public DataError {
public:
    DegenerateInstrumentError(const std::string& what, std::string name)
        : DataError(what), name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

/// Rank-deficient design matrix.
class CollinearityError : public DataError {
public:
    using DataError::DataError;
};

class SampleSizeError : public DataError {
public:
    using DataError::DataError;
};

/// Operation not defined for the supplied data (e.g. non-binary instruments
/// where a probability mass function is required).
class UnsupportedError : public DataError {
public:
    using DataError::DataError;
};

/// The identifying moment is numerically zero.
class WeakIdentificationError : public Error {
public:
    WeakIdentificationError(const std::string& what, double moment)
        : Error(what), moment_(moment) {}
    double moment() const noexcept { return moment_; }

private:
    double moment_;
};

/// Monte Carlo aggregation had nothing to aggregate.
class AggregationError : public Error {
public:
    using Error::Error;
};

}  // namespace mr2
