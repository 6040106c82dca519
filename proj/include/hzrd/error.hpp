#pragma once

#include <stdexcept>
#include <string>

namespace hzrd {

// Input data violates a type invariant or a file is malformed.
class DataError : public std::runtime_error {
public:
    enum class Code {
        Invalid,            // generic invariant violation
        DimensionMismatch,
        NegativeTime,
        NoEvents,
        NonIncreasingGrid,
        EmptyCohort,
        MissingSubject,
        RowCountMismatch,
        CorruptHeader,
        UnsupportedVersion,
        Io,
        Parse,
    };

    DataError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}

    Code code() const noexcept { return code_; }

private:
    Code code_;
};

// A computation produced a non-finite value or diverged.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hzrd
