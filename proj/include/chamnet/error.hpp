#pragma once

#include <stdexcept>
#include <string>

namespace chamnet {

/// Broad failure classes; the CLI maps each one to a distinct exit code.
enum class ErrorClass { usage, data, oracle, internal };

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, ErrorClass cls = ErrorClass::data)
        : std::runtime_error(what), cls_(cls) {}

    ErrorClass error_class() const noexcept { return cls_; }

private:
    ErrorClass cls_;
};

#define CHAMNET_DEFINE_ERROR(Name, Class)                                  \
    class Name : public Error {                                            \
    public:                                                                \
        explicit Name(const std::string& what) : Error(what, Class) {}     \
    };

CHAMNET_DEFINE_ERROR(ParseError, ErrorClass::data)
CHAMNET_DEFINE_ERROR(InvalidGene, ErrorClass::data)
CHAMNET_DEFINE_ERROR(DimensionMismatch, ErrorClass::data)
CHAMNET_DEFINE_ERROR(SpaceMismatch, ErrorClass::data)
CHAMNET_DEFINE_ERROR(SingularKernel, ErrorClass::data)
CHAMNET_DEFINE_ERROR(PoolExhausted, ErrorClass::data)
CHAMNET_DEFINE_ERROR(InsufficientCandidates, ErrorClass::data)
CHAMNET_DEFINE_ERROR(MissingOperator, ErrorClass::data)
CHAMNET_DEFINE_ERROR(EmptyTrace, ErrorClass::data)
CHAMNET_DEFINE_ERROR(ConfigViolation, ErrorClass::usage)
CHAMNET_DEFINE_ERROR(OracleFailure, ErrorClass::oracle)

#undef CHAMNET_DEFINE_ERROR

/// A bad line in a record-oriented input file.
class MalformedRecord : public Error {
public:
    MalformedRecord(std::size_t line, const std::string& reason)
        : Error("line " + std::to_string(line) + ": " + reason, ErrorClass::data),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace chamnet
