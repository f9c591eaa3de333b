#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sqlenv {

/// Base of every error this library throws. `code()` is the stable
/// machine-readable name used in service replies and CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define SQLENV_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                     \
    public:                                                         \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    }

SQLENV_DEFINE_ERROR(EmptyQuery);
SQLENV_DEFINE_ERROR(UnknownDatabase);
SQLENV_DEFINE_ERROR(CorruptFile);
SQLENV_DEFINE_ERROR(IllegalHistory);
SQLENV_DEFINE_ERROR(IllegalTransition);
SQLENV_DEFINE_ERROR(InteractionBudgetExceeded);
SQLENV_DEFINE_ERROR(TagParseError);
SQLENV_DEFINE_ERROR(PolicyUnavailable);
SQLENV_DEFINE_ERROR(DuplicateKey);
SQLENV_DEFINE_ERROR(DimensionMismatch);
SQLENV_DEFINE_ERROR(EmbedderUnavailable);
SQLENV_DEFINE_ERROR(ConfigError);
SQLENV_DEFINE_ERROR(SchemaMismatch);
SQLENV_DEFINE_ERROR(UnknownSession);
SQLENV_DEFINE_ERROR(UnknownTask);
SQLENV_DEFINE_ERROR(IoError);

#undef SQLENV_DEFINE_ERROR

/// Unsupported or malformed SQL. `offset` is a byte offset into the input.
class ParseError : public Error {
public:
    ParseError(std::size_t offset, std::string expected, const std::string& message)
        : Error("ParseError", message + " at offset " + std::to_string(offset) +
                                  (expected.empty() ? "" : " (expected " + expected + ")")),
          offset_(offset), expected_(std::move(expected)) {}

    std::size_t offset() const noexcept { return offset_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t offset_;
    std::string expected_;
};

}  // namespace sqlenv
