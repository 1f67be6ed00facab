#pragma once

#include <stdexcept>
#include <string>

namespace xgkit {

// Every error raised by the toolkit derives from Error. The CLI maps the
// category to a process exit code and prints what() behind a stable prefix.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 2; }
    virtual const char* prefix() const noexcept { return "error"; }
};

class UsageError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 1; }
    const char* prefix() const noexcept override { return "usage error"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 1; }
    const char* prefix() const noexcept override { return "config error"; }
};

class InputError : public Error {
public:
    using Error::Error;
    const char* prefix() const noexcept override { return "input error"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* prefix() const noexcept override { return "io error"; }
};

class FormatError : public Error {
public:
    using Error::Error;
    const char* prefix() const noexcept override { return "format error"; }
};

class CorruptionError : public Error {
public:
    using Error::Error;
    const char* prefix() const noexcept override { return "corruption error"; }
};

// A numeric value that should be impossible under the math (undefined correlation).
class UndefinedError : public Error {
public:
    using Error::Error;
    const char* prefix() const noexcept override { return "undefined"; }
};

class InvariantError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
    const char* prefix() const noexcept override { return "invariant violation"; }
};

} // namespace xgkit
