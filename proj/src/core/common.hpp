#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fading {

// Error taxonomy shared by the whole library. `code` mirrors the CLI /
// C-API exit codes: 2 usage, 3 data, 4 compute.
class Error : public std::runtime_error {
public:
    enum class Kind { usage = 2, data = 3, compute = 4 };

    Error(Kind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}
    Kind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    Kind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) { throw Error(Error::Kind::usage, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw Error(Error::Kind::data, msg); }
[[noreturn]] inline void throw_compute(const std::string& msg) { throw Error(Error::Kind::compute, msg); }

}  // namespace fading
