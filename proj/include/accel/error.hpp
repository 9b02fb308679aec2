#pragma once

#include <stdexcept>
#include <string>

namespace accel {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Layer/tensor shape inconsistencies.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Layer cannot be mapped onto the configured array.
struct ScheduleError : Error {
    explicit ScheduleError(const std::string& msg) : Error(msg) {}
};

// File format / serialization problems.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace accel
