#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nbseg {

// Mutating an object whose required initialization has not happened yet.
class InvalidStateError : public std::logic_error {
public:
    explicit InvalidStateError(const std::string& msg) : std::logic_error(msg) {}
};

// Stain estimation cannot proceed: too few tissue pixels or a rank-deficient
// optical-density cloud.
class InsufficientTissueError : public std::runtime_error {
public:
    explicit InsufficientTissueError(const std::string& msg) : std::runtime_error(msg) {}
};

class CorruptCheckpointError : public std::runtime_error {
public:
    CorruptCheckpointError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (at byte offset " + std::to_string(offset) + ")"),
          offset(offset) {}
    std::size_t offset;
};

class InvalidAnnotationError : public std::invalid_argument {
public:
    InvalidAnnotationError(const std::string& msg, std::size_t polygon_index)
        : std::invalid_argument(msg + " (polygon #" + std::to_string(polygon_index) + ")"),
          polygon_index(polygon_index) {}
    std::size_t polygon_index;
};

class InvalidMaskError : public std::invalid_argument {
public:
    InvalidMaskError(const std::string& msg, int x, int y)
        : std::invalid_argument(msg + " (pixel " + std::to_string(x) + "," + std::to_string(y) + ")"),
          x(x), y(y) {}
    int x;
    int y;
};

}  // namespace nbseg
