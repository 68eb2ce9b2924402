#pragma once

#include <stdexcept>
#include <string>

namespace losa {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration. CLI exit code 2.
struct config_error : error {
    using error::error;
};

// Numerical failure: non-finite values, infeasible allocation. CLI exit code 3.
struct numeric_error : error {
    using error::error;
};

// Incompatible matrix/tensor shapes.
struct shape_error : numeric_error {
    using numeric_error::numeric_error;
};

// File I/O and container corruption. CLI exit code 4.
struct io_error : error {
    using error::error;
};

}  // namespace losa
