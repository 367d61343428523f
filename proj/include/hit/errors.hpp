#pragma once

#include <stdexcept>
#include <string>

namespace hit {

// User-facing failures (bad files, bad configs, bad CLI input). CLI exit code 1.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct bench_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Broken internal contracts (shape mismatches, invalid domains, non-finite
// values, violated invariants). CLI exit code 2.
struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct invariant_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hit
