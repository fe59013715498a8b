#pragma once

#include <stdexcept>
#include <string>

namespace emoflow {

// Shape/dimension disagreement between operands.
struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad structural configuration (head count, odd dims, invalid ratios).
struct config_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed or out-of-contract runtime data (empty sequence, bad label id).
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse that a correct caller never triggers (non-scalar backward, double backward).
struct contract_error : std::logic_error {
    using std::logic_error::logic_error;
};

// Container file carries an unknown format version.
struct version_error : data_error {
    using data_error::data_error;
};

// Container manifest is malformed (bad fields, overlap, out of bounds).
struct manifest_error : data_error {
    using data_error::data_error;
};

// Container payload is shorter than the manifest declares.
struct truncated_error : data_error {
    using data_error::data_error;
};

}  // namespace emoflow
