#pragma once

#include <stdexcept>
#include <string>

namespace hpfx {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension or block-shape disagreement.
struct ShapeError : Error {
    using Error::Error;
};

// Mixed harmonic sets, orderings or channel counts in one expression.
struct IncompatibilityError : Error {
    using Error::Error;
};

// Bad user-supplied value (nonpositive length, empty factor list, ...).
struct ValidationError : Error {
    using Error::Error;
};

// A branch/shunt failed the symmetric/invertible/lossy audit.
struct HypothesisError : Error {
    using Error::Error;
};

// An ex-ante invertibility condition failed; message names the matrix.
struct SolvabilityError : Error {
    using Error::Error;
};

// The harmonic-domain closed loop has no periodic steady state.
struct ResonanceError : Error {
    using Error::Error;
};

// Reference calculation evaluated at |v_D0| below the floor.
struct DegenerateOperatingPointError : Error {
    using Error::Error;
};

// Study-case file violations, with line context in the message.
struct ParseError : Error {
    using Error::Error;
};

// Operation called in the wrong solver state (e.g. certify before convergence).
struct StateError : Error {
    using Error::Error;
};

// KPI comparison against mismatched bases or harmonic sets.
struct ComparisonError : Error {
    using Error::Error;
};

// Invalid TDS capture/window configuration.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace hpfx
