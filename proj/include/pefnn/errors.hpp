#pragma once

#include <stdexcept>
#include <string>

namespace pefnn {

/// Numeric and contract failures carry distinct types so callers (and the
/// CLI exit-code mapping) can tell them apart.
struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Requested mode block does not fit the grid (2m+1 > min(H, W)).
struct ModeOverflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Inverse transform of a supposedly Hermitian spectrum left a non-trivial
/// imaginary part; usually means a kernel symmetry constraint is broken.
struct ImaginaryResidue : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoGroupAxis : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A tape may drive exactly one backward pass per forward pass.
struct TapeConsumed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Relative-error denominators must be nonzero.
struct ZeroReference : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reference solver blew up (state left the plausible range).
struct Instability : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DryCell : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NegativeDepth : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace pefnn
