#pragma once

#include <stdexcept>
#include <string>

namespace sonoflow {

// Error taxonomy shared by the library and the CLI. The CLI maps each
// branch to a process exit code: validation 1, I/O 2, numerical 3.

/// Bad inputs: shapes, domains, formats, unparsable files.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch or an image/field too small for the operation.
struct ShapeError : ValidationError {
    using ValidationError::ValidationError;
};

/// A file decodes but violates the expected layout (magic, bit depth, ...).
struct FormatError : ValidationError {
    using ValidationError::ValidationError;
};

/// A structured text input (manifest, spec JSON) fails to parse.
struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

/// A scalar argument outside its documented range.
struct DomainError : ValidationError {
    using ValidationError::ValidationError;
};

/// The operating system refused to read or write.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Optimization produced a non-finite quantity.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace sonoflow
