//! Holds the `acceptance` test target. No library code.
