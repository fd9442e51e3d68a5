//! Holds the `acceptance` test target, which runs after the library suites
//! because one of its criteria fails by design.
