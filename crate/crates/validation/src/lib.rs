//! Holds the end-to-end acceptance suite (`cargo test -p jure-validation`).
//!
//! It lives in its own package so it runs after the unit, integration and
//! CLI tests of the other crates.
