//! Holds the end-to-end acceptance suite (`tests/acceptance.rs`), which runs
//! the whole pipeline on phantoms and checks it against analytic oracles.
//! The crate itself exports nothing.
