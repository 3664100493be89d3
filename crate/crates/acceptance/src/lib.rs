//! Acceptance suite for `nlsorbit`; the criteria live in `tests/acceptance.rs`.
