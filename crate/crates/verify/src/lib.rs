//! Holds the `acceptance` test target, which checks the simulator against
//! its reference figures. Run it with `cargo test -p phocnn-verify`.
