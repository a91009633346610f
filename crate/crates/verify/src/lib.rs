//! Host package for the `acceptance` test target. Run it with
//! `cargo test -p congo-verify --test acceptance --release`.
