//! Holds the `acceptance` test target, which checks every numerical
//! criterion of the laboratory at its pinned tolerance. Run it with
//! `cargo test -p smallcap-validation --test acceptance`.
