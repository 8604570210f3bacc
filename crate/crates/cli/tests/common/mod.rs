#![allow(dead_code)]

#[path = "../../../core/tests/common/ef.rs"]
pub mod ef;
pub mod sweep;
