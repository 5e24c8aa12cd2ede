#![allow(dead_code)]

pub mod levels;
pub mod order;
