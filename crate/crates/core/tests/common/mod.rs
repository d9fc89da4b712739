#![allow(dead_code)]

pub mod trends;
