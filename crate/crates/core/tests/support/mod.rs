#![allow(dead_code)]

pub mod nn_oracle;
