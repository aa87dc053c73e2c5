// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod cli;
pub mod conflict;
pub mod corpus;
pub mod error;
pub mod model;
pub mod probes;
pub mod report;
pub mod swap;
pub mod tensor;
pub mod tokenizer;
pub mod toy;
