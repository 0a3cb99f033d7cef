//! Modelling, checking and SQL generation for layered UML-B/Event-B
//! database models.

pub mod ast;
pub mod parser;
pub mod resolve;
pub mod types;
pub mod engine;
pub mod checker;
pub mod patterns;
pub mod sqlgen;
pub mod cli;
