use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::model::{NodeId, Violation};

/// Errors raised by the simulator core.
#[derive(Clone, Debug, PartialEq)]
pub enum CoreError {
    /// The configuration failed validation; every violated rule is listed.
    InvalidConfig(Vec<Violation>),
    /// A schedule is shorter than the window being checked.
    HorizonTooShort {
        horizon: u32,
        window: u32,
    },
    /// A numeric parameter is outside its domain.
    InvalidParameter {
        name: &'static str,
        message: String,
    },
    /// Partition groups overlap or do not cover every node.
    InvalidPartition(String),
    /// Edge from a node to itself.
    SelfLoop(NodeId),
    NodeOutOfRange {
        node: u32,
        n: u32,
    },
    /// Fewer fault-free values than an analysis step requires.
    InsufficientFaultFree {
        needed: usize,
        available: usize,
    },
    EmptyMultiset,
    MalformedTrace(String),
    MessageLength {
        expected: usize,
        actual: usize,
    },
}

impl CoreError {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        CoreError::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidConfig(violations) => {
                write!(f, "invalid configuration:")?;
                for v in violations {
                    write!(f, " [{}: {}] {};", v.field, v.rule, v.message)?;
                }
                Ok(())
            }
            CoreError::HorizonTooShort { horizon, window } => {
                write!(
                    f,
                    "schedule horizon {horizon} is shorter than window {window}"
                )
            }
            CoreError::InvalidParameter { name, message } => {
                write!(f, "invalid parameter `{name}`: {message}")
            }
            CoreError::InvalidPartition(msg) => write!(f, "invalid partition: {msg}"),
            CoreError::SelfLoop(node) => write!(f, "self-loop at node {node}"),
            CoreError::NodeOutOfRange { node, n } => {
                write!(f, "node {node} outside [1, {n}]")
            }
            CoreError::InsufficientFaultFree { needed, available } => write!(
                f,
                "need at least {needed} fault-free values, found {available}"
            ),
            CoreError::EmptyMultiset => write!(f, "empty multiset"),
            CoreError::MalformedTrace(msg) => write!(f, "malformed trace: {msg}"),
            CoreError::MessageLength { expected, actual } => {
                write!(f, "wire message must be {expected} bytes, got {actual}")
            }
        }
    }
}

impl core::error::Error for CoreError {}
