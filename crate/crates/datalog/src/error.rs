use std::fmt;

use thiserror::Error;

/// 1-based line/column of a token in rule text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

fn at(pos: &Option<Position>) -> String {
    pos.map(|p| format!("{p}: ")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatalogError {
    #[error("{position}: syntax error: {message}")]
    Syntax { position: Position, message: String },

    #[error("{}unsafe variable {variable} in rule `{rule}`", at(.position))]
    UnsafeVariable {
        variable: String,
        rule: String,
        position: Option<Position>,
    },

    #[error("{}arity conflict for {predicate}: declared with {expected} argument(s), used with {found}", at(.position))]
    ArityConflict {
        predicate: String,
        expected: usize,
        found: usize,
        position: Option<Position>,
    },

    #[error("program is not stratifiable: negative cycle {}", .cycle.join(" -> "))]
    NegativeCycle { cycle: Vec<String> },
}

impl DatalogError {
    /// Position of the offending text, when the error came from parsing.
    pub fn position(&self) -> Option<Position> {
        match self {
            DatalogError::Syntax { position, .. } => Some(*position),
            DatalogError::UnsafeVariable { position, .. }
            | DatalogError::ArityConflict { position, .. } => *position,
            DatalogError::NegativeCycle { .. } => None,
        }
    }
}
