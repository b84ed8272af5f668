use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::error::{DatalogError, Position};
use crate::value::{Term, Value};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| matches!(t, Term::Const(_)))
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::as_var)
    }

    /// Converts a ground atom into a fact.
    pub fn to_fact(&self) -> Option<Fact> {
        let args = self
            .args
            .iter()
            .map(|t| match t {
                Term::Const(v) => Some(v.clone()),
                Term::Var(_) => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Fact::new(self.predicate.clone(), args))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                a.fmt(f)?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Builtin comparison operators.
///
/// Every operator evaluates to false when its operands have different types
/// (integer vs string). `NormEq` compares strings after normalization by the
/// evaluator's [`crate::Normalizer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    NormEq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::NormEq => "~=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Comparison {
    pub op: CmpOp,
    pub left: Term,
    pub right: Term,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.left, self.op.symbol(), self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Literal {
    Pos(Atom),
    Neg(Atom),
    Cmp(Comparison),
}

impl Literal {
    pub fn atom(&self) -> Option<&Atom> {
        match self {
            Literal::Pos(a) | Literal::Neg(a) => Some(a),
            Literal::Cmp(_) => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Pos(a) => a.fmt(f),
            Literal::Neg(a) => write!(f, "not {a}"),
            Literal::Cmp(c) => c.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Literal>,
}

impl Rule {
    pub fn new(head: Atom, body: Vec<Literal>) -> Self {
        Rule { head, body }
    }

    pub fn fact(head: Atom) -> Self {
        Rule { head, body: vec![] }
    }

    pub fn positive_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|l| match l {
            Literal::Pos(a) => Some(a),
            _ => None,
        })
    }

    /// Range restriction and safety: every variable of the head, of a negated
    /// atom or of a builtin must occur in some positive body atom.
    pub fn check_safety(&self) -> Result<(), String> {
        let bound: HashSet<&str> = self.positive_atoms().flat_map(Atom::variables).collect();
        let head_vars = self.head.variables();
        let guarded = self.body.iter().flat_map(|l| -> Vec<&str> {
            match l {
                Literal::Pos(_) => vec![],
                Literal::Neg(a) => a.variables().collect(),
                Literal::Cmp(c) => [&c.left, &c.right]
                    .into_iter()
                    .filter_map(Term::as_var)
                    .collect(),
            }
        });
        for v in head_vars.chain(guarded) {
            if !bound.contains(v) {
                return Err(v.to_string());
            }
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.head.fmt(f)?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            for (i, l) in self.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                l.fmt(f)?;
            }
        }
        f.write_str(".")
    }
}

/// A ground tuple of some relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fact {
    pub predicate: String,
    pub args: Vec<Value>,
}

impl Fact {
    pub fn new(predicate: impl Into<String>, args: Vec<Value>) -> Self {
        Fact {
            predicate: predicate.into(),
            args,
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                a.fmt(f)?;
            }
            f.write_str(")")?;
        }
        f.write_str(".")
    }
}

pub type FactSet = BTreeSet<Fact>;

/// A validated set of rules with a fixed arity per predicate.
///
/// Duplicate rules are dropped; the first occurrence keeps its place.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    rules: Vec<Rule>,
    arities: BTreeMap<String, usize>,
}

impl Program {
    pub fn new(rules: impl IntoIterator<Item = Rule>) -> Result<Self, DatalogError> {
        let mut program = Program::default();
        for rule in rules {
            program.push(rule, None)?;
        }
        Ok(program)
    }

    pub(crate) fn push(&mut self, rule: Rule, position: Option<Position>) -> Result<(), DatalogError> {
        if let Err(variable) = rule.check_safety() {
            return Err(DatalogError::UnsafeVariable {
                variable,
                rule: rule.to_string(),
                position,
            });
        }
        let atoms = std::iter::once(&rule.head).chain(rule.body.iter().filter_map(Literal::atom));
        let mut staged: Vec<(&str, usize)> = Vec::new();
        for atom in atoms {
            let known = self
                .arities
                .get(atom.predicate.as_str())
                .copied()
                .or_else(|| staged.iter().find(|(p, _)| *p == atom.predicate).map(|(_, a)| *a));
            match known {
                Some(expected) if expected != atom.arity() => {
                    return Err(DatalogError::ArityConflict {
                        predicate: atom.predicate.clone(),
                        expected,
                        found: atom.arity(),
                        position,
                    })
                }
                Some(_) => {}
                None => staged.push((&atom.predicate, atom.arity())),
            }
        }
        for (p, a) in staged {
            self.arities.insert(p.to_string(), a);
        }
        if !self.rules.contains(&rule) {
            self.rules.push(rule);
        }
        Ok(())
    }

    /// Union of two programs; fails on arity conflicts between them.
    pub fn merge(&self, other: &Program) -> Result<Program, DatalogError> {
        let mut merged = self.clone();
        for rule in &other.rules {
            merged.push(rule.clone(), None)?;
        }
        Ok(merged)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Every predicate mentioned anywhere, with its arity.
    pub fn arities(&self) -> &BTreeMap<String, usize> {
        &self.arities
    }

    pub fn arity(&self, predicate: &str) -> Option<usize> {
        self.arities.get(predicate).copied()
    }

    /// Predicates defined by at least one rule head (the IDB).
    pub fn idb_predicates(&self) -> BTreeSet<&str> {
        self.rules.iter().map(|r| r.head.predicate.as_str()).collect()
    }

    /// Predicates only ever used in rule bodies (the EDB).
    pub fn edb_predicates(&self) -> BTreeSet<&str> {
        let idb = self.idb_predicates();
        self.arities
            .keys()
            .map(String::as_str)
            .filter(|p| !idb.contains(p))
            .collect()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(p: &str, vars: &[&str]) -> Atom {
        Atom::new(p, vars.iter().map(|v| Term::var(*v)).collect())
    }

    #[test]
    fn unsafe_head_variable_is_reported() {
        let rule = Rule::new(atom("p", &["X", "Y"]), vec![Literal::Pos(atom("q", &["X"]))]);
        let err = Program::new([rule]).unwrap_err();
        assert!(matches!(err, DatalogError::UnsafeVariable { ref variable, .. } if variable == "Y"));
    }

    #[test]
    fn arity_conflict_inside_one_rule() {
        let rule = Rule::new(
            atom("p", &["X"]),
            vec![Literal::Pos(atom("q", &["X"])), Literal::Pos(atom("q", &["X", "X"]))],
        );
        assert!(matches!(
            Program::new([rule]),
            Err(DatalogError::ArityConflict { expected: 1, found: 2, .. })
        ));
    }

    #[test]
    fn duplicate_rules_are_dropped() {
        let rule = Rule::new(atom("p", &["X"]), vec![Literal::Pos(atom("q", &["X"]))]);
        let p = Program::new([rule.clone(), rule]).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.idb_predicates().into_iter().collect::<Vec<_>>(), ["p"]);
        assert_eq!(p.edb_predicates().into_iter().collect::<Vec<_>>(), ["q"]);
    }
}
