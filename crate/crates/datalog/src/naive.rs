//! Naive fixpoint evaluation: every round re-derives every rule over the
//! whole database with substitution-based nested loops. Slow, but it shares
//! nothing with the semi-naive planner beyond stratification and builtins.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{Atom, Fact, FactSet, Literal, Program, Rule};
use crate::error::DatalogError;
use crate::eval::{compare, Normalizer};
use crate::stratify::stratum_indices;
use crate::value::{Term, Value};

type Subst = BTreeMap<String, Value>;
type Db = BTreeMap<String, BTreeSet<Vec<Value>>>;

pub(crate) fn evaluate(
    program: &Program,
    edb: impl IntoIterator<Item = Fact>,
    normalizer: &Normalizer,
) -> Result<FactSet, DatalogError> {
    let strata = stratum_indices(program)?;
    let mut db: Db = BTreeMap::new();
    for fact in edb {
        db.entry(fact.predicate).or_default().insert(fact.args);
    }
    for stratum in strata {
        loop {
            let mut fresh = Vec::new();
            for &i in &stratum {
                let rule = &program.rules()[i];
                for subst in matches(rule, &db, normalizer) {
                    let tuple = ground(&rule.head, &subst);
                    if !db.get(&rule.head.predicate).is_some_and(|r| r.contains(&tuple)) {
                        fresh.push((rule.head.predicate.clone(), tuple));
                    }
                }
            }
            if fresh.is_empty() {
                break;
            }
            for (pred, tuple) in fresh {
                db.entry(pred).or_default().insert(tuple);
            }
        }
    }
    let mut out = FactSet::new();
    for pred in program.idb_predicates() {
        let arity = program.arity(pred);
        for tuple in db.get(pred).into_iter().flatten() {
            if Some(tuple.len()) == arity {
                out.insert(Fact::new(pred, tuple.clone()));
            }
        }
    }
    Ok(out)
}

fn matches(rule: &Rule, db: &Db, normalizer: &Normalizer) -> Vec<Subst> {
    let mut substs = vec![Subst::new()];
    for atom in rule.positive_atoms() {
        let empty = BTreeSet::new();
        let relation = db.get(&atom.predicate).unwrap_or(&empty);
        substs = substs
            .iter()
            .flat_map(|s| relation.iter().filter_map(move |t| unify(atom, t, s)))
            .collect();
    }
    substs.retain(|s| {
        rule.body.iter().all(|lit| match lit {
            Literal::Pos(_) => true,
            Literal::Neg(a) => {
                let t = ground(a, s);
                !db.get(&a.predicate).is_some_and(|r| r.contains(&t))
            }
            Literal::Cmp(c) => compare(c.op, &value(&c.left, s), &value(&c.right, s), normalizer),
        })
    });
    substs
}

fn unify(atom: &Atom, tuple: &[Value], subst: &Subst) -> Option<Subst> {
    if atom.args.len() != tuple.len() {
        return None;
    }
    let mut s = subst.clone();
    for (term, v) in atom.args.iter().zip(tuple) {
        match term {
            Term::Const(c) if c != v => return None,
            Term::Const(_) => {}
            Term::Var(name) => match s.get(name) {
                Some(bound) if bound != v => return None,
                Some(_) => {}
                None => {
                    s.insert(name.clone(), v.clone());
                }
            },
        }
    }
    Some(s)
}

fn value(term: &Term, subst: &Subst) -> Value {
    match term {
        Term::Const(v) => v.clone(),
        Term::Var(name) => subst[name].clone(),
    }
}

fn ground(atom: &Atom, subst: &Subst) -> Vec<Value> {
    atom.args.iter().map(|t| value(t, subst)).collect()
}
