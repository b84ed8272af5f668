//! Semi-naive bottom-up evaluation.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use indexmap::IndexSet;

use crate::ast::{CmpOp, Fact, FactSet, Literal, Program};
use crate::error::DatalogError;
use crate::stratify::stratum_indices;
use crate::value::{Term, Value};

/// String normalization used by the `~=` builtin.
pub type Normalizer = Arc<dyn Fn(&str) -> String + Send + Sync>;

/// Evaluates programs against an EDB snapshot.
///
/// An evaluator holds no state between calls; the same one can be shared
/// across threads evaluating different snapshots.
#[derive(Clone)]
pub struct Evaluator {
    normalizer: Normalizer,
}

impl Default for Evaluator {
    fn default() -> Self {
        Evaluator {
            normalizer: Arc::new(|s: &str| s.trim().to_lowercase()),
        }
    }
}

impl fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Evaluator").finish_non_exhaustive()
    }
}

impl Evaluator {
    /// Replaces the default `~=` normalization (trim + lowercase).
    pub fn with_normalizer(normalizer: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        Evaluator {
            normalizer: Arc::new(normalizer),
        }
    }

    /// Minimal model of `program` over `edb`, restricted to IDB predicates.
    ///
    /// EDB facts for predicates that some rule also derives are part of the
    /// result, so feeding the output back in adds nothing.
    pub fn evaluate(
        &self,
        program: &Program,
        edb: impl IntoIterator<Item = Fact>,
    ) -> Result<FactSet, DatalogError> {
        let strata = stratum_indices(program)?;
        let mut db = Database::new(program, edb);
        for stratum in &strata {
            self.run_stratum(program, stratum, &mut db);
        }
        Ok(db.idb_facts(program))
    }

    /// Same result as [`Evaluator::evaluate`], re-deriving everything each
    /// round by plain nested-loop matching.
    pub fn evaluate_naive(
        &self,
        program: &Program,
        edb: impl IntoIterator<Item = Fact>,
    ) -> Result<FactSet, DatalogError> {
        crate::naive::evaluate(program, edb, &self.normalizer)
    }

    fn run_stratum(&self, program: &Program, stratum: &[usize], db: &mut Database) {
        let rules: Vec<CompiledRule> = stratum
            .iter()
            .map(|&i| CompiledRule::compile(&program.rules()[i], db))
            .collect();
        let recursive: BTreeSet<usize> = rules.iter().map(|r| r.head_rel).collect();

        // Every rule once over the full database.
        let first: Vec<Plan> = rules.iter().map(|r| r.plan(None)).collect();
        for plan in &first {
            db.ensure_indexes(plan);
        }
        let mut derived: HashMap<usize, Vec<Tuple>> = HashMap::new();
        for (rule, plan) in rules.iter().zip(&first) {
            let out = derived.entry(rule.head_rel).or_default();
            Exec::new(self, db, None).run(rule, plan, out);
        }
        let mut delta = db.absorb(derived);

        // Delta plans: one per positive body literal over a relation of this stratum.
        let delta_plans: Vec<Vec<(usize, Plan)>> = rules
            .iter()
            .map(|r| {
                r.body
                    .iter()
                    .enumerate()
                    .filter_map(|(i, lit)| match lit {
                        CLit::Pos { rel, .. } if recursive.contains(rel) => Some((*rel, r.plan(Some(i)))),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        for plans in &delta_plans {
            for (_, plan) in plans {
                db.ensure_indexes(plan);
            }
        }

        while delta.values().any(|d| !d.is_empty()) {
            for plans in &delta_plans {
                for (rel, plan) in plans {
                    if let Some(d) = delta.get_mut(rel) {
                        d.ensure_index_for(plan, true);
                    }
                }
            }
            let mut derived: HashMap<usize, Vec<Tuple>> = HashMap::new();
            for (rule, plans) in rules.iter().zip(&delta_plans) {
                for (rel, plan) in plans {
                    let Some(d) = delta.get(rel).filter(|d| !d.is_empty()) else {
                        continue;
                    };
                    let out = derived.entry(rule.head_rel).or_default();
                    Exec::new(self, db, Some(d)).run(rule, plan, out);
                }
            }
            delta = db.absorb(derived);
        }
    }

    fn compare(&self, op: CmpOp, a: &Value, b: &Value) -> bool {
        compare(op, a, b, &self.normalizer)
    }
}

/// Builtin semantics shared by both evaluators.
pub(crate) fn compare(op: CmpOp, a: &Value, b: &Value, normalizer: &Normalizer) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => match op {
            CmpOp::Eq | CmpOp::NormEq => x == y,
            CmpOp::Ne => x != y,
            CmpOp::Lt => x < y,
            CmpOp::Le => x <= y,
        },
        (Value::Str(x), Value::Str(y)) => match op {
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
            CmpOp::Lt => x < y,
            CmpOp::Le => x <= y,
            CmpOp::NormEq => x == y || normalizer(x) == normalizer(y),
        },
        _ => false,
    }
}

/// Free-function form of [`Evaluator::evaluate`] with the default normalizer.
pub fn evaluate(program: &Program, edb: impl IntoIterator<Item = Fact>) -> Result<FactSet, DatalogError> {
    Evaluator::default().evaluate(program, edb)
}

/// Free-function form of [`Evaluator::evaluate_naive`].
pub fn evaluate_naive(
    program: &Program,
    edb: impl IntoIterator<Item = Fact>,
) -> Result<FactSet, DatalogError> {
    Evaluator::default().evaluate_naive(program, edb)
}

type Tuple = Box<[Value]>;

#[derive(Default)]
struct Relation {
    tuples: IndexSet<Tuple>,
    indexes: HashMap<Vec<usize>, HashMap<Vec<Value>, Vec<u32>>>,
}

impl Relation {
    fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    fn insert(&mut self, t: Tuple) -> bool {
        let (pos, fresh) = self.tuples.insert_full(t);
        if fresh {
            let t = &self.tuples[pos];
            for (cols, index) in &mut self.indexes {
                let key = cols.iter().map(|&c| t[c].clone()).collect();
                index.entry(key).or_default().push(pos as u32);
            }
        }
        fresh
    }

    fn ensure_index(&mut self, cols: &[usize]) {
        if cols.is_empty() || self.indexes.contains_key(cols) {
            return;
        }
        let mut index: HashMap<Vec<Value>, Vec<u32>> = HashMap::new();
        for (pos, t) in self.tuples.iter().enumerate() {
            let key = cols.iter().map(|&c| t[c].clone()).collect();
            index.entry(key).or_default().push(pos as u32);
        }
        self.indexes.insert(cols.to_vec(), index);
    }

    fn ensure_index_for(&mut self, plan: &Plan, delta: bool) {
        for step in &plan.steps {
            if let Step::Scan { delta: d, key_cols, .. } = step {
                if *d == delta {
                    self.ensure_index(key_cols);
                }
            }
        }
    }

    fn lookup<'a>(&'a self, cols: &[usize], key: &[Value]) -> Box<dyn Iterator<Item = &'a Tuple> + 'a> {
        if cols.is_empty() {
            return Box::new(self.tuples.iter());
        }
        match self.indexes.get(cols).and_then(|ix| ix.get(key)) {
            Some(positions) => Box::new(positions.iter().map(move |&p| &self.tuples[p as usize])),
            None => Box::new(std::iter::empty()),
        }
    }
}

struct Database {
    rel_ids: HashMap<String, usize>,
    relations: Vec<Relation>,
}

impl Database {
    fn new(program: &Program, edb: impl IntoIterator<Item = Fact>) -> Self {
        let mut rel_ids = HashMap::new();
        for pred in program.arities().keys() {
            let n = rel_ids.len();
            rel_ids.insert(pred.clone(), n);
        }
        let mut relations: Vec<Relation> = (0..rel_ids.len()).map(|_| Relation::default()).collect();
        for fact in edb {
            // Facts of unknown predicates or the wrong arity can never match a rule.
            if program.arity(&fact.predicate) != Some(fact.args.len()) {
                continue;
            }
            relations[rel_ids[&fact.predicate]].insert(fact.args.into_boxed_slice());
        }
        Database { rel_ids, relations }
    }

    fn rel(&self, predicate: &str) -> usize {
        self.rel_ids[predicate]
    }

    fn ensure_indexes(&mut self, plan: &Plan) {
        for step in &plan.steps {
            if let Step::Scan { rel, delta: false, key_cols, .. } = step {
                self.relations[*rel].ensure_index(key_cols);
            }
        }
    }

    /// Inserts derived tuples, returning the genuinely new ones as deltas.
    fn absorb(&mut self, derived: HashMap<usize, Vec<Tuple>>) -> HashMap<usize, Relation> {
        let mut delta: HashMap<usize, Relation> = HashMap::new();
        for (rel, tuples) in derived {
            for t in tuples {
                if self.relations[rel].insert(t.clone()) {
                    delta.entry(rel).or_default().insert(t);
                }
            }
        }
        delta
    }

    fn idb_facts(&self, program: &Program) -> FactSet {
        let mut out = FactSet::new();
        for pred in program.idb_predicates() {
            for t in &self.relations[self.rel(pred)].tuples {
                out.insert(Fact::new(pred, t.to_vec()));
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
enum Slot {
    Const(Value),
    Var(usize),
}

enum CLit {
    Pos { rel: usize, args: Vec<Slot> },
    Neg { rel: usize, args: Vec<Slot> },
    Cmp { op: CmpOp, left: Slot, right: Slot },
}

struct CompiledRule {
    head_rel: usize,
    head: Vec<Slot>,
    body: Vec<CLit>,
    vars: usize,
}

impl CompiledRule {
    fn compile(rule: &crate::ast::Rule, db: &Database) -> Self {
        let mut names: HashMap<String, usize> = HashMap::new();
        let mut slot = |t: &Term| -> Slot {
            match t {
                Term::Const(v) => Slot::Const(v.clone()),
                Term::Var(name) => {
                    let n = names.len();
                    Slot::Var(*names.entry(name.clone()).or_insert(n))
                }
            }
        };
        let body = rule
            .body
            .iter()
            .map(|lit| match lit {
                Literal::Pos(a) => CLit::Pos {
                    rel: db.rel(&a.predicate),
                    args: a.args.iter().map(&mut slot).collect(),
                },
                Literal::Neg(a) => CLit::Neg {
                    rel: db.rel(&a.predicate),
                    args: a.args.iter().map(&mut slot).collect(),
                },
                Literal::Cmp(c) => CLit::Cmp {
                    op: c.op,
                    left: slot(&c.left),
                    right: slot(&c.right),
                },
            })
            .collect();
        let head = rule.head.args.iter().map(&mut slot).collect();
        CompiledRule {
            head_rel: db.rel(&rule.head.predicate),
            head,
            body,
            vars: names.len(),
        }
    }

    /// Orders the body for execution. The delta literal, if any, goes first;
    /// then positives greedily by number of bound arguments, with negations
    /// and comparisons placed as soon as their variables are bound.
    fn plan(&self, delta: Option<usize>) -> Plan {
        let mut bound = vec![false; self.vars];
        let mut steps = Vec::new();
        let mut positives: Vec<usize> = self
            .body
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, CLit::Pos { .. }))
            .map(|(i, _)| i)
            .collect();
        let mut filters: Vec<usize> = (0..self.body.len()).filter(|i| !positives.contains(i)).collect();

        let is_bound = |s: &Slot, bound: &[bool]| match s {
            Slot::Const(_) => true,
            Slot::Var(v) => bound[*v],
        };

        let flush = |filters: &mut Vec<usize>, steps: &mut Vec<Step>, bound: &[bool]| {
            filters.retain(|&i| {
                let ready = match &self.body[i] {
                    CLit::Neg { args, .. } => args.iter().all(|s| is_bound(s, bound)),
                    CLit::Cmp { left, right, .. } => is_bound(left, bound) && is_bound(right, bound),
                    CLit::Pos { .. } => unreachable!(),
                };
                if ready {
                    steps.push(match &self.body[i] {
                        CLit::Neg { rel, args } => Step::Neg { rel: *rel, args: args.clone() },
                        CLit::Cmp { op, left, right } => Step::Cmp {
                            op: *op,
                            left: left.clone(),
                            right: right.clone(),
                        },
                        CLit::Pos { .. } => unreachable!(),
                    });
                }
                !ready
            });
        };

        flush(&mut filters, &mut steps, &bound);
        while !positives.is_empty() {
            let pick = match delta {
                Some(d) if positives.contains(&d) => d,
                _ => *positives
                    .iter()
                    .max_by_key(|&&i| {
                        let CLit::Pos { args, .. } = &self.body[i] else { unreachable!() };
                        let score = args.iter().filter(|s| is_bound(s, &bound)).count();
                        (score, std::cmp::Reverse(i))
                    })
                    .unwrap(),
            };
            positives.retain(|&i| i != pick);
            let CLit::Pos { rel, args } = &self.body[pick] else { unreachable!() };
            let mut key_cols = Vec::new();
            let mut key = Vec::new();
            let mut binds = Vec::new();
            let mut checks = Vec::new();
            let mut local = bound.clone();
            for (col, s) in args.iter().enumerate() {
                match s {
                    Slot::Const(_) => {
                        key_cols.push(col);
                        key.push(s.clone());
                    }
                    Slot::Var(v) if bound[*v] => {
                        key_cols.push(col);
                        key.push(s.clone());
                    }
                    Slot::Var(v) if local[*v] => checks.push((col, *v)),
                    Slot::Var(v) => {
                        local[*v] = true;
                        binds.push((col, *v));
                    }
                }
            }
            bound = local;
            steps.push(Step::Scan {
                rel: *rel,
                delta: Some(pick) == delta,
                key_cols,
                key,
                binds,
                checks,
            });
            flush(&mut filters, &mut steps, &bound);
        }
        debug_assert!(filters.is_empty(), "unsafe rule reached the planner");
        Plan { steps }
    }
}

enum Step {
    Scan {
        rel: usize,
        delta: bool,
        key_cols: Vec<usize>,
        key: Vec<Slot>,
        binds: Vec<(usize, usize)>,
        checks: Vec<(usize, usize)>,
    },
    Neg {
        rel: usize,
        args: Vec<Slot>,
    },
    Cmp {
        op: CmpOp,
        left: Slot,
        right: Slot,
    },
}

struct Plan {
    steps: Vec<Step>,
}

struct Exec<'a> {
    evaluator: &'a Evaluator,
    db: &'a Database,
    delta: Option<&'a Relation>,
}

impl<'a> Exec<'a> {
    fn new(evaluator: &'a Evaluator, db: &'a Database, delta: Option<&'a Relation>) -> Self {
        Exec { evaluator, db, delta }
    }

    fn run(&self, rule: &CompiledRule, plan: &Plan, out: &mut Vec<Tuple>) {
        let mut env: Vec<Option<Value>> = vec![None; rule.vars];
        self.step(rule, &plan.steps, &mut env, out);
    }

    fn resolve<'e>(slot: &'e Slot, env: &'e [Option<Value>]) -> &'e Value {
        match slot {
            Slot::Const(v) => v,
            Slot::Var(i) => env[*i].as_ref().expect("variable bound by plan"),
        }
    }

    fn step(&self, rule: &CompiledRule, steps: &[Step], env: &mut Vec<Option<Value>>, out: &mut Vec<Tuple>) {
        let Some((first, rest)) = steps.split_first() else {
            out.push(rule.head.iter().map(|s| Self::resolve(s, env).clone()).collect());
            return;
        };
        match first {
            Step::Scan {
                rel,
                delta,
                key_cols,
                key,
                binds,
                checks,
            } => {
                let relation = if *delta {
                    self.delta.expect("delta relation for delta plan")
                } else {
                    &self.db.relations[*rel]
                };
                let key: Vec<Value> = key.iter().map(|s| Self::resolve(s, env).clone()).collect();
                for t in relation.lookup(key_cols, &key) {
                    for &(col, var) in binds {
                        env[var] = Some(t[col].clone());
                    }
                    if checks.iter().all(|&(col, var)| env[var].as_ref() == Some(&t[col])) {
                        self.step(rule, rest, env, out);
                    }
                }
                for &(_, var) in binds {
                    env[var] = None;
                }
            }
            Step::Neg { rel, args } => {
                let t: Tuple = args.iter().map(|s| Self::resolve(s, env).clone()).collect();
                if !self.db.relations[*rel].tuples.contains(&t) {
                    self.step(rule, rest, env, out);
                }
            }
            Step::Cmp { op, left, right } => {
                if self
                    .evaluator
                    .compare(*op, Self::resolve(left, env), Self::resolve(right, env))
                {
                    self.step(rule, rest, env, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{parse_facts, parse_program};

    fn model(rules: &str, facts: &str) -> Vec<String> {
        let p = parse_program(rules).unwrap();
        let f = parse_facts(facts).unwrap();
        let semi = evaluate(&p, f.clone()).unwrap();
        assert_eq!(semi, evaluate_naive(&p, f).unwrap());
        semi.into_iter().map(|f| f.to_string()).collect()
    }

    #[test]
    fn transitive_closure() {
        let out = model(
            "path(X,Y) :- edge(X,Y). path(X,Z) :- path(X,Y), edge(Y,Z).",
            "edge(a,b). edge(b,c).",
        );
        assert_eq!(out, ["path(a, b).", "path(a, c).", "path(b, c)."]);
    }

    #[test]
    fn empty_edb_gives_empty_idb() {
        assert!(model("path(X,Y) :- edge(X,Y). path(X,Z) :- path(X,Y), edge(Y,Z).", "").is_empty());
    }

    #[test]
    fn no_rules_gives_empty_idb() {
        assert!(model("", "edge(a, b).").is_empty());
    }

    #[test]
    fn bodyless_rule() {
        assert_eq!(model("root(a).", ""), ["root(a)."]);
    }

    #[test]
    fn stratified_negation() {
        let out = model(
            "reach(X) :- start(X). reach(Y) :- reach(X), edge(X, Y). unreached(X) :- node(X), not reach(X).",
            "start(a). edge(a, b). node(a). node(b). node(c).",
        );
        assert!(out.contains(&"unreached(c).".to_string()));
        assert!(!out.iter().any(|f| f == "unreached(a)." || f == "unreached(b)."));
    }

    #[test]
    fn repeated_variable_in_atom() {
        assert_eq!(model("loop(X) :- edge(X, X).", "edge(a, a). edge(a, b)."), ["loop(a)."]);
    }

    #[test]
    fn mixed_type_comparisons_are_false() {
        let out = model(
            "lt(X, Y) :- v(X), v(Y), X < Y. ne(X, Y) :- v(X), v(Y), X != Y.",
            "v(1). v(a).",
        );
        assert!(out.is_empty(), "{out:?}");
    }

    #[test]
    fn norm_eq_uses_normalizer() {
        let p = parse_program("same(X, Y) :- v(X), v(Y), X ~= Y, X < Y.").unwrap();
        let f = parse_facts("v(\"ERP \"). v(erp). v(\"crm\").").unwrap();
        let out = evaluate(&p, f.clone()).unwrap();
        assert_eq!(out.len(), 1);
        let strict = Evaluator::with_normalizer(|s| s.to_string());
        assert!(strict.evaluate(&p, f).unwrap().is_empty());
    }

    #[test]
    fn edb_facts_for_idb_predicates_are_kept() {
        assert_eq!(model("p(X) :- q(X).", "p(z). q(a)."), ["p(a).", "p(z)."]);
    }

    #[test]
    fn constants_in_body_and_head() {
        let out = model("tagged(X, \"hot\") :- t(X, 1).", "t(a, 1). t(b, 2). t(c, \"1\").");
        assert_eq!(out, ["tagged(a, hot)."]);
    }

    #[test]
    fn unstratifiable_program_is_an_error() {
        let p = parse_program("p(X) :- e(X), not q(X). q(X) :- e(X), not p(X).").unwrap();
        assert!(matches!(evaluate(&p, vec![]), Err(DatalogError::NegativeCycle { .. })));
    }
}
