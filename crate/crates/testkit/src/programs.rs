//! Random stratifiable Datalog programs and EDBs, emitted as rule text.
//!
//! IDB predicates are numbered; a rule for `p<i>` may use `p<j>` positively
//! only for `j <= i` and negatively only for `j < i`, which makes every
//! generated program stratifiable by construction.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

const VARS: [&str; 4] = ["X", "Y", "Z", "W"];
const CONSTS: [&str; 6] = ["a", "b", "c", "d", "1", "2"];

#[derive(Debug, Clone)]
pub struct RandomProgram {
    pub rules: String,
    pub facts: String,
    /// Number of distinct predicates (EDB + IDB).
    pub predicates: usize,
    pub fact_count: usize,
}

#[derive(Clone, Copy)]
struct Pred {
    name: &'static str,
    arity: usize,
}

const EDB: [Pred; 2] = [Pred { name: "e0", arity: 2 }, Pred { name: "e1", arity: 1 }];
const IDB_NAMES: [&str; 4] = ["p0", "p1", "p2", "p3"];

fn term(rng: &mut ChaCha8Rng, const_bias: f64) -> String {
    if rng.gen_bool(const_bias) {
        CONSTS.choose(rng).unwrap().to_string()
    } else {
        VARS.choose(rng).unwrap().to_string()
    }
}

fn atom(name: &str, args: &[String]) -> String {
    if args.is_empty() {
        name.to_string()
    } else {
        format!("{name}({})", args.join(", "))
    }
}

/// A program with at most 6 predicates and at most 30 EDB facts.
pub fn random_program(seed: u64) -> RandomProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idb_count = rng.gen_range(1..=4);
    let idb: Vec<Pred> = (0..idb_count)
        .map(|i| Pred {
            name: IDB_NAMES[i],
            arity: rng.gen_range(0..=2),
        })
        .collect();

    let mut rules = Vec::new();
    for (i, head) in idb.iter().enumerate() {
        for _ in 0..rng.gen_range(1..=3) {
            let positive_pool: Vec<Pred> = EDB.iter().copied().chain(idb[..=i].iter().copied()).collect();
            let negative_pool: Vec<Pred> = EDB.iter().copied().chain(idb[..i].iter().copied()).collect();

            let mut body = Vec::new();
            let mut bound: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                let p = *positive_pool.choose(&mut rng).unwrap();
                let args: Vec<String> = (0..p.arity).map(|_| term(&mut rng, 0.2)).collect();
                bound.extend(args.iter().filter(|a| a.starts_with(char::is_uppercase)).cloned());
                body.push(atom(p.name, &args));
            }
            bound.sort();
            bound.dedup();

            let pick_bound = |rng: &mut ChaCha8Rng| -> String {
                if bound.is_empty() || rng.gen_bool(0.15) {
                    CONSTS.choose(rng).unwrap().to_string()
                } else {
                    bound.choose(rng).unwrap().clone()
                }
            };
            if rng.gen_bool(0.35) {
                let p = *negative_pool.choose(&mut rng).unwrap();
                let args: Vec<String> = (0..p.arity).map(|_| pick_bound(&mut rng)).collect();
                body.push(format!("not {}", atom(p.name, &args)));
            }
            if rng.gen_bool(0.3) {
                let op = ["=", "!=", "<", "<="].choose(&mut rng).unwrap();
                let (l, r) = (pick_bound(&mut rng), pick_bound(&mut rng));
                body.push(format!("{l} {op} {r}"));
            }
            let head_args: Vec<String> = (0..head.arity).map(|_| pick_bound(&mut rng)).collect();
            rules.push(format!("{} :- {}.", atom(head.name, &head_args), body.join(", ")));
        }
    }

    let fact_count = rng.gen_range(0..=30);
    let mut facts = Vec::new();
    for _ in 0..fact_count {
        let p = EDB[rng.gen_range(0..EDB.len())];
        let args: Vec<String> = (0..p.arity).map(|_| CONSTS.choose(&mut rng).unwrap().to_string()).collect();
        facts.push(format!("{}.", atom(p.name, &args)));
    }

    RandomProgram {
        rules: rules.join("\n"),
        facts: facts.join("\n"),
        predicates: EDB.len() + idb_count,
        fact_count,
    }
}

/// Random directed edges over `nodes` nodes named `n0..`, as `edge(..)` facts.
pub fn random_edges(seed: u64, nodes: usize, density: f64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..nodes {
        for b in 0..nodes {
            if rng.gen_bool(density) {
                edges.push((a, b));
            }
        }
    }
    edges
}

pub const TRANSITIVE_CLOSURE: &str = "path(X, Y) :- edge(X, Y).\npath(X, Z) :- path(X, Y), edge(Y, Z).";

pub fn edges_as_facts(edges: &[(usize, usize)]) -> String {
    edges
        .iter()
        .map(|(a, b)| format!("edge(n{a}, n{b})."))
        .collect::<Vec<_>>()
        .join("\n")
}
