use std::collections::{BTreeMap, HashMap, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::ast::{Literal, Program, Rule};
use crate::error::DatalogError;

/// Splits the rules into strata so that negation only looks at lower strata.
///
/// Predicates without rules sit in stratum 0; a head sits at least as high as
/// each positive body predicate and strictly above each negated one. Empty
/// strata are dropped and rule order inside a stratum follows the program.
pub fn stratify(program: &Program) -> Result<Vec<Vec<Rule>>, DatalogError> {
    Ok(stratum_indices(program)?
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| program.rules()[i].clone()).collect())
        .collect())
}

pub(crate) fn stratum_indices(program: &Program) -> Result<Vec<Vec<usize>>, DatalogError> {
    let mut graph: DiGraph<&str, bool> = DiGraph::new();
    let mut nodes: HashMap<&str, NodeIndex> = HashMap::new();
    for pred in program.arities().keys() {
        nodes.insert(pred, graph.add_node(pred));
    }
    // Edge body -> head, weighted true when the body literal is negated.
    for rule in program.rules() {
        let head = nodes[rule.head.predicate.as_str()];
        for lit in &rule.body {
            let (atom, negative) = match lit {
                Literal::Pos(a) => (a, false),
                Literal::Neg(a) => (a, true),
                Literal::Cmp(_) => continue,
            };
            graph.add_edge(nodes[atom.predicate.as_str()], head, negative);
        }
    }

    let sccs = tarjan_scc(&graph);
    let mut component = vec![0usize; graph.node_count()];
    for (c, scc) in sccs.iter().enumerate() {
        for &n in scc {
            component[n.index()] = c;
        }
    }
    for edge in graph.edge_indices() {
        let (from, to) = graph.edge_endpoints(edge).unwrap();
        if graph[edge] && component[from.index()] == component[to.index()] {
            return Err(DatalogError::NegativeCycle {
                cycle: negative_cycle(&graph, &component, from, to),
            });
        }
    }

    // tarjan_scc yields components in reverse topological order.
    let mut level = vec![0usize; sccs.len()];
    for c in (0..sccs.len()).rev() {
        for &n in &sccs[c] {
            for e in graph.edges_directed(n, petgraph::Direction::Incoming) {
                use petgraph::visit::EdgeRef;
                let src = component[e.source().index()];
                if src != c {
                    let need = level[src] + usize::from(*e.weight());
                    level[c] = level[c].max(need);
                }
            }
        }
    }

    let mut by_level: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, rule) in program.rules().iter().enumerate() {
        let c = component[nodes[rule.head.predicate.as_str()].index()];
        by_level.entry(level[c]).or_default().push(i);
    }
    Ok(by_level.into_values().collect())
}

/// Reports `head -> body -> ... -> head` for a negative edge inside an SCC.
fn negative_cycle(
    graph: &DiGraph<&str, bool>,
    component: &[usize],
    body: NodeIndex,
    head: NodeIndex,
) -> Vec<String> {
    // BFS from head back to body within the component closes the cycle.
    let c = component[head.index()];
    let mut prev: HashMap<NodeIndex, NodeIndex> = HashMap::new();
    let mut queue = VecDeque::from([head]);
    while let Some(n) = queue.pop_front() {
        if n == body {
            break;
        }
        for next in graph.neighbors(n) {
            if component[next.index()] == c && next != head && !prev.contains_key(&next) {
                prev.insert(next, n);
                queue.push_back(next);
            }
        }
    }
    let mut path = vec![body];
    let mut cur = body;
    while cur != head {
        cur = prev[&cur];
        path.push(cur);
    }
    // path runs body <- ... <- head; read as dependencies from the head.
    let mut names: Vec<String> = path.iter().map(|n| graph[*n].to_string()).collect();
    names.insert(0, graph[head].to_string());
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse_program;

    fn strata_text(src: &str) -> Vec<Vec<String>> {
        let p = parse_program(src).unwrap();
        stratify(&p)
            .unwrap()
            .into_iter()
            .map(|s| s.into_iter().map(|r| r.to_string()).collect())
            .collect()
    }

    #[test]
    fn negation_forces_order() {
        assert_eq!(strata_text("p :- not q. q :- r."), vec![vec!["q :- r."], vec!["p :- not q."]]);
    }

    #[test]
    fn positive_program_is_one_stratum() {
        let s = strata_text("path(X,Y) :- edge(X,Y). path(X,Z) :- path(X,Y), edge(Y,Z). r(X) :- path(X, X).");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 3);
    }

    #[test]
    fn mutual_negation_is_rejected() {
        let p = parse_program("p :- not q. q :- not p.").unwrap();
        match stratify(&p).unwrap_err() {
            DatalogError::NegativeCycle { cycle } => {
                assert_eq!(cycle.len(), 3);
                assert_eq!(cycle.first(), cycle.last());
                assert!(cycle.contains(&"p".to_string()) && cycle.contains(&"q".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_negation_is_rejected() {
        let p = parse_program("p(X) :- q(X), not p(X).").unwrap();
        assert_eq!(
            stratify(&p).unwrap_err(),
            DatalogError::NegativeCycle { cycle: vec!["p".into(), "p".into()] }
        );
    }

    #[test]
    fn long_negative_cycle_through_positive_edges() {
        let p = parse_program("a(X) :- e(X), not c(X). b(X) :- a(X). c(X) :- b(X).").unwrap();
        let DatalogError::NegativeCycle { cycle } = stratify(&p).unwrap_err() else { panic!() };
        assert_eq!(cycle.first(), cycle.last());
        assert_eq!(cycle.len(), 4, "{cycle:?}");
    }

    #[test]
    fn chain_of_negations() {
        let s = strata_text("a(X) :- e(X), not b(X). b(X) :- e(X), not c(X). c(X) :- e(X).");
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], ["c(X) :- e(X)."]);
        assert_eq!(s[2], ["a(X) :- e(X), not b(X)."]);
    }

    #[test]
    fn concatenation_preserves_rules() {
        let p = parse_program("a(X) :- e(X), not b(X). b(X) :- e(X). c(X) :- a(X), b(X).").unwrap();
        let mut flat: Vec<_> = stratify(&p).unwrap().into_iter().flatten().collect();
        let mut orig = p.rules().to_vec();
        flat.sort();
        orig.sort();
        assert_eq!(flat, orig);
    }
}
