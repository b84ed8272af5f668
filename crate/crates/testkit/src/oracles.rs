//! Brute-force reference computations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// All-pairs reachability (paths of length >= 1) by Floyd-Warshall closure
/// of the boolean adjacency matrix.
pub fn reachability(nodes: usize, edges: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    let mut m = vec![vec![false; nodes]; nodes];
    for &(a, b) in edges {
        m[a][b] = true;
    }
    for k in 0..nodes {
        for i in 0..nodes {
            if m[i][k] {
                for j in 0..nodes {
                    if m[k][j] {
                        m[i][j] = true;
                    }
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for (i, row) in m.iter().enumerate() {
        for (j, &r) in row.iter().enumerate() {
            if r {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Partition of `items` induced by `pairs`, by repeated merging of any two
/// classes that share a pair. Quadratic, deliberately simple.
pub fn closure_classes(items: &BTreeSet<String>, pairs: &[(String, String)]) -> Vec<BTreeSet<String>> {
    let mut classes: Vec<BTreeSet<String>> = items.iter().map(|i| BTreeSet::from([i.clone()])).collect();
    for (a, b) in pairs {
        let ia = classes.iter().position(|c| c.contains(a));
        let ib = classes.iter().position(|c| c.contains(b));
        if let (Some(ia), Some(ib)) = (ia, ib) {
            if ia != ib {
                let moved = classes[ib.max(ia)].clone();
                classes[ia.min(ib)].extend(moved);
                classes.remove(ia.max(ib));
            }
        }
    }
    classes.sort();
    classes
}

/// Every ordered pair inside each class (including reflexive pairs).
pub fn class_pairs(classes: &[BTreeSet<String>]) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for c in classes {
        for a in c {
            for b in c {
                out.insert((a.clone(), b.clone()));
            }
        }
    }
    out
}

/// Undirected breadth-first neighbourhood up to `depth` hops.
pub fn bfs(adjacency: &BTreeMap<String, BTreeSet<String>>, start: &str, depth: usize) -> BTreeSet<String> {
    let mut seen = BTreeSet::from([start.to_string()]);
    let mut queue = VecDeque::from([(start.to_string(), 0usize)]);
    while let Some((n, d)) = queue.pop_front() {
        if d == depth {
            continue;
        }
        for m in adjacency.get(&n).into_iter().flatten() {
            if seen.insert(m.clone()) {
                queue.push_back((m.clone(), d + 1));
            }
        }
    }
    seen
}

/// Lowercase alphanumeric words of `s`.
pub fn words(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// One searchable item: id, label and other text values.
pub struct ScanItem {
    pub id: String,
    pub label: String,
    pub values: Vec<String>,
}

/// Linear-scan search: items containing every query word in their label or
/// values, ordered by how many query words the label holds (descending),
/// then id. An empty query matches nothing.
pub fn scan_search(items: &[ScanItem], query: &str) -> Vec<String> {
    let q: BTreeSet<String> = words(query).into_iter().collect();
    if q.is_empty() {
        return vec![];
    }
    let mut hits: Vec<(usize, String)> = items
        .iter()
        .filter_map(|item| {
            let mut all: BTreeSet<String> = words(&item.label).into_iter().collect();
            for v in &item.values {
                all.extend(words(v));
            }
            if !q.is_subset(&all) {
                return None;
            }
            let label_hits = words(&item.label).iter().filter(|w| q.contains(*w)).count();
            Some((label_hits, item.id.clone()))
        })
        .collect();
    hits.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    hits.into_iter().map(|h| h.1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_reachability() {
        let r = reachability(3, &[(0, 1), (1, 2)]);
        assert_eq!(r, BTreeSet::from([(0, 1), (0, 2), (1, 2)]));
    }

    #[test]
    fn closure_merges_transitively() {
        let items: BTreeSet<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let classes = closure_classes(&items, &[("a".into(), "b".into()), ("c".into(), "b".into())]);
        assert_eq!(classes.len(), 2);
    }
}
