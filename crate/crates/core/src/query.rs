//! Indexes, full-text search and neighbourhood traversal over a network.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::network::{Network, NetworkSpace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),
    #[error("participant `{id}` is not in space `{space}`")]
    OutsideSpace { id: String, space: String },
}

/// Lowercased alphanumeric runs.
///
/// ```
/// assert_eq!(netinfer_core::query::tokenize("ERP Prod-01"), ["erp", "prod", "01"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone)]
pub struct NetworkIndex {
    network: Network,
    space_of: BTreeMap<String, String>,
    attributes: BTreeMap<(String, String), BTreeSet<String>>,
    text: BTreeMap<String, BTreeSet<String>>,
    label_tokens: BTreeMap<String, Vec<String>>,
    flow_adjacency: BTreeMap<String, BTreeSet<String>>,
    link_adjacency: BTreeMap<String, BTreeSet<String>>,
}

pub fn build_index(network: &Network) -> NetworkIndex {
    let mut index = NetworkIndex {
        network: network.clone(),
        space_of: BTreeMap::new(),
        attributes: BTreeMap::new(),
        text: BTreeMap::new(),
        label_tokens: BTreeMap::new(),
        flow_adjacency: BTreeMap::new(),
        link_adjacency: BTreeMap::new(),
    };
    for p in network.participants() {
        index.space_of.insert(p.id.clone(), p.space.clone());
        let label = tokenize(&p.label);
        let mut terms: BTreeSet<String> = label.iter().cloned().collect();
        for (k, v) in &p.props {
            index
                .attributes
                .entry((k.clone(), v.clone()))
                .or_default()
                .insert(p.id.clone());
            terms.extend(tokenize(v));
        }
        for t in terms {
            index.text.entry(t).or_default().insert(p.id.clone());
        }
        index.label_tokens.insert(p.id.clone(), label);
    }
    for f in network.flows() {
        index.flow_adjacency.entry(f.source.clone()).or_default().insert(f.target.clone());
        index.flow_adjacency.entry(f.target.clone()).or_default().insert(f.source.clone());
    }
    for l in &network.participant_links {
        index.link_adjacency.entry(l.left.clone()).or_default().insert(l.right.clone());
        index.link_adjacency.entry(l.right.clone()).or_default().insert(l.left.clone());
    }
    index
}

impl NetworkIndex {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn is_empty(&self) -> bool {
        self.space_of.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.text.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.space_of.contains_key(id)
    }

    /// Participants whose simple property `key` equals `value`.
    pub fn by_attribute(&self, key: &str, value: &str) -> Vec<String> {
        self.attributes
            .get(&(key.to_string(), value.to_string()))
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Participants whose label or property values contain every query
    /// token, most label hits first, then by id.
    pub fn search(&self, query: &str) -> Vec<String> {
        let tokens: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut sets = tokens.iter().map(|t| self.text.get(t));
        let Some(Some(first)) = sets.next() else { return Vec::new() };
        let mut hits: BTreeSet<&String> = first.iter().collect();
        for s in sets {
            let Some(s) = s else { return Vec::new() };
            hits.retain(|id| s.contains(*id));
        }
        let mut ranked: Vec<(usize, &String)> = hits
            .into_iter()
            .map(|id| {
                let score = self.label_tokens[id].iter().filter(|t| tokens.contains(*t)).count();
                (score, id)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        ranked.into_iter().map(|(_, id)| id.clone()).collect()
    }

    /// Breadth-first neighbourhood of `start` up to `depth` hops. Flows are
    /// followed in both directions, links too when `follow_links` is set;
    /// with a space filter only participants of that space are visited.
    pub fn traverse(
        &self,
        start: &str,
        depth: usize,
        follow_links: bool,
        space: Option<&str>,
    ) -> Result<Network, QueryError> {
        let start_space = self
            .space_of
            .get(start)
            .ok_or_else(|| QueryError::UnknownParticipant(start.to_string()))?;
        if let Some(space) = space {
            if start_space != space {
                return Err(QueryError::OutsideSpace {
                    id: start.to_string(),
                    space: space.to_string(),
                });
            }
        }
        let admit = |id: &str| space.is_none_or(|s| self.space_of.get(id).map(String::as_str) == Some(s));
        let empty = BTreeSet::new();
        let mut seen = BTreeSet::from([start.to_string()]);
        let mut queue = VecDeque::from([(start.to_string(), 0)]);
        while let Some((id, d)) = queue.pop_front() {
            if d == depth {
                continue;
            }
            let links = if follow_links { self.link_adjacency.get(&id) } else { None };
            let next = self.flow_adjacency.get(&id).unwrap_or(&empty).iter().chain(links.unwrap_or(&empty));
            for n in next {
                if admit(n) && seen.insert(n.clone()) {
                    queue.push_back((n.clone(), d + 1));
                }
            }
        }
        Ok(self.fragment(&seen, follow_links))
    }

    /// Sub-network induced by `ids`; keeps the parent version.
    fn fragment(&self, ids: &BTreeSet<String>, with_links: bool) -> Network {
        let spaces: Vec<NetworkSpace> = self
            .network
            .spaces
            .iter()
            .map(|s| NetworkSpace {
                name: s.name.clone(),
                participants: s.participants.iter().filter(|p| ids.contains(&p.id)).cloned().collect(),
                flows: s
                    .flows
                    .iter()
                    .filter(|f| ids.contains(&f.source) && ids.contains(&f.target))
                    .cloned()
                    .collect(),
            })
            .collect();
        let flow_ids: BTreeSet<&str> = spaces.iter().flat_map(|s| s.flows.iter().map(|f| f.id.as_str())).collect();
        let participant_links = if with_links {
            self.network
                .participant_links
                .iter()
                .filter(|l| ids.contains(&l.left) && ids.contains(&l.right))
                .cloned()
                .collect()
        } else {
            Vec::new()
        };
        let flow_links = self
            .network
            .flow_links
            .iter()
            .filter(|l| flow_ids.contains(l.left.as_str()) && flow_ids.contains(l.right.as_str()))
            .cloned()
            .collect();
        Network {
            version: self.network.version.clone(),
            spaces,
            participant_links,
            flow_links,
        }
    }
}

pub fn search(index: &NetworkIndex, query: &str) -> Vec<String> {
    index.search(query)
}

pub fn traverse(
    index: &NetworkIndex,
    start: &str,
    depth: usize,
    follow_links: bool,
    space: Option<&str>,
) -> Result<Network, QueryError> {
    index.traverse(start, depth, follow_links, space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InterfaceRef;
    use crate::network::{MessageFlow, Participant};

    fn participant(id: &str, label: &str) -> Participant {
        Participant {
            id: id.into(),
            label: label.into(),
            kind: "application".into(),
            space: "integration".into(),
            props: BTreeMap::new(),
            complex_props: vec![],
            conflicts: vec![],
            members: vec![id.into()],
            hosts: vec![],
            origins: vec![],
        }
    }

    fn flow(a: &str, b: &str) -> MessageFlow {
        MessageFlow {
            id: format!("f-{a}{b}"),
            source: a.into(),
            target: b.into(),
            interface: "X".into(),
            interface_ref: InterfaceRef::new("X", "", ""),
            supporting: vec![],
            origins: vec![],
        }
    }

    fn chain() -> Network {
        let mut n = Network::default();
        let space = n.spaces.iter_mut().find(|s| s.name == "integration").unwrap();
        space.participants = vec![participant("a", "ERP Prod"), participant("b", "CRM"), participant("c", "ERP")];
        space.flows = vec![flow("a", "b"), flow("b", "c")];
        n.seal();
        n
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("ERP Prod-01"), ["erp", "prod", "01"]);
        assert!(tokenize(" -- ").is_empty());
    }

    #[test]
    fn search_examples() {
        let index = build_index(&chain());
        assert_eq!(index.search("erp prod"), ["a"]);
        assert_eq!(index.search("erp"), ["a", "c"]);
        assert!(index.search("").is_empty());
        assert!(index.search("erp sap").is_empty());
        assert!(build_index(&Network::default()).is_empty());
    }

    #[test]
    fn traversal_depths() {
        let index = build_index(&chain());
        let ids = |n: &Network| n.participants().map(|p| p.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&index.traverse("a", 0, false, None).unwrap()), ["a"]);
        let one = index.traverse("a", 1, false, None).unwrap();
        assert_eq!(ids(&one), ["a", "b"]);
        assert_eq!(one.flow_count(), 1);
        one.validate().unwrap();
        assert_eq!(ids(&index.traverse("c", 5, false, None).unwrap()), ["a", "b", "c"]);
        assert!(matches!(index.traverse("zz", 1, false, None), Err(QueryError::UnknownParticipant(_))));
    }
}
