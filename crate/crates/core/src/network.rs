//! The business network model emitted from a reconstruction, its canonical
//! JSON form and GraphML/DOT exports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{sha256_hex, to_canonical_pretty, to_canonical_string};
use crate::model::{InterfaceRef, Origin, Payload, BUSINESS_SPACE, INTEGRATION_SPACE};
use crate::reconstruction::{FlowKey, PropertyConflict, Reconstruction};

pub const BUILTIN_SPACES: [&str; 2] = [BUSINESS_SPACE, INTEGRATION_SPACE];

/// Provenance without the capture timestamp, so exports do not depend on
/// when a snapshot was read.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceRef {
    pub source_id: String,
    pub object_id: String,
    pub source_type: String,
}

impl From<&Origin> for SourceRef {
    fn from(o: &Origin) -> Self {
        SourceRef {
            source_id: o.source_id.clone(),
            object_id: o.object_id.clone(),
            source_type: o.source_type.clone(),
        }
    }
}

fn source_refs<'a>(origins: impl IntoIterator<Item = &'a Origin>) -> Vec<SourceRef> {
    origins
        .into_iter()
        .map(SourceRef::from)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostRef {
    pub id: String,
    pub hostname: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantProperty {
    pub kind: String,
    pub digest: String,
    pub payload: Payload,
    pub origins: Vec<SourceRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub label: String,
    pub kind: String,
    pub space: String,
    pub props: BTreeMap<String, String>,
    pub complex_props: Vec<ParticipantProperty>,
    pub conflicts: Vec<PropertyConflict>,
    pub members: Vec<String>,
    pub hosts: Vec<HostRef>,
    pub origins: Vec<SourceRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageFlow {
    pub id: String,
    pub source: String,
    pub target: String,
    pub interface: String,
    pub interface_ref: InterfaceRef,
    pub supporting: Vec<(String, String)>,
    pub origins: Vec<SourceRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantLink {
    pub id: String,
    pub left: String,
    pub right: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageFlowLink {
    pub id: String,
    pub left: String,
    pub right: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpace {
    pub name: String,
    pub participants: Vec<Participant>,
    pub flows: Vec<MessageFlow>,
}

impl NetworkSpace {
    pub fn new(name: impl Into<String>) -> Self {
        NetworkSpace {
            name: name.into(),
            participants: Vec::new(),
            flows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub version: String,
    pub spaces: Vec<NetworkSpace>,
    pub participant_links: Vec<ParticipantLink>,
    pub flow_links: Vec<MessageFlowLink>,
}

impl Default for Network {
    fn default() -> Self {
        let mut n = Network {
            version: String::new(),
            spaces: BUILTIN_SPACES.iter().map(|s| NetworkSpace::new(*s)).collect(),
            participant_links: Vec::new(),
            flow_links: Vec::new(),
        };
        n.seal();
        n
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("dangling reference: {0}")]
    Dangling(String),
    #[error("unknown export format `{0}` (expected json, graphml or dot)")]
    UnknownFormat(String),
    #[error("unknown space `{0}`")]
    UnknownSpace(String),
    #[error("invalid network document: {0}")]
    Parse(String),
}

fn short_hash(parts: &[&str]) -> String {
    sha256_hex(parts.join("\u{0}").as_bytes())[..16].to_string()
}

pub fn flow_id(key: &FlowKey) -> String {
    format!(
        "f-{}",
        short_hash(&[
            &key.source_class,
            &key.target_class,
            &key.interface.namespace,
            &key.interface.name,
            &key.interface.operation
        ])
    )
}

impl Network {
    pub fn space(&self, name: &str) -> Option<&NetworkSpace> {
        self.spaces.iter().find(|s| s.name == name)
    }

    pub fn participants(&self) -> impl Iterator<Item = &Participant> {
        self.spaces.iter().flat_map(|s| s.participants.iter())
    }

    pub fn flows(&self) -> impl Iterator<Item = &MessageFlow> {
        self.spaces.iter().flat_map(|s| s.flows.iter())
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants().find(|p| p.id == id)
    }

    pub fn participant_count(&self) -> usize {
        self.spaces.iter().map(|s| s.participants.len()).sum()
    }

    pub fn flow_count(&self) -> usize {
        self.spaces.iter().map(|s| s.flows.len()).sum()
    }

    /// Sorts everything canonically and recomputes the version from content.
    pub fn seal(&mut self) {
        for name in BUILTIN_SPACES {
            if self.space(name).is_none() {
                self.spaces.push(NetworkSpace::new(name));
            }
        }
        self.spaces.sort_by(|a, b| a.name.cmp(&b.name));
        for s in &mut self.spaces {
            s.participants.sort_by(|a, b| a.id.cmp(&b.id));
            s.flows.sort_by(|a, b| a.id.cmp(&b.id));
        }
        self.participant_links.sort_by(|a, b| a.id.cmp(&b.id));
        self.flow_links.sort_by(|a, b| a.id.cmp(&b.id));
        self.version.clear();
        self.version = sha256_hex(to_canonical_string(self).as_bytes())[..16].to_string();
    }

    /// Every flow and link endpoint resolves, and every participant sits in
    /// the space that contains it.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let mut space_of = BTreeMap::new();
        for s in &self.spaces {
            for p in &s.participants {
                if p.space != s.name {
                    return Err(NetworkError::Dangling(format!("participant {} listed under space {}", p.id, s.name)));
                }
                if space_of.insert(p.id.as_str(), s.name.as_str()).is_some() {
                    return Err(NetworkError::Dangling(format!("participant {} appears twice", p.id)));
                }
            }
        }
        let mut flow_space = BTreeMap::new();
        for s in &self.spaces {
            for f in &s.flows {
                for end in [&f.source, &f.target] {
                    if space_of.get(end.as_str()) != Some(&s.name.as_str()) {
                        return Err(NetworkError::Dangling(format!("flow {} endpoint {end}", f.id)));
                    }
                }
                flow_space.insert(f.id.as_str(), s.name.as_str());
            }
        }
        for l in &self.participant_links {
            let (a, b) = (space_of.get(l.left.as_str()), space_of.get(l.right.as_str()));
            if a.is_none() || b.is_none() || a == b {
                return Err(NetworkError::Dangling(format!("participant link {}", l.id)));
            }
        }
        for l in &self.flow_links {
            let (a, b) = (flow_space.get(l.left.as_str()), flow_space.get(l.right.as_str()));
            if a.is_none() || b.is_none() || a == b {
                return Err(NetworkError::Dangling(format!("flow link {}", l.id)));
            }
        }
        Ok(())
    }
}

/// Builds the network for a reconstruction. Flows whose endpoints lie in
/// different spaces and links that do not bridge spaces are dropped with a
/// warning.
pub fn emit(recon: &Reconstruction) -> Result<Network, NetworkError> {
    let mut spaces: BTreeMap<String, NetworkSpace> =
        BUILTIN_SPACES.iter().map(|s| (s.to_string(), NetworkSpace::new(*s))).collect();
    let mut space_of: BTreeMap<&str, &str> = BTreeMap::new();
    for m in &recon.systems {
        let hosts = m
            .hosts
            .iter()
            .map(|h| {
                recon
                    .hosts
                    .get(h)
                    .map(|hostname| HostRef {
                        id: h.clone(),
                        hostname: hostname.clone(),
                    })
                    .ok_or_else(|| NetworkError::Dangling(format!("host {h} of {}", m.id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        space_of.insert(&m.id, &m.space);
        spaces
            .entry(m.space.clone())
            .or_insert_with(|| NetworkSpace::new(&m.space))
            .participants
            .push(Participant {
                id: m.id.clone(),
                label: m.name.clone(),
                kind: m.kind.clone(),
                space: m.space.clone(),
                props: m.simple_props.clone(),
                complex_props: m
                    .complex_props
                    .iter()
                    .map(|c| ParticipantProperty {
                        kind: c.kind.clone(),
                        digest: c.digest.clone(),
                        payload: c.payload.clone(),
                        origins: source_refs(&c.origins),
                    })
                    .collect(),
                conflicts: m.conflicts.clone(),
                members: m.members.clone(),
                hosts,
                origins: source_refs(&m.origins),
            });
    }

    let mut flow_space: BTreeMap<FlowKey, (String, &str)> = BTreeMap::new();
    for f in &recon.flows {
        let (Some(&a), Some(&b)) = (space_of.get(f.source_class.as_str()), space_of.get(f.target_class.as_str())) else {
            return Err(NetworkError::Dangling(format!(
                "flow {} -> {}",
                f.source_class, f.target_class
            )));
        };
        if a != b {
            log::warn!(
                "flow {} -> {} ({}) crosses spaces {a}/{b}; skipped",
                f.source_class,
                f.target_class,
                f.interface
            );
            continue;
        }
        let key = f.key();
        let id = flow_id(&key);
        flow_space.insert(key, (id.clone(), a));
        spaces.get_mut(a).expect("space exists").flows.push(MessageFlow {
            id,
            source: f.source_class.clone(),
            target: f.target_class.clone(),
            interface: f.interface.to_string(),
            interface_ref: f.interface.clone(),
            supporting: f.supporting.clone(),
            origins: source_refs(&f.origins),
        });
    }

    let mut participant_links = Vec::new();
    for l in &recon.participant_links {
        let (Some(a), Some(b)) = (space_of.get(l.left.as_str()), space_of.get(l.right.as_str())) else {
            return Err(NetworkError::Dangling(format!("participant link {} -> {}", l.left, l.right)));
        };
        if a == b {
            log::warn!("link {} -> {} ({}) stays inside {a}; skipped", l.left, l.right, l.kind);
            continue;
        }
        participant_links.push(ParticipantLink {
            id: format!("pl-{}", short_hash(&[&l.left, &l.right, &l.kind])),
            left: l.left.clone(),
            right: l.right.clone(),
            kind: l.kind.clone(),
        });
    }

    let mut flow_links = Vec::new();
    for l in &recon.flow_links {
        let (Some((left, a)), Some((right, b))) = (flow_space.get(&l.left), flow_space.get(&l.right)) else {
            continue;
        };
        if a == b {
            log::warn!("flow link {left} -> {right} stays inside {a}; skipped");
            continue;
        }
        flow_links.push(MessageFlowLink {
            id: format!("fl-{}", short_hash(&[left, right, &l.kind])),
            left: left.clone(),
            right: right.clone(),
            kind: l.kind.clone(),
        });
    }
    flow_links.dedup_by(|a, b| a.id == b.id);

    let mut network = Network {
        version: String::new(),
        spaces: spaces.into_values().collect(),
        participant_links,
        flow_links,
    };
    network.seal();
    network.validate()?;
    Ok(network)
}

/// Canonical JSON: sorted keys, two-space indent, trailing newline.
pub fn export_json(network: &Network) -> String {
    to_canonical_pretty(network)
}

pub fn from_json(text: &str) -> Result<Network, NetworkError> {
    let network: Network = serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
    network.validate()?;
    Ok(network)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    GraphMl,
    Dot,
}

impl FromStr for ExportFormat {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "graphml" => Ok(ExportFormat::GraphMl),
            "dot" => Ok(ExportFormat::Dot),
            _ => Err(NetworkError::UnknownFormat(s.to_string())),
        }
    }
}

/// Nodes and edges selected by a space filter.
struct GraphView<'a> {
    nodes: Vec<&'a Participant>,
    flows: Vec<&'a MessageFlow>,
    links: Vec<&'a ParticipantLink>,
}

fn view<'a>(network: &'a Network, space: Option<&str>) -> Result<GraphView<'a>, NetworkError> {
    let spaces: Vec<&NetworkSpace> = match space {
        None => network.spaces.iter().collect(),
        Some(name) => vec![network.space(name).ok_or_else(|| NetworkError::UnknownSpace(name.to_string()))?],
    };
    let nodes: Vec<&Participant> = spaces.iter().flat_map(|s| s.participants.iter()).collect();
    let ids: BTreeSet<&str> = nodes.iter().map(|p| p.id.as_str()).collect();
    Ok(GraphView {
        flows: spaces.iter().flat_map(|s| s.flows.iter()).collect(),
        links: network
            .participant_links
            .iter()
            .filter(|l| ids.contains(l.left.as_str()) && ids.contains(l.right.as_str()))
            .collect(),
        nodes,
    })
}

fn dot_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => {}
            c => out.push(c),
        }
    }
    out
}

fn to_dot(v: &GraphView<'_>, version: &str) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", dot_str(&format!("network-{version}"))).unwrap();
    for p in &v.nodes {
        writeln!(
            out,
            "  {} [label={}, space={}, kind={}];",
            dot_str(&p.id),
            dot_str(&p.label),
            dot_str(&p.space),
            dot_str(&p.kind)
        )
        .unwrap();
    }
    for f in &v.flows {
        writeln!(
            out,
            "  {} -> {} [id={}, label={}];",
            dot_str(&f.source),
            dot_str(&f.target),
            dot_str(&f.id),
            dot_str(&f.interface)
        )
        .unwrap();
    }
    for l in &v.links {
        writeln!(
            out,
            "  {} -> {} [id={}, label={}, style=dashed, dir=none];",
            dot_str(&l.left),
            dot_str(&l.right),
            dot_str(&l.id),
            dot_str(&l.kind)
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

fn to_graphml(v: &GraphView<'_>, version: &str) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    for (id, target, name) in [
        ("label", "node", "label"),
        ("space", "node", "space"),
        ("kind", "node", "kind"),
        ("elabel", "edge", "label"),
        ("etype", "edge", "type"),
    ] {
        writeln!(
            out,
            "  <key id=\"{id}\" for=\"{target}\" attr.name=\"{name}\" attr.type=\"string\"/>"
        )
        .unwrap();
    }
    writeln!(out, "  <graph id=\"{}\" edgedefault=\"directed\">", xml_escape(&format!("network-{version}"))).unwrap();
    for p in &v.nodes {
        writeln!(out, "    <node id=\"{}\">", xml_escape(&p.id)).unwrap();
        writeln!(out, "      <data key=\"label\">{}</data>", xml_escape(&p.label)).unwrap();
        writeln!(out, "      <data key=\"space\">{}</data>", xml_escape(&p.space)).unwrap();
        writeln!(out, "      <data key=\"kind\">{}</data>", xml_escape(&p.kind)).unwrap();
        out.push_str("    </node>\n");
    }
    let edges = v
        .flows
        .iter()
        .map(|f| (&f.id, &f.source, &f.target, &f.interface, "flow"))
        .chain(v.links.iter().map(|l| (&l.id, &l.left, &l.right, &l.kind, "participant-link")));
    for (id, s, t, label, kind) in edges {
        writeln!(
            out,
            "    <edge id=\"{}\" source=\"{}\" target=\"{}\">",
            xml_escape(id),
            xml_escape(s),
            xml_escape(t)
        )
        .unwrap();
        writeln!(out, "      <data key=\"elabel\">{}</data>", xml_escape(label)).unwrap();
        writeln!(out, "      <data key=\"etype\">{kind}</data>").unwrap();
        out.push_str("    </edge>\n");
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

/// Renders the network in `format` (`json`, `graphml` or `dot`), restricted
/// to one space when `space` is given. JSON output ignores the filter's edges
/// and keeps only the selected space.
pub fn export_graph(network: &Network, format: &str, space: Option<&str>) -> Result<String, NetworkError> {
    let format: ExportFormat = format.parse()?;
    let v = view(network, space)?;
    Ok(match format {
        ExportFormat::Json => match space {
            None => export_json(network),
            Some(name) => {
                let ids: BTreeSet<&str> = v.nodes.iter().map(|p| p.id.as_str()).collect();
                let flow_ids: BTreeSet<&str> = v.flows.iter().map(|f| f.id.as_str()).collect();
                let filtered = Network {
                    version: network.version.clone(),
                    spaces: network.spaces.iter().filter(|s| s.name == name).cloned().collect(),
                    participant_links: network
                        .participant_links
                        .iter()
                        .filter(|l| ids.contains(l.left.as_str()) && ids.contains(l.right.as_str()))
                        .cloned()
                        .collect(),
                    flow_links: network
                        .flow_links
                        .iter()
                        .filter(|l| flow_ids.contains(l.left.as_str()) && flow_ids.contains(l.right.as_str()))
                        .cloned()
                        .collect(),
                };
                export_json(&filtered)
            }
        },
        ExportFormat::GraphMl => to_graphml(&v, &network.version),
        ExportFormat::Dot => to_dot(&v, &network.version),
    })
}
