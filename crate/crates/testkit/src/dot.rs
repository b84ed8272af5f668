//! Small DOT reader used as an independent format check.

use std::collections::BTreeMap;

/// Minimal DOT reader: `digraph ID { stmt; ... }` with node statements
/// `ID [a=b, ...]` and edge statements `ID -> ID [a=b, ...]`.
pub struct Dot {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String, BTreeMap<String, String>)>,
}

fn dot_tokens(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::from("\"");
            loop {
                match chars.next().ok_or("unterminated string")? {
                    '\\' => s.push(chars.next().ok_or("dangling escape")?),
                    '"' => break,
                    c => s.push(c),
                }
            }
            out.push(s);
        } else if c == '-' {
            chars.next();
            if chars.next() != Some('>') {
                return Err("expected ->".into());
            }
            out.push("->".into());
        } else if "{}[];,=".contains(c) {
            out.push(c.to_string());
            chars.next();
        } else if c.is_alphanumeric() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_alphanumeric() || c == '_' || c == '.' {
                    s.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(s);
        } else {
            return Err(format!("unexpected {c:?}"));
        }
    }
    Ok(out)
}

fn id(t: &str) -> String {
    t.strip_prefix('"').unwrap_or(t).to_string()
}

pub fn parse_dot(text: &str) -> Result<Dot, String> {
    let t = dot_tokens(text)?;
    if t.len() < 4 || t[0] != "digraph" || t[2] != "{" || t.last().map(String::as_str) != Some("}") {
        return Err("bad graph header".into());
    }
    let mut dot = Dot {
        nodes: vec![],
        edges: vec![],
    };
    let body = &t[3..t.len() - 1];
    for stmt in body.split(|s| s == ";").filter(|s| !s.is_empty()) {
        let (head, attrs) = match stmt.iter().position(|s| s == "[") {
            Some(p) => {
                if stmt.last().map(String::as_str) != Some("]") {
                    return Err("unclosed attribute list".into());
                }
                (&stmt[..p], &stmt[p + 1..stmt.len() - 1])
            }
            None => (stmt, &stmt[..0]),
        };
        let mut map = BTreeMap::new();
        for a in attrs.split(|s| s == ",") {
            match a {
                [k, eq, v] if eq == "=" => {
                    map.insert(id(k), id(v));
                }
                _ => return Err(format!("bad attribute {a:?}")),
            }
        }
        match head {
            [n] => dot.nodes.push(id(n)),
            [a, arrow, b] if arrow == "->" => dot.edges.push((id(a), id(b), map)),
            _ => return Err(format!("bad statement {head:?}")),
        }
    }
    Ok(dot)
}
