use std::fmt::Write as _;
use std::path::Path;

use super::{EdgeDocument, GraphDocument, NodeDocument};
use crate::error::{Error, Result};
use crate::io::write_text;

pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.jsonl";
pub const GRAPHML_FILE: &str = "graph.graphml";

fn jsonl<T: serde::Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes `nodes.jsonl` and `edges.jsonl` (one JSON document per line,
/// bulk-import friendly: `_key`, `_from`, `_to`).
pub fn write_jsonl(doc: &GraphDocument, dir: &Path) -> Result<()> {
    write_text(&dir.join(NODES_FILE), &jsonl(&doc.nodes)?)?;
    write_text(&dir.join(EDGES_FILE), &jsonl(&doc.edges)?)
}

fn parse_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Serde(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn read_jsonl(dir: &Path) -> Result<GraphDocument> {
    let nodes: Vec<NodeDocument> = parse_lines(&dir.join(NODES_FILE))?;
    let edges: Vec<EdgeDocument> = parse_lines(&dir.join(EDGES_FILE))?;
    Ok(GraphDocument { nodes, edges })
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// GraphML export; embeddings are stored as JSON arrays in a string attribute.
pub fn write_graphml(doc: &GraphDocument, path: &Path) -> Result<()> {
    let mut x = String::new();
    x.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    x.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    x.push_str("  <key id=\"id\" for=\"node\" attr.name=\"id\" attr.type=\"string\"/>\n");
    x.push_str("  <key id=\"kind\" for=\"node\" attr.name=\"kind\" attr.type=\"string\"/>\n");
    x.push_str("  <key id=\"embedding\" for=\"node\" attr.name=\"embedding\" attr.type=\"string\"/>\n");
    x.push_str("  <key id=\"cluster\" for=\"node\" attr.name=\"cluster\" attr.type=\"long\"/>\n");
    x.push_str("  <key id=\"relation\" for=\"edge\" attr.name=\"relation\" attr.type=\"string\"/>\n");
    x.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
    x.push_str("  <graph id=\"G\" edgedefault=\"undirected\">\n");
    for n in &doc.nodes {
        let _ = writeln!(x, "    <node id=\"{}\">", escape(&n.key));
        let _ = writeln!(x, "      <data key=\"id\">{}</data>", escape(&n.id));
        let _ = writeln!(x, "      <data key=\"kind\">{}</data>", n.kind.as_str());
        if let Some(e) = &n.embedding {
            let _ = writeln!(x, "      <data key=\"embedding\">{}</data>", serde_json::to_string(e)?);
        }
        if let Some(c) = n.cluster {
            let _ = writeln!(x, "      <data key=\"cluster\">{c}</data>");
        }
        x.push_str("    </node>\n");
    }
    for e in &doc.edges {
        let strip = |r: &str| r.split_once('/').map_or(r.to_string(), |(_, k)| k.to_string());
        let _ = writeln!(
            x,
            "    <edge id=\"{}\" source=\"{}\" target=\"{}\">",
            escape(&e.key),
            escape(&strip(&e.from)),
            escape(&strip(&e.to))
        );
        let _ = writeln!(x, "      <data key=\"relation\">{}</data>", serde_json::to_value(e.relation)?.as_str().unwrap_or(""));
        let _ = writeln!(x, "      <data key=\"weight\">{}</data>", serde_json::to_string(&e.weight)?);
        x.push_str("    </edge>\n");
    }
    x.push_str("  </graph>\n</graphml>\n");
    write_text(path, &x)
}
