//! Customer ↔ item and customer ↔ dictionary-element bipartite graphs,
//! embedding-bearing graph documents, file export/import and cosine
//! similarity queries.

mod export;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterLabeling;
use crate::error::{Error, Result};
use crate::ingest::PurchaseMatrix;
use crate::nmf::Factorization;

pub use export::{read_jsonl, write_graphml, write_jsonl, EDGES_FILE, GRAPHML_FILE, NODES_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Customer,
    Item,
    Element,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Customer => "customer",
            NodeKind::Item => "item",
            NodeKind::Element => "element",
        }
    }

    fn key_prefix(self) -> &'static str {
        match self {
            NodeKind::Customer => "c-",
            NodeKind::Item => "i-",
            NodeKind::Element => "e-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Purchase,
    Affinity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Index into `left_nodes`.
    pub left: usize,
    /// Index into `right_nodes`.
    pub right: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub kind: GraphKind,
    pub left_nodes: Vec<Node>,
    pub right_nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

/// Id used for dictionary element `k`.
pub fn element_id(k: usize) -> String {
    format!("element_{k}")
}

/// One edge per stored matrix entry, weighted by spend.
pub fn build_purchase_graph(p: &PurchaseMatrix) -> BipartiteGraph {
    BipartiteGraph {
        kind: GraphKind::Purchase,
        left_nodes: p
            .row_ids()
            .iter()
            .map(|id| Node { id: id.clone(), kind: NodeKind::Customer })
            .collect(),
        right_nodes: p
            .col_ids()
            .iter()
            .map(|id| Node { id: id.clone(), kind: NodeKind::Item })
            .collect(),
        edges: p
            .iter()
            .map(|(left, right, weight)| Edge { left, right, weight })
            .collect(),
    }
}

/// Customer → element edges for every affinity above `threshold`.
pub fn build_affinity_graph(f: &Factorization, threshold: f64) -> BipartiteGraph {
    let mut edges = Vec::new();
    for i in 0..f.w.nrows() {
        for k in 0..f.w.ncols() {
            let w = f.w[(i, k)];
            if w > threshold && w > 0.0 {
                edges.push(Edge { left: i, right: k, weight: w });
            }
        }
    }
    BipartiteGraph {
        kind: GraphKind::Affinity,
        left_nodes: f
            .row_ids
            .iter()
            .map(|id| Node { id: id.clone(), kind: NodeKind::Customer })
            .collect(),
        right_nodes: (0..f.k())
            .map(|k| Node { id: element_id(k), kind: NodeKind::Element })
            .collect(),
        edges,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    AffinityRow,
    DictionaryColumn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEmbedding {
    pub node_id: String,
    pub vector: Vec<f64>,
    pub source: EmbeddingSource,
}

/// A node record as stored in the line-delimited node file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDocument {
    #[serde(rename = "_key")]
    pub key: String,
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_source: Option<EmbeddingSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<i64>,
}

/// An edge record as stored in the line-delimited edge file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDocument {
    #[serde(rename = "_key")]
    pub key: String,
    #[serde(rename = "_from")]
    pub from: String,
    #[serde(rename = "_to")]
    pub to: String,
    pub relation: GraphKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<NodeDocument>,
    pub edges: Vec<EdgeDocument>,
}

/// Collection name used in edge references.
pub const NODE_COLLECTION: &str = "nodes";

/// Document key for a node: kind prefix plus the id, with characters outside
/// `[A-Za-z0-9_-.:@]` percent-encoded.
pub fn node_key(kind: NodeKind, id: &str) -> String {
    let mut key = String::from(kind.key_prefix());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b"_-.:@".contains(&b) {
            key.push(b as char);
        } else {
            key.push_str(&format!("%{b:02X}"));
        }
    }
    key
}

fn as_document(g: &BipartiteGraph) -> GraphDocument {
    let nodes = g
        .left_nodes
        .iter()
        .chain(&g.right_nodes)
        .map(|n| NodeDocument {
            key: node_key(n.kind, &n.id),
            id: n.id.clone(),
            kind: n.kind,
            embedding: None,
            embedding_source: None,
            cluster: None,
        })
        .collect();
    let edges = g
        .edges
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let l = &g.left_nodes[e.left];
            let r = &g.right_nodes[e.right];
            EdgeDocument {
                key: format!("{i}"),
                from: format!("{NODE_COLLECTION}/{}", node_key(l.kind, &l.id)),
                to: format!("{NODE_COLLECTION}/{}", node_key(r.kind, &r.id)),
                relation: g.kind,
                weight: e.weight,
            }
        })
        .collect();
    GraphDocument { nodes, edges }
}

/// Graph document without embeddings.
pub fn plain_document(g: &BipartiteGraph) -> GraphDocument {
    as_document(g)
}

/// Customer nodes get their affinity row (and cluster id when labels are
/// given); item nodes get their dictionary column.
pub fn attach_embeddings(
    g: &BipartiteGraph,
    f: &Factorization,
    labels: Option<&ClusterLabeling>,
) -> Result<GraphDocument> {
    if let Some(l) = labels {
        if l.labels.len() != f.row_ids.len() {
            return Err(Error::IdMismatch(format!(
                "{} cluster labels for {} factorization rows",
                l.labels.len(),
                f.row_ids.len()
            )));
        }
    }
    let rows: std::collections::BTreeMap<&str, usize> =
        f.row_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let cols: std::collections::BTreeMap<&str, usize> =
        f.col_ids.iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
    let mut missing = BTreeSet::new();
    let mut doc = as_document(g);
    for node in &mut doc.nodes {
        match node.kind {
            NodeKind::Customer => match rows.get(node.id.as_str()) {
                Some(&i) => {
                    node.embedding = Some(f.w.row(i).iter().copied().collect());
                    node.embedding_source = Some(EmbeddingSource::AffinityRow);
                    node.cluster = labels.map(|l| l.labels[i]);
                }
                None => {
                    missing.insert(format!("customer {}", node.id));
                }
            },
            NodeKind::Item => match cols.get(node.id.as_str()) {
                Some(&j) => {
                    node.embedding = Some(f.h.column(j).iter().copied().collect());
                    node.embedding_source = Some(EmbeddingSource::DictionaryColumn);
                }
                None => {
                    missing.insert(format!("item {}", node.id));
                }
            },
            NodeKind::Element => {}
        }
    }
    if !missing.is_empty() {
        return Err(Error::IdMismatch(format!(
            "nodes absent from the factorization: {}",
            missing.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(doc)
}

impl GraphDocument {
    pub fn embeddings(&self) -> Vec<NodeEmbedding> {
        self.nodes
            .iter()
            .filter_map(|n| {
                Some(NodeEmbedding {
                    node_id: n.id.clone(),
                    vector: n.embedding.clone()?,
                    source: n.embedding_source?,
                })
            })
            .collect()
    }

    /// Looks a node up by document key, or by id when the id is unique.
    pub fn find(&self, query: &str) -> Result<&NodeDocument> {
        if let Some(n) = self.nodes.iter().find(|n| n.key == query) {
            return Ok(n);
        }
        let hits: Vec<&NodeDocument> = self.nodes.iter().filter(|n| n.id == query).collect();
        match hits.as_slice() {
            [one] => Ok(one),
            [] => Err(Error::invalid(format!("no node `{query}` in the graph"))),
            many => Err(Error::invalid(format!(
                "`{query}` is ambiguous; use one of the keys {}",
                many.iter().map(|n| n.key.as_str()).collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similar {
    pub key: String,
    pub id: String,
    pub similarity: f64,
}

/// The `top_n` nodes of the same kind most cosine-similar to `node`
/// (ties by key), excluding the node itself.
pub fn similar_nodes(doc: &GraphDocument, node: &str, top_n: usize) -> Result<Vec<Similar>> {
    let query = doc.find(node)?;
    let q = query
        .embedding
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("node `{}` has no embedding", query.key)))?;
    if q.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid(format!("node `{}` has a zero embedding", query.key)));
    }
    let mut scored: Vec<Similar> = doc
        .nodes
        .iter()
        .filter(|n| n.kind == query.kind && n.key != query.key)
        .filter_map(|n| {
            n.embedding.as_ref().map(|e| Similar {
                key: n.key.clone(),
                id: n.id.clone(),
                similarity: cosine(q, e),
            })
        })
        .collect();
    scored.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.key.cmp(&b.key)));
    scored.truncate(top_n);
    Ok(scored)
}
