//! Random trusted-node network layouts.
//!
//! Nodes are dropped uniformly in a square box, links are grown in
//! nearest-neighbour rounds until a mean degree is reached, links too long to
//! carry a minimum uncooled key rate are bisected by trusted relays, and each
//! link is annotated with its warm and cold key-rate capacities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyrate::{self, KeyRateError};
use crate::LinkModelParams;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("link {a}-{b} of {length_km} km carries only {cap_warm_bps} bit/s uncooled (minimum {min_rate_bps})")]
    BelowMinimumRate {
        a: usize,
        b: usize,
        length_km: f64,
        cap_warm_bps: f64,
        min_rate_bps: f64,
    },
    #[error(transparent)]
    KeyRate(#[from] KeyRateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Trusted,
    Relay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: usize,
    pub x_km: f64,
    pub y_km: f64,
    pub kind: NodeKind,
}

impl Node {
    pub fn distance(&self, other: &Node) -> f64 {
        (self.x_km - other.x_km).hypot(self.y_km - other.y_km)
    }

    pub fn is_trusted(&self) -> bool {
        self.kind == NodeKind::Trusted
    }
}

/// Undirected physical link. Each link stands for the directed pair
/// `(a, b)` and `(b, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub length_km: f64,
    pub cap_warm_bps: f64,
    pub cap_cold_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedEdge {
    pub from: usize,
    pub to: usize,
    pub length_km: f64,
    pub capacity_warm: f64,
    pub capacity_cold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMeta {
    pub seed: u64,
    pub box_km: f64,
    pub target_degree: f64,
    pub min_rate_bps: f64,
    /// False when even the complete graph stays below the degree target.
    #[serde(default = "default_true")]
    pub target_reached: bool,
    /// Generation attempts spent by a rejection filter, when one was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts: Option<u32>,
}

fn default_true() -> bool {
    true
}

/// Directed graph `g = (N, E)` stored as undirected links; the directed edge
/// list is the canonical expansion `2i -> (a, b)`, `2i + 1 -> (b, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkGraph {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub meta: GraphMeta,
}

/// Topology generation inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyParams {
    pub box_km: f64,
    pub target_degree: f64,
    pub min_rate_bps: f64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            box_km: 100.0,
            target_degree: 3.5,
            min_rate_bps: 4000.0,
        }
    }
}

impl NetworkGraph {
    /// Builds a graph from explicit nodes and links (capacities included) and
    /// checks its invariants.
    pub fn from_parts(nodes: Vec<Node>, links: Vec<Link>, meta: GraphMeta) -> Result<Self, TopologyError> {
        let g = Self { nodes, links, meta };
        g.validate()?;
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn trusted_ids(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.is_trusted()).map(|n| n.id).collect()
    }

    pub fn relay_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_trusted()).count()
    }

    pub fn edge_count(&self) -> usize {
        2 * self.links.len()
    }

    pub fn edges(&self) -> Vec<DirectedEdge> {
        self.links
            .iter()
            .flat_map(|l| {
                let fwd = DirectedEdge {
                    from: l.a,
                    to: l.b,
                    length_km: l.length_km,
                    capacity_warm: l.cap_warm_bps,
                    capacity_cold: l.cap_cold_bps,
                };
                [
                    fwd,
                    DirectedEdge {
                        from: l.b,
                        to: l.a,
                        ..fwd
                    },
                ]
            })
            .collect()
    }

    /// Undirected degree of every node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for l in &self.links {
            deg[l.a] += 1;
            deg[l.b] += 1;
        }
        deg
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.links.len() as f64 / self.nodes.len() as f64
    }

    pub fn has_link(&self, a: usize, b: usize) -> bool {
        self.links
            .iter()
            .any(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for l in &self.links {
            adj[l.a].push(l.b);
            adj[l.b].push(l.a);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(TopologyError::Invalid(format!("node at index {i} has id {}", n.id)));
            }
            if !(n.x_km.is_finite() && n.y_km.is_finite()) {
                return Err(TopologyError::Invalid(format!("node {i} has a non-finite position")));
            }
        }
        let n = self.nodes.len();
        let mut seen = std::collections::BTreeSet::new();
        for l in &self.links {
            if l.a >= n || l.b >= n {
                return Err(TopologyError::Invalid(format!(
                    "link {}-{} references a missing node",
                    l.a, l.b
                )));
            }
            if l.a == l.b {
                return Err(TopologyError::Invalid(format!("self loop at node {}", l.a)));
            }
            if !(l.length_km > 0.0 && l.length_km.is_finite()) {
                return Err(TopologyError::Invalid(format!(
                    "link {}-{} has length {}",
                    l.a, l.b, l.length_km
                )));
            }
            if !(l.cap_warm_bps >= 0.0 && l.cap_cold_bps >= l.cap_warm_bps && l.cap_cold_bps.is_finite()) {
                return Err(TopologyError::Invalid(format!(
                    "link {}-{} needs cap_cold >= cap_warm >= 0, got {} / {}",
                    l.a, l.b, l.cap_cold_bps, l.cap_warm_bps
                )));
            }
            if !seen.insert((l.a.min(l.b), l.a.max(l.b))) {
                return Err(TopologyError::Invalid(format!("duplicate link {}-{}", l.a, l.b)));
            }
        }
        if !self.is_connected() {
            return Err(TopologyError::Invalid("graph is not connected".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let g: Self = serde_json::from_str(text).map_err(|e| TopologyError::Invalid(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }
}

/// Places `count` trusted nodes uniformly at random in a `box_km` square.
pub fn generate_nodes(count: usize, box_km: f64, seed: u64) -> Result<Vec<Node>, TopologyError> {
    if count < 2 {
        return Err(TopologyError::Parameter(format!("need at least 2 nodes, got {count}")));
    }
    if !(box_km > 0.0 && box_km.is_finite()) {
        return Err(TopologyError::Parameter(format!("box size must be > 0, got {box_km}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|id| Node {
            id,
            x_km: rng.random::<f64>() * box_km,
            y_km: rng.random::<f64>() * box_km,
            kind: NodeKind::Trusted,
        })
        .collect())
}

/// Undirected links produced by nearest-neighbour growth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrownLinks {
    pub links: Vec<(usize, usize)>,
    pub target_reached: bool,
}

/// Grows links in rounds: in round k every node (in id order) is joined to
/// its k-th nearest neighbour unless already linked. Growth stops right after
/// the first addition that lifts the mean degree to `target_mean_degree`.
/// Equidistant neighbours are ordered by id.
pub fn grow_edges(nodes: &[Node], target_mean_degree: f64) -> Result<GrownLinks, TopologyError> {
    let n = nodes.len();
    if n < 2 {
        return Err(TopologyError::Parameter(format!("need at least 2 nodes, got {n}")));
    }
    if !(target_mean_degree > 0.0) {
        return Err(TopologyError::Parameter(format!(
            "target mean degree must be > 0, got {target_mean_degree}"
        )));
    }
    let neighbours: Vec<Vec<usize>> = nodes
        .iter()
        .map(|u| {
            let mut order: Vec<usize> = (0..n).filter(|&v| v != u.id).collect();
            order.sort_by(|&a, &b| u.distance(&nodes[a]).total_cmp(&u.distance(&nodes[b])).then(a.cmp(&b)));
            order
        })
        .collect();

    let mut linked = vec![vec![false; n]; n];
    let mut links = Vec::new();
    let reached = |count: usize| 2.0 * count as f64 / n as f64 >= target_mean_degree;
    for round in 0..n - 1 {
        for u in 0..n {
            let v = neighbours[u][round];
            if linked[u][v] {
                continue;
            }
            linked[u][v] = true;
            linked[v][u] = true;
            links.push((u.min(v), u.max(v)));
            if reached(links.len()) {
                return Ok(GrownLinks {
                    links,
                    target_reached: true,
                });
            }
        }
    }
    Ok(GrownLinks {
        links,
        target_reached: false,
    })
}

/// Replaces every link longer than the uncooled reach for `min_rate` by a
/// chain of links through relay nodes placed at repeated midpoints.
pub fn insert_relays(
    graph: &NetworkGraph,
    min_rate: f64,
    warm: &LinkModelParams,
) -> Result<NetworkGraph, TopologyError> {
    let reach = keyrate::max_reach(min_rate, warm)?;
    Ok(bisect_long_links(graph, reach, min_rate))
}

/// Relay insertion against an explicit length limit in km.
pub fn bisect_long_links(graph: &NetworkGraph, max_length_km: f64, min_rate: f64) -> NetworkGraph {
    let mut nodes = graph.nodes.clone();
    let mut links = Vec::with_capacity(graph.links.len());
    for link in &graph.links {
        split(&mut nodes, &mut links, link.a, link.b, max_length_km);
    }
    NetworkGraph {
        nodes,
        links,
        meta: GraphMeta {
            min_rate_bps: min_rate,
            ..graph.meta.clone()
        },
    }
}

fn split(nodes: &mut Vec<Node>, links: &mut Vec<Link>, a: usize, b: usize, max_length_km: f64) {
    let length = nodes[a].distance(&nodes[b]);
    if length <= max_length_km {
        links.push(Link {
            a,
            b,
            length_km: length,
            cap_warm_bps: 0.0,
            cap_cold_bps: 0.0,
        });
        return;
    }
    let mid = nodes.len();
    nodes.push(Node {
        id: mid,
        x_km: 0.5 * (nodes[a].x_km + nodes[b].x_km),
        y_km: 0.5 * (nodes[a].y_km + nodes[b].y_km),
        kind: NodeKind::Relay,
    });
    split(nodes, links, a, mid, max_length_km);
    split(nodes, links, mid, b, max_length_km);
}

/// Sets warm and cold capacities of every link from the key-rate model and
/// checks that each warm capacity meets the graph's minimum rate.
pub fn annotate_capacities(
    graph: &NetworkGraph,
    warm: &LinkModelParams,
    cold: &LinkModelParams,
) -> Result<NetworkGraph, TopologyError> {
    let mut out = graph.clone();
    for l in &mut out.links {
        l.cap_warm_bps = keyrate::secure_key_rate(l.length_km, warm)?.rate_per_second;
        l.cap_cold_bps = keyrate::secure_key_rate(l.length_km, cold)?.rate_per_second;
        if l.cap_warm_bps < graph.meta.min_rate_bps {
            return Err(TopologyError::BelowMinimumRate {
                a: l.a,
                b: l.b,
                length_km: l.length_km,
                cap_warm_bps: l.cap_warm_bps,
                min_rate_bps: graph.meta.min_rate_bps,
            });
        }
    }
    Ok(out)
}

/// Full pipeline: nodes, nearest-neighbour links, relays and capacities.
pub fn generate(
    count: usize,
    seed: u64,
    params: &TopologyParams,
    warm: &LinkModelParams,
    cold: &LinkModelParams,
) -> Result<NetworkGraph, TopologyError> {
    let nodes = generate_nodes(count, params.box_km, seed)?;
    let grown = grow_edges(&nodes, params.target_degree)?;
    let links = grown
        .links
        .iter()
        .map(|&(a, b)| Link {
            a,
            b,
            length_km: nodes[a].distance(&nodes[b]),
            cap_warm_bps: 0.0,
            cap_cold_bps: 0.0,
        })
        .collect();
    let base = NetworkGraph {
        nodes,
        links,
        meta: GraphMeta {
            seed,
            box_km: params.box_km,
            target_degree: params.target_degree,
            min_rate_bps: params.min_rate_bps,
            target_reached: grown.target_reached,
            attempts: None,
        },
    };
    let relayed = insert_relays(&base, params.min_rate_bps, warm)?;
    let annotated = annotate_capacities(&relayed, warm, cold)?;
    annotated.validate()?;
    Ok(annotated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyrate::Regime;

    fn line(xs: &[f64]) -> Vec<Node> {
        xs.iter()
            .enumerate()
            .map(|(id, &x)| Node {
                id,
                x_km: x,
                y_km: 0.0,
                kind: NodeKind::Trusted,
            })
            .collect()
    }

    fn meta() -> GraphMeta {
        GraphMeta {
            seed: 0,
            box_km: 100.0,
            target_degree: 1.0,
            min_rate_bps: 4000.0,
            target_reached: true,
            attempts: None,
        }
    }

    fn single_link(length: f64) -> NetworkGraph {
        let nodes = line(&[0.0, length]);
        NetworkGraph {
            links: vec![Link {
                a: 0,
                b: 1,
                length_km: length,
                cap_warm_bps: 0.0,
                cap_cold_bps: 0.0,
            }],
            nodes,
            meta: meta(),
        }
    }

    #[test]
    fn node_generation_is_deterministic_and_bounded() {
        assert_eq!(
            generate_nodes(2, 100.0, 9).unwrap(),
            generate_nodes(2, 100.0, 9).unwrap()
        );
        let nodes = generate_nodes(10, 100.0, 3).unwrap();
        assert!(nodes
            .iter()
            .all(|n| (0.0..=100.0).contains(&n.x_km) && (0.0..=100.0).contains(&n.y_km)));
        assert!(generate_nodes(1, 100.0, 0).is_err());
        assert!(generate_nodes(3, 0.0, 0).is_err());
    }

    #[test]
    fn coordinate_mean_is_centred() {
        let nodes = generate_nodes(10_000, 100.0, 11).unwrap();
        let mx = nodes.iter().map(|n| n.x_km).sum::<f64>() / 1e4;
        let my = nodes.iter().map(|n| n.y_km).sum::<f64>() / 1e4;
        assert!((mx - 50.0).abs() < 2.0 && (my - 50.0).abs() < 2.0);
    }

    #[test]
    fn two_nodes_single_link() {
        let g = grow_edges(&line(&[0.0, 5.0]), 1.0).unwrap();
        assert_eq!(g.links, vec![(0, 1)]);
        assert!(g.target_reached);
    }

    #[test]
    fn collinear_first_round() {
        let g = grow_edges(&line(&[0.0, 1.0, 3.0]), 100.0).unwrap();
        assert_eq!(&g.links[..2], &[(0, 1), (1, 2)]);
        assert_eq!(g.links.len(), 3);
        assert!(!g.target_reached);
    }

    #[test]
    fn ties_prefer_lower_id() {
        // node 1 is equidistant from 0 and 2
        let g = grow_edges(&line(&[0.0, 1.0, 2.0]), 100.0).unwrap();
        assert_eq!(g.links[0], (0, 1));
        assert_eq!(g.links[1], (1, 2));
    }

    #[test]
    fn mean_degree_lands_in_window() {
        for seed in 0..20 {
            let nodes = generate_nodes(10, 100.0, seed).unwrap();
            let g = grow_edges(&nodes, 3.5).unwrap();
            let mean = 2.0 * g.links.len() as f64 / 10.0;
            assert!((3.5..=3.5 + 0.2 + 1e-12).contains(&mean), "seed {seed}: {mean}");
        }
    }

    #[test]
    fn short_links_untouched() {
        let g = single_link(10.0);
        let out = bisect_long_links(&g, 20.0, 4000.0);
        assert_eq!(out.nodes, g.nodes);
        assert_eq!(out.links, g.links);
    }

    #[test]
    fn one_and_a_half_reach_needs_one_relay() {
        let out = bisect_long_links(&single_link(15.0), 10.0, 4000.0);
        assert_eq!(out.relay_count(), 1);
        assert_eq!(out.links.len(), 2);
        assert!(out.links.iter().all(|l| (l.length_km - 7.5).abs() < 1e-12));
        assert_eq!(out.nodes[2].kind, NodeKind::Relay);
    }

    #[test]
    fn two_and_a_half_reach_needs_three_relays() {
        let out = bisect_long_links(&single_link(25.0), 10.0, 4000.0);
        assert_eq!(out.relay_count(), 3);
        assert_eq!(out.links.len(), 4);
        assert!(out.links.iter().all(|l| (l.length_km - 6.25).abs() < 1e-12));
        assert!(out.is_connected());
    }

    #[test]
    fn generated_graph_invariants() {
        let warm = LinkModelParams::table_defaults(Regime::Warm);
        let cold = LinkModelParams::table_defaults(Regime::Cold);
        let reach = keyrate::max_reach(4000.0, &warm).unwrap();
        for seed in 0..10 {
            let g = generate(10, seed, &TopologyParams::default(), &warm, &cold).unwrap();
            assert!(g.is_connected());
            for l in &g.links {
                assert!(l.length_km <= reach);
                assert!(l.cap_warm_bps >= 4000.0);
                assert!(l.cap_cold_bps > l.cap_warm_bps);
            }
            let edges = g.edges();
            for pair in edges.chunks(2) {
                assert_eq!(pair[0].from, pair[1].to);
                assert_eq!(pair[0].length_km, pair[1].length_km);
                assert_eq!(pair[0].capacity_warm, pair[1].capacity_warm);
            }
            let again = generate(10, seed, &TopologyParams::default(), &warm, &cold).unwrap();
            assert_eq!(g.to_json(), again.to_json());
            assert_eq!(NetworkGraph::from_json(&g.to_json()).unwrap(), g);
        }
    }

    #[test]
    fn validation_catches_broken_graphs() {
        let mut g = single_link(10.0);
        g.links[0].cap_warm_bps = 5.0;
        g.links[0].cap_cold_bps = 1.0;
        assert!(g.validate().is_err());
        let mut g = single_link(10.0);
        g.links.push(g.links[0].clone());
        assert!(g.validate().is_err());
        let mut g = single_link(10.0);
        g.nodes.push(Node {
            id: 2,
            x_km: 1.0,
            y_km: 1.0,
            kind: NodeKind::Trusted,
        });
        assert!(g.validate().is_err());
    }

    #[test]
    fn annotation_rejects_links_below_minimum() {
        let warm = LinkModelParams::table_defaults(Regime::Warm);
        let cold = LinkModelParams::table_defaults(Regime::Cold);
        let g = single_link(120.0);
        assert!(matches!(
            annotate_capacities(&g, &warm, &cold),
            Err(TopologyError::BelowMinimumRate { .. })
        ));
    }
}
