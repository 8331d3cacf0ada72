//! Shared test helpers: small random graphs and an exact enumeration oracle
//! for the placement program.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qkd_cooling::topology::{GraphMeta, Link, NetworkGraph, Node, NodeKind};

pub fn meta() -> GraphMeta {
    GraphMeta {
        seed: 0,
        box_km: 100.0,
        target_degree: 2.0,
        min_rate_bps: 4000.0,
        target_reached: true,
        attempts: None,
    }
}

pub fn two_node_graph(c_warm: f64, c_cold: f64) -> NetworkGraph {
    let nodes = (0..2)
        .map(|id| Node {
            id,
            x_km: 10.0 * id as f64,
            y_km: 0.0,
            kind: NodeKind::Trusted,
        })
        .collect();
    let links = vec![Link {
        a: 0,
        b: 1,
        length_km: 10.0,
        cap_warm_bps: c_warm,
        cap_cold_bps: c_cold,
    }];
    NetworkGraph::from_parts(nodes, links, meta()).unwrap()
}

/// Connected graph with 2 to 5 nodes and at most 4 links. Capacities are
/// whole kbit/s; node 0 and 1 are always trusted, later nodes may be relays.
pub fn small_graph(seed: u64) -> NetworkGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=5usize);
    let nodes: Vec<Node> = (0..n)
        .map(|id| Node {
            id,
            x_km: rng.random_range(0.0..50.0),
            y_km: rng.random_range(0.0..50.0),
            kind: if id >= 2 && rng.random_bool(0.25) {
                NodeKind::Relay
            } else {
                NodeKind::Trusted
            },
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    while pairs.len() < 4 && rng.random_bool(0.5) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let p = (a.min(b), a.max(b));
        if a != b && !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    let links = pairs
        .into_iter()
        .map(|(a, b)| {
            let warm = rng.random_range(2..=20u32) as f64 * 1000.0;
            let cold = warm + rng.random_range(0..=40u32) as f64 * 1000.0;
            Link {
                a,
                b,
                length_km: rng.random_range(1.0..80.0),
                cap_warm_bps: warm,
                cap_cold_bps: cold,
            }
        })
        .collect();
    NetworkGraph::from_parts(nodes, links, meta()).unwrap()
}

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite")
}

/// Phase-one simplex over the rationals with Bland's rule: is there
/// `x >= 0` with `rows[i] . x (<= or =) rhs[i]`? All `rhs` must be >= 0.
fn feasible(rows: &[(Vec<BigRational>, bool, BigRational)], vars: usize) -> bool {
    let m = rows.len();
    let slacks: Vec<usize> = (0..m).filter(|&i| !rows[i].1).collect();
    let cols = vars + slacks.len() + m;
    let mut t: Vec<Vec<BigRational>> = Vec::with_capacity(m);
    for (i, (coef, _, rhs)) in rows.iter().enumerate() {
        let mut row = vec![BigRational::zero(); cols + 1];
        row[..vars].clone_from_slice(coef);
        if let Some(s) = slacks.iter().position(|&r| r == i) {
            row[vars + s] = BigRational::one();
        }
        row[vars + slacks.len() + i] = BigRational::one();
        row[cols] = rhs.clone();
        t.push(row);
    }
    let art = vars + slacks.len();
    let mut basis: Vec<usize> = (0..m).map(|i| art + i).collect();
    // reduced costs of "minimize sum of artificials"
    let mut cost = vec![BigRational::zero(); cols + 1];
    for row in &t {
        for j in 0..=cols {
            if j < art || j == cols {
                cost[j] -= &row[j];
            }
        }
    }
    loop {
        let Some(enter) = (0..cols).find(|&j| cost[j].is_negative()) else {
            break;
        };
        let mut leave: Option<(usize, BigRational)> = None;
        for i in 0..m {
            if t[i][enter].is_positive() {
                let ratio = &t[i][cols] / &t[i][enter];
                let better = match &leave {
                    None => true,
                    Some((l, r)) => ratio < *r || (ratio == *r && basis[i] < basis[*l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((p, _)) = leave else { break };
        let pivot = t[p][enter].clone();
        for v in t[p].iter_mut() {
            *v = &*v / &pivot;
        }
        let prow = t[p].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != p && !row[enter].is_zero() {
                let f = row[enter].clone();
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= &f * pv;
                }
            }
        }
        let f = cost[enter].clone();
        for (v, pv) in cost.iter_mut().zip(&prow) {
            *v -= &f * pv;
        }
        basis[p] = enter;
    }
    cost[cols].is_zero()
}

/// Directed simple paths from `s` to `t` over the allowed edges.
fn paths(edges: &[(usize, usize)], allowed: &[bool], s: usize, t: usize) -> Vec<Vec<usize>> {
    fn walk(
        edges: &[(usize, usize)],
        allowed: &[bool],
        at: usize,
        t: usize,
        seen: &mut Vec<usize>,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if at == t {
            out.push(path.clone());
            return;
        }
        for (e, &(u, v)) in edges.iter().enumerate() {
            if allowed[e] && u == at && !seen.contains(&v) {
                seen.push(v);
                path.push(e);
                walk(edges, allowed, v, t, seen, path, out);
                path.pop();
                seen.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(edges, allowed, s, t, &mut vec![s], &mut Vec::new(), &mut out);
    out
}

/// Can the demand be routed with the given equipped edges and cooled
/// nodes? Written directly from the two capacity rows of every edge:
/// `sum x <= delta c_cold` and `sum x - xi_head * T <= delta c_warm`,
/// with `T` the sum of all ordered demands, using path flows.
pub fn routable(graph: &NetworkGraph, per_node: f64, equip: &[bool], cooled: &[bool]) -> bool {
    let trusted: Vec<usize> = graph
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Trusted)
        .map(|n| n.id)
        .collect();
    let k = exact(per_node) / BigRational::from_integer(BigInt::from(trusted.len() - 1));
    let total = &k * BigRational::from_integer(BigInt::from(trusted.len() * (trusted.len() - 1)));
    let mut edges = Vec::new();
    let mut caps = Vec::new();
    for l in &graph.links {
        for (u, v) in [(l.a, l.b), (l.b, l.a)] {
            edges.push((u, v));
            caps.push((exact(l.cap_warm_bps), exact(l.cap_cold_bps)));
        }
    }
    let mut columns: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut pairs = 0;
    for (ai, &a) in trusted.iter().enumerate() {
        for &b in &trusted[ai + 1..] {
            let mut found = false;
            for (s, t) in [(a, b), (b, a)] {
                for p in paths(&edges, equip, s, t) {
                    columns.push((pairs, p));
                    found = true;
                }
            }
            if !found {
                return false;
            }
            pairs += 1;
        }
    }
    let vars = columns.len();
    let mut rows = Vec::new();
    for pair in 0..pairs {
        let coef = columns
            .iter()
            .map(|(q, _)| {
                if *q == pair {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            })
            .collect();
        rows.push((coef, true, &k + &k));
    }
    for (e, &(_, head)) in edges.iter().enumerate() {
        let coef: Vec<BigRational> = columns
            .iter()
            .map(|(_, p)| {
                if p.contains(&e) {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            })
            .collect();
        let d = if equip[e] {
            BigRational::one()
        } else {
            BigRational::zero()
        };
        let relief = if cooled[head] {
            total.clone()
        } else {
            BigRational::zero()
        };
        rows.push((coef.clone(), false, &d * &caps[e].1));
        rows.push((coef, false, &d * &caps[e].0 + relief));
    }
    feasible(&rows, vars)
}

/// Exhaustive minimum of `sum delta + cc * sum xi` over every binary
/// pattern, in increasing cost order; `None` when nothing is routable.
pub fn enumerate_optimum(graph: &NetworkGraph, per_node: f64, cc: f64) -> Option<f64> {
    let e = 2 * graph.links.len();
    let n = graph.node_count();
    let mut patterns: Vec<(f64, u32, u32)> = Vec::new();
    for d in 0u32..(1 << e) {
        for x in 0u32..(1 << n) {
            patterns.push((d.count_ones() as f64 + cc * x.count_ones() as f64, d, x));
        }
    }
    patterns.sort_by(|a, b| a.0.total_cmp(&b.0));
    patterns.into_iter().find_map(|(cost, d, x)| {
        let equip: Vec<bool> = (0..e).map(|i| d >> i & 1 == 1).collect();
        let cooled: Vec<bool> = (0..n).map(|i| x >> i & 1 == 1).collect();
        routable(graph, per_node, &equip, &cooled).then_some(cost)
    })
}
