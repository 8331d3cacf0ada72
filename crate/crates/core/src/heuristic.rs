//! Degree-ranked cooling placement and the cost envelope over the number of
//! cooled nodes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::milp::{
    build_model, solve_with_fixed_cooling, DemandMatrix, MilpError, ModelOptions, PlacementModel, SolveStatus,
    SolverOptions,
};
use crate::scalar::Field;
use crate::topology::NetworkGraph;

/// Nodes by descending undirected degree, ties by ascending id. Relays are
/// ranked like any other node.
pub fn rank_nodes_by_degree(graph: &NetworkGraph) -> Vec<usize> {
    let degree = graph.degrees();
    let mut order: Vec<usize> = (0..degree.len()).collect();
    order.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub k: usize,
    pub cooled: Vec<usize>,
    /// Equipped link count `L_k`; `None` when infeasible.
    pub links: Option<u32>,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSweep {
    pub ranking: Vec<usize>,
    pub entries: Vec<SweepEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepOptions {
    pub solver: SolverOptions,
    /// Worker threads for the per-k solves; 1 solves them in order.
    pub jobs: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            jobs: 1,
        }
    }
}

impl CostSweep {
    /// `L_k` per k as plain numbers, `None` for infeasible entries.
    pub fn link_counts<T: Field>(&self) -> Vec<Option<T>> {
        self.entries
            .iter()
            .map(|e| e.links.map(|l| T::from_count(l as usize)))
            .collect()
    }

    pub fn envelope(&self) -> CostCurve<f64> {
        lower_envelope(&self.link_counts::<f64>())
    }

    /// `k,links` table; infeasible rows leave `links` empty.
    pub fn links_csv(&self) -> String {
        let mut out = String::from("k,links\n");
        for e in &self.entries {
            match e.links {
                Some(l) => {
                    let _ = writeln!(out, "{},{}", e.k, l);
                }
                None => {
                    let _ = writeln!(out, "{},", e.k);
                }
            }
        }
        out
    }
}

/// Cools the top `k` ranked nodes for every `k` in `0..=k_max` and records
/// the optimal link count of each.
///
/// Once some `L_k` equals the link count with every node cooled, all later
/// entries are set to it without solving: cooling more nodes can only
/// lower `L_k`, and never below that floor.
pub fn sweep(
    graph: &NetworkGraph,
    demands: &DemandMatrix,
    k_max: usize,
    options: &SweepOptions,
) -> Result<CostSweep, MilpError> {
    if k_max > graph.node_count() {
        return Err(MilpError::Parameter(format!(
            "k_max {k_max} exceeds the {} nodes of the graph",
            graph.node_count()
        )));
    }
    let model = build_model(graph, demands, 0.0, ModelOptions::default())?;
    let ranking = rank_nodes_by_degree(graph);
    let solve_k = |k: usize| -> Result<Option<u32>, MilpError> {
        let s = solve_with_fixed_cooling(&model, &ranking[..k], &options.solver)?;
        Ok(s.is_optimal().then(|| s.link_count()))
    };
    let links: Vec<Option<u32>> = if options.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs)
            .build()
            .map_err(|e| MilpError::Parameter(e.to_string()))?;
        pool.install(|| (0..=k_max).into_par_iter().map(solve_k).collect::<Result<_, _>>())?
    } else {
        sequential_links(&model, &ranking, k_max, &options.solver, solve_k)?
    };
    let entries = links
        .into_iter()
        .enumerate()
        .map(|(k, links)| SweepEntry {
            k,
            cooled: ranking[..k].to_vec(),
            links,
            status: if links.is_some() {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            },
        })
        .collect();
    Ok(CostSweep { ranking, entries })
}

fn sequential_links(
    model: &PlacementModel,
    ranking: &[usize],
    k_max: usize,
    solver: &SolverOptions,
    solve_k: impl Fn(usize) -> Result<Option<u32>, MilpError>,
) -> Result<Vec<Option<u32>>, MilpError> {
    let mut floor: Option<Option<u32>> = None;
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let links = solve_k(k)?;
        out.push(links);
        if k == k_max {
            break;
        }
        if floor.is_none() {
            let all = solve_with_fixed_cooling(model, ranking, solver)?;
            floor = Some(all.is_optimal().then(|| all.link_count()));
        }
        if links.is_some() && links == floor.flatten() {
            out.resize(k_max + 1, links);
            break;
        }
    }
    Ok(out)
}

/// One linear piece of the envelope: on `[cc_from, cc_to)` the cheapest
/// choice cools `k_star` nodes at cost `intercept + slope * C_C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSegment<T> {
    pub cc_from: T,
    /// `None` for the final, unbounded piece.
    pub cc_to: Option<T>,
    pub k_star: usize,
    pub intercept: T,
    pub slope: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostCurve<T> {
    pub segments: Vec<EnvelopeSegment<T>>,
}

impl<T: Field> CostCurve<T> {
    pub fn segment_at(&self, cc: &T) -> Option<&EnvelopeSegment<T>> {
        self.segments
            .iter()
            .find(|s| s.cc_to.as_ref().is_none_or(|to| cc < to) && &s.cc_from <= cc)
    }

    /// Envelope value and optimal `k` at `cc`.
    pub fn evaluate(&self, cc: &T) -> Option<(T, usize)> {
        self.segment_at(cc)
            .map(|s| (s.intercept.clone() + s.slope.clone() * cc.clone(), s.k_star))
    }

    /// Points where the optimal `k` changes.
    pub fn breakpoints(&self) -> Vec<T> {
        self.segments.iter().filter_map(|s| s.cc_to.clone()).collect()
    }
}

impl CostCurve<f64> {
    /// `cc_from,cc_to,k_star,intercept,slope`; the last piece has an empty
    /// `cc_to`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cc_from,cc_to,k_star,intercept,slope\n");
        for s in &self.segments {
            let to = s.cc_to.map(crate::fmt_float).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                crate::fmt_float(s.cc_from),
                to,
                s.k_star,
                crate::fmt_float(s.intercept),
                crate::fmt_float(s.slope)
            );
        }
        out
    }
}

/// Lower envelope of the lines `L_k + k * C_C` over `C_C >= 0`. Infeasible
/// entries are skipped; ties go to the smaller `k`, so at a breakpoint the
/// piece with fewer cooled nodes already applies.
pub fn lower_envelope<T: Field>(links: &[Option<T>]) -> CostCurve<T> {
    let lines: Vec<(usize, T)> = links
        .iter()
        .enumerate()
        .filter_map(|(k, l)| l.clone().map(|l| (k, l)))
        .collect();
    let mut segments = Vec::new();
    let Some(first) = lines.iter().fold(None::<&(usize, T)>, |best, line| match best {
        Some(b) if b.1 <= line.1 => Some(b),
        _ => Some(line),
    }) else {
        return CostCurve { segments };
    };
    let (mut k, mut l) = first.clone();
    let mut from = T::zero();
    loop {
        // the line with fewer cooled nodes that takes over first
        let mut next: Option<(T, usize, T)> = None;
        for (j, lj) in lines.iter().filter(|(j, _)| *j < k) {
            let cross = (lj.clone() - l.clone()) / T::from_count(k - j);
            let take = match &next {
                None => true,
                Some((c, nj, _)) => cross < *c || (cross == *c && j < nj),
            };
            if take {
                next = Some((cross, *j, lj.clone()));
            }
        }
        match next {
            Some((cross, j, lj)) => {
                let cross = if cross < from { from.clone() } else { cross };
                if cross > from {
                    segments.push(EnvelopeSegment {
                        cc_from: from.clone(),
                        cc_to: Some(cross.clone()),
                        k_star: k,
                        intercept: l.clone(),
                        slope: T::from_count(k),
                    });
                }
                from = cross;
                k = j;
                l = lj;
            }
            None => {
                segments.push(EnvelopeSegment {
                    cc_from: from,
                    cc_to: None,
                    k_star: k,
                    intercept: l,
                    slope: T::from_count(k),
                });
                return CostCurve { segments };
            }
        }
    }
}

/// `min_k (L_k + k * C_C)` and the smallest minimizing `k`.
pub fn heuristic_cost<T: Field>(links: &[Option<T>], cc: &T) -> Option<(T, usize)> {
    let mut best: Option<(T, usize)> = None;
    for (k, l) in links.iter().enumerate() {
        let Some(l) = l else { continue };
        let cost = l.clone() + T::from_count(k) * cc.clone();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, k));
        }
    }
    best
}
