//! Exact optimum over a list of cooling costs.
//!
//! The optimal cost at `C` is `min over S of L*(S) + C |S|`, where `L*(S)`
//! is the link count with `S` cooled. Every cooled set is a line in `C`, so
//! the curve is the lower envelope of one line per set size. Starting from
//! known lines, sets of size `s` are only enumerated while some cost in the
//! list still leaves room below the current envelope, and subtrees of the
//! enumeration are cut off with a solve that cools every remaining
//! candidate. `L*(S)` never drops below the link count with all nodes
//! cooled, which ends the search.

use std::collections::HashMap;

use serde::Serialize;

use super::{solve_with_fixed_cooling, solve_with_fixed_cooling_within, MilpError, PlacementModel, SolverOptions};

/// A cooled set with its optimal link count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoolingLine {
    pub cooled: Vec<usize>,
    pub links: u32,
}

impl CoolingLine {
    pub fn cost(&self, cc: f64) -> f64 {
        self.links as f64 + cc * self.cooled.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostPoint {
    pub cc: f64,
    pub cost: f64,
    pub cooled: Vec<usize>,
    pub links: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParametricOptimum {
    /// Optimum at each requested cost; empty when even the fully cooled
    /// network cannot carry the demand.
    pub points: Vec<CostPoint>,
    /// Best known line per cooled set size.
    pub lines: Vec<CoolingLine>,
    /// Fixed-cooling solves spent on the search.
    pub solves: usize,
}

enum Known {
    Exact(u32),
    Above(u32),
}

struct Search<'a> {
    model: &'a PlacementModel,
    options: &'a SolverOptions,
    order: Vec<usize>,
    cache: HashMap<Vec<usize>, Known>,
    solves: usize,
}

impl Search<'_> {
    /// `L*(set)` when it is at most `limit`.
    fn within(&mut self, mut set: Vec<usize>, limit: u32) -> Result<Option<u32>, MilpError> {
        set.sort_unstable();
        match self.cache.get(&set) {
            Some(Known::Exact(v)) => return Ok((*v <= limit).then_some(*v)),
            Some(Known::Above(t)) if *t >= limit => return Ok(None),
            _ => {}
        }
        self.solves += 1;
        let found = solve_with_fixed_cooling_within(self.model, &set, limit, self.options)?;
        let value = found.map(|s| s.link_count());
        self.cache.insert(
            set,
            match value {
                Some(v) => Known::Exact(v),
                None => Known::Above(limit),
            },
        );
        Ok(value)
    }

    /// Cheapest set of exactly `size` nodes with at most `limit` links.
    fn best_of_size(&mut self, size: usize, limit: u32) -> Result<Option<CoolingLine>, MilpError> {
        let mut best = None;
        let mut limit = Some(limit);
        let mut chosen = Vec::with_capacity(size);
        self.descend(size, 0, &mut chosen, &mut limit, &mut best)?;
        Ok(best)
    }

    fn descend(
        &mut self,
        size: usize,
        next: usize,
        chosen: &mut Vec<usize>,
        limit: &mut Option<u32>,
        best: &mut Option<CoolingLine>,
    ) -> Result<(), MilpError> {
        let Some(cap) = *limit else { return Ok(()) };
        if chosen.len() == size {
            if let Some(v) = self.within(chosen.clone(), cap)? {
                *best = Some(CoolingLine {
                    cooled: sorted(chosen),
                    links: v,
                });
                *limit = v.checked_sub(1);
            }
            return Ok(());
        }
        if self.order.len() - next < size - chosen.len() {
            return Ok(());
        }
        if next > 0 {
            let mut superset = chosen.clone();
            superset.extend_from_slice(&self.order[next..]);
            if self.within(superset, cap)?.is_none() {
                return Ok(());
            }
        }
        chosen.push(self.order[next]);
        self.descend(size, next + 1, chosen, limit, best)?;
        chosen.pop();
        self.descend(size, next + 1, chosen, limit, best)
    }
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

fn envelope_at(lines: &[CoolingLine], cc: f64) -> Option<&CoolingLine> {
    lines.iter().min_by(|a, b| {
        a.cost(cc)
            .total_cmp(&b.cost(cc))
            .then(a.cooled.len().cmp(&b.cooled.len()))
    })
}

/// Optimal cost at every entry of `costs`. `known` may hold any feasible
/// lines, such as those of the degree-ranked heuristic; they only speed up
/// the search. Ties between sets go to the smaller cooled set.
pub fn optimal_over_costs(
    model: &PlacementModel,
    costs: &[f64],
    known: &[CoolingLine],
    options: &SolverOptions,
) -> Result<ParametricOptimum, MilpError> {
    if let Some(bad) = costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(MilpError::Parameter(format!(
            "cooling cost {bad} must be finite and non-negative"
        )));
    }
    let n = model.node_count();
    let mut in_degree = vec![0usize; n];
    for e in &model.edges {
        in_degree[e.to] += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| in_degree[b].cmp(&in_degree[a]).then(a.cmp(&b)));
    let mut search = Search {
        model,
        options,
        order,
        cache: HashMap::new(),
        solves: 0,
    };

    let mut by_size: Vec<Option<CoolingLine>> = vec![None; n + 1];
    for line in known {
        let s = line.cooled.len();
        if s <= n && by_size[s].as_ref().is_none_or(|b| line.links < b.links) {
            by_size[s] = Some(CoolingLine {
                cooled: sorted(&line.cooled),
                links: line.links,
            });
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let floor = match &by_size[n] {
        Some(l) => l.links,
        None => {
            search.solves += 1;
            let s = solve_with_fixed_cooling(model, &all, options)?;
            if !s.is_optimal() {
                return Ok(ParametricOptimum {
                    points: Vec::new(),
                    lines: Vec::new(),
                    solves: search.solves,
                });
            }
            by_size[n] = Some(CoolingLine {
                cooled: all.clone(),
                links: s.link_count(),
            });
            s.link_count()
        }
    };
    search.cache.insert(all, Known::Exact(floor));
    if by_size[0].is_none() {
        by_size[0] = search.within(Vec::new(), u32::MAX)?.map(|links| CoolingLine {
            cooled: Vec::new(),
            links,
        });
    }

    for size in 1..n {
        let lines: Vec<CoolingLine> = by_size.iter().flatten().cloned().collect();
        // room below the envelope for a line of this slope
        let room = costs
            .iter()
            .map(|&cc| envelope_at(&lines, cc).map_or(f64::INFINITY, |l| l.cost(cc)) - cc * size as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        let limit = (room - options.objective_tolerance).ceil() - 1.0;
        if limit < floor as f64 {
            break;
        }
        let limit = limit.min(u32::MAX as f64) as u32;
        if let Some(line) = search.best_of_size(size, limit)? {
            by_size[size] = Some(line);
        }
    }

    let lines: Vec<CoolingLine> = by_size.into_iter().flatten().collect();
    let points = costs
        .iter()
        .map(|&cc| {
            let l = envelope_at(&lines, cc).expect("the fully cooled line is present");
            CostPoint {
                cc,
                cost: l.cost(cc),
                cooled: l.cooled.clone(),
                links: l.links,
            }
        })
        .collect();
    Ok(ParametricOptimum {
        points,
        lines,
        solves: search.solves,
    })
}
