//! Independent re-check of a solution against the row form of the program.

use serde::Serialize;

use super::model::{ConstraintFamily, RowSense, VarRef};
use super::{PlacementModel, PlacementSolution};

/// Absolute tolerance on every row, domain and on the objective.
pub const VERIFY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub family: ConstraintFamily,
    pub name: String,
    /// Amount by which the row is violated (positive).
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub violations: Vec<Violation>,
    pub rows_checked: usize,
    /// `|delta| + C_C |xi|` (or `|delta|` with pinned cooling) recomputed.
    pub recomputed_objective: f64,
    pub objective_mismatch: Option<f64>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.objective_mismatch.is_none()
    }

    pub fn violations_in(&self, family: ConstraintFamily) -> usize {
        self.violations.iter().filter(|v| v.family == family).count()
    }
}

/// Checks every row, every variable domain and the objective arithmetic.
pub fn verify_solution(model: &PlacementModel, solution: &PlacementSolution) -> VerificationReport {
    let mut violations = Vec::new();
    let delta: Vec<f64> = model
        .edges
        .iter()
        .map(|e| {
            solution
                .equipped_links
                .iter()
                .filter(|l| l.from == e.from && l.to == e.to)
                .map(|l| l.count as f64)
                .sum()
        })
        .collect();
    let xi: Vec<f64> = (0..model.node_count())
        .map(|n| if solution.cooled_nodes.contains(&n) { 1.0 } else { 0.0 })
        .collect();
    let mut flows = vec![0.0; model.flow_var_count()];
    for f in &solution.flows {
        let slot = model.commodities.iter().enumerate().find_map(|(ci, c)| {
            let dir = (0..2).find(|&d| c.endpoints(d) == f.commodity)?;
            let e = model.edges.iter().position(|e| (e.from, e.to) == f.edge)?;
            Some(model.flow_index(ci, dir, e))
        });
        match slot {
            Some(i) => flows[i] += f.bps,
            None => violations.push(Violation {
                family: ConstraintFamily::Domain,
                name: format!("unknown flow {:?} on {:?}", f.commodity, f.edge),
                excess: f.bps.abs(),
            }),
        }
    }

    // domains
    for (i, &x) in flows.iter().enumerate() {
        let rounded_ok = !model.options.integral_flows || (x - x.round()).abs() <= VERIFY_TOLERANCE;
        if x < -VERIFY_TOLERANCE || !x.is_finite() || !rounded_ok {
            violations.push(Violation {
                family: ConstraintFamily::Domain,
                name: format!("flow[{i}]"),
                excess: if x < 0.0 { -x } else { (x - x.round()).abs() },
            });
        }
    }
    let max_links = model.options.equip_mode.max_links() as f64;
    for (e, &d) in delta.iter().enumerate() {
        if d > max_links {
            violations.push(Violation {
                family: ConstraintFamily::Domain,
                name: model.var_name(VarRef::Equip(e)),
                excess: d - max_links,
            });
        }
    }
    for &n in &solution.cooled_nodes {
        if n >= model.node_count() {
            violations.push(Violation {
                family: ConstraintFamily::Domain,
                name: format!("cooled node {n}"),
                excess: 1.0,
            });
        }
    }

    let value = |v: VarRef| match v {
        VarRef::Flow { commodity, dir, edge } => flows[model.flow_index(commodity, dir, edge)],
        VarRef::Equip(e) => delta[e],
        VarRef::Cool(n) => xi[n],
    };
    let rows = model.rows();
    for row in &rows {
        let r = row.residual(value);
        let excess = match row.sense {
            RowSense::Le => r,
            RowSense::Eq => r.abs(),
        };
        if excess > VERIFY_TOLERANCE || excess.is_nan() {
            violations.push(Violation {
                family: row.family,
                name: row.name.clone(),
                excess,
            });
        }
    }

    let links: f64 = delta.iter().sum();
    let recomputed_objective = if solution.cooling_fixed {
        links
    } else {
        links + model.cooling_cost * xi.iter().sum::<f64>()
    };
    let diff = (recomputed_objective - solution.objective).abs();
    VerificationReport {
        violations,
        rows_checked: rows.len(),
        recomputed_objective,
        objective_mismatch: (diff > VERIFY_TOLERANCE || diff.is_nan()).then_some(diff),
    }
}
