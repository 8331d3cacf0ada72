//! Explicit row-by-row form of the placement program, used for export and
//! for independent solution checks.

use super::PlacementModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarRef {
    /// `x[(i,j)][e]` for ordered commodity `dir` of pair `commodity`.
    Flow { commodity: usize, dir: usize, edge: usize },
    /// `delta[e]`
    Equip(usize),
    /// `xi[n]`
    Cool(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintFamily {
    /// `sum x[e] - delta[e] c_cold[e] <= 0`
    ColdCapacity,
    /// `sum (x[e] - xi[m] K) - delta[e] c_warm[e] <= 0` for `e = (n, m)`
    WarmCapacity,
    /// `out of i for (i,j)` + `into i for (j,i)` = `K_ij + K_ji`
    SymmetricSource,
    /// flow conservation away from a commodity's endpoints
    Conservation,
    /// no flow of `(i,j)` enters `i`
    NoReturnToSource,
    /// no flow of `(i,j)` leaves `j`
    NoExitFromDestination,
    /// variable domains (binary cooling, integral equipping, non-negative flows)
    Domain,
}

impl ConstraintFamily {
    pub const ALL: [ConstraintFamily; 7] = [
        ConstraintFamily::ColdCapacity,
        ConstraintFamily::WarmCapacity,
        ConstraintFamily::SymmetricSource,
        ConstraintFamily::Conservation,
        ConstraintFamily::NoReturnToSource,
        ConstraintFamily::NoExitFromDestination,
        ConstraintFamily::Domain,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub family: ConstraintFamily,
    pub name: String,
    pub terms: Vec<(VarRef, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl LinearRow {
    /// Left-hand side minus right-hand side for an assignment.
    pub fn residual(&self, value: impl Fn(VarRef) -> f64) -> f64 {
        self.terms.iter().map(|&(v, c)| c * value(v)).sum::<f64>() - self.rhs
    }
}

impl PlacementModel {
    pub fn var_name(&self, v: VarRef) -> String {
        match v {
            VarRef::Flow { commodity, dir, edge } => {
                let (i, j) = self.commodities[commodity].endpoints(dir);
                let e = &self.edges[edge];
                format!("x_{i}_{j}_{}_{}", e.from, e.to)
            }
            VarRef::Equip(e) => format!("d_{}_{}", self.edges[e].from, self.edges[e].to),
            VarRef::Cool(n) => format!("xi_{n}"),
        }
    }

    pub fn flow_vars(&self) -> impl Iterator<Item = VarRef> + '_ {
        (0..self.commodities.len()).flat_map(move |commodity| {
            (0..2).flat_map(move |dir| (0..self.edges.len()).map(move |edge| VarRef::Flow { commodity, dir, edge }))
        })
    }

    fn edge_flow_terms(&self, edge: usize) -> Vec<(VarRef, f64)> {
        (0..self.commodities.len())
            .flat_map(|commodity| (0..2).map(move |dir| (VarRef::Flow { commodity, dir, edge }, 1.0)))
            .collect()
    }

    /// Every linear row of the program, grouped by family.
    pub fn rows(&self) -> Vec<LinearRow> {
        let mut rows = Vec::new();
        for (ei, e) in self.edges.iter().enumerate() {
            let mut terms = self.edge_flow_terms(ei);
            terms.push((VarRef::Equip(ei), -e.capacity_cold));
            rows.push(LinearRow {
                family: ConstraintFamily::ColdCapacity,
                name: format!("cold_{}_{}", e.from, e.to),
                terms,
                sense: RowSense::Le,
                rhs: 0.0,
            });
        }
        for (ei, e) in self.edges.iter().enumerate() {
            let mut terms = self.edge_flow_terms(ei);
            terms.push((VarRef::Cool(e.to), -self.total_demand));
            terms.push((VarRef::Equip(ei), -e.capacity_warm));
            rows.push(LinearRow {
                family: ConstraintFamily::WarmCapacity,
                name: format!("warm_{}_{}", e.from, e.to),
                terms,
                sense: RowSense::Le,
                rhs: 0.0,
            });
        }
        for (ci, c) in self.commodities.iter().enumerate() {
            let mut terms: Vec<(VarRef, f64)> = self
                .edges_out_of(c.a)
                .map(|edge| {
                    (
                        VarRef::Flow {
                            commodity: ci,
                            dir: 0,
                            edge,
                        },
                        1.0,
                    )
                })
                .collect();
            terms.extend(self.edges_into(c.a).map(|edge| {
                (
                    VarRef::Flow {
                        commodity: ci,
                        dir: 1,
                        edge,
                    },
                    1.0,
                )
            }));
            rows.push(LinearRow {
                family: ConstraintFamily::SymmetricSource,
                name: format!("src_{}_{}", c.a, c.b),
                terms,
                sense: RowSense::Eq,
                rhs: c.total(),
            });
        }
        for (ci, c) in self.commodities.iter().enumerate() {
            for dir in 0..2 {
                let (i, j) = c.endpoints(dir);
                for n in (0..self.node_count()).filter(|&n| n != i && n != j) {
                    let mut terms: Vec<(VarRef, f64)> = self
                        .edges_out_of(n)
                        .map(|edge| {
                            (
                                VarRef::Flow {
                                    commodity: ci,
                                    dir,
                                    edge,
                                },
                                1.0,
                            )
                        })
                        .collect();
                    terms.extend(self.edges_into(n).map(|edge| {
                        (
                            VarRef::Flow {
                                commodity: ci,
                                dir,
                                edge,
                            },
                            -1.0,
                        )
                    }));
                    if terms.is_empty() {
                        continue;
                    }
                    rows.push(LinearRow {
                        family: ConstraintFamily::Conservation,
                        name: format!("cons_{i}_{j}_{n}"),
                        terms,
                        sense: RowSense::Eq,
                        rhs: 0.0,
                    });
                }
            }
        }
        for (ci, c) in self.commodities.iter().enumerate() {
            for dir in 0..2 {
                let (i, _) = c.endpoints(dir);
                for edge in self.edges_into(i) {
                    let e = &self.edges[edge];
                    rows.push(LinearRow {
                        family: ConstraintFamily::NoReturnToSource,
                        name: format!("noret_{}_{}_{}_{}", i, c.endpoints(dir).1, e.from, e.to),
                        terms: vec![(
                            VarRef::Flow {
                                commodity: ci,
                                dir,
                                edge,
                            },
                            1.0,
                        )],
                        sense: RowSense::Eq,
                        rhs: 0.0,
                    });
                }
            }
        }
        for (ci, c) in self.commodities.iter().enumerate() {
            for dir in 0..2 {
                let (i, j) = c.endpoints(dir);
                for edge in self.edges_out_of(j) {
                    let e = &self.edges[edge];
                    rows.push(LinearRow {
                        family: ConstraintFamily::NoExitFromDestination,
                        name: format!("noexit_{i}_{j}_{}_{}", e.from, e.to),
                        terms: vec![(
                            VarRef::Flow {
                                commodity: ci,
                                dir,
                                edge,
                            },
                            1.0,
                        )],
                        sense: RowSense::Eq,
                        rhs: 0.0,
                    });
                }
            }
        }
        rows
    }

    /// Constraint families present in the program; `Domain` is carried by the
    /// variable bounds rather than by rows.
    pub fn families(&self) -> Vec<ConstraintFamily> {
        let mut fams: Vec<ConstraintFamily> = self.rows().iter().map(|r| r.family).collect();
        fams.push(ConstraintFamily::Domain);
        fams.sort();
        fams.dedup();
        fams
    }
}
