//! Depth-first LP-based branch and bound on top of `microlp`.
//!
//! The relaxation is handed over as a pure LP; integrality of the listed
//! variables is enforced here by fixing binaries or adding bound rows for
//! general integers. Branching picks the fractional variable with the largest
//! fractional part (lowest index on ties) and explores the round-down child
//! first, so the search is fully deterministic.

use microlp::{ComparisonOp, Error as LpError, Problem, Solution, Variable};

use super::MilpError;

/// An integer-constrained variable of the relaxation.
#[derive(Debug, Clone, Copy)]
pub struct IntegerVar {
    pub var: Variable,
    /// Binary variables are branched by fixing; others by bound rows.
    pub binary: bool,
    /// Fractional variables of a higher class are branched on first.
    pub priority: u8,
}

/// A linear cut `sum coeff * var (op) rhs`.
pub type Cut = (Vec<(Variable, f64)>, ComparisonOp, f64);

type Lattice<'a> = Box<dyn Fn(f64) -> f64 + 'a>;
type Rounder<'a> = Box<dyn FnMut(&[f64], Option<f64>) -> Result<Option<(f64, Vec<f64>)>, MilpError> + 'a>;
type Separator<'a> = Box<dyn FnMut(&[f64], bool, &[Option<bool>]) -> Result<Separation, MilpError> + 'a>;

/// Cuts found by a separator. Global cuts are shared with every open node;
/// local cuts only hold under the node's fixings and stay in its subtree.
#[derive(Debug, Default)]
pub struct Separation {
    pub global: Vec<Cut>,
    pub local: Vec<Cut>,
}

impl Separation {
    pub fn is_empty(&self) -> bool {
        self.global.is_empty() && self.local.is_empty()
    }
}

pub struct BranchAndBound<'a> {
    problem: &'a Problem,
    integers: Vec<IntegerVar>,
    node_limit: usize,
    int_tol: f64,
    obj_tol: f64,
    lattice: Lattice<'a>,
    rounder: Option<Rounder<'a>>,
    separator: Option<Separator<'a>>,
    root_rounds: usize,
    node_rounds: usize,
    cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BnbOutcome {
    Optimal {
        objective: f64,
        values: Vec<f64>,
        nodes: usize,
        cuts: usize,
    },
    Infeasible {
        nodes: usize,
    },
}

struct Pending {
    parent: Solution,
    parent_bound: f64,
    branch: Option<(usize, bool)>,
    /// Pool cuts already present in `parent`.
    pool_len: usize,
    depth: usize,
    /// Value each binary integer is fixed to on the path to this node.
    fixed: Vec<Option<bool>>,
    /// Branching rows and local cuts on the path to this node.
    rows: Vec<Cut>,
}

fn lp_error(e: LpError) -> MilpError {
    MilpError::Lp(e.to_string())
}

fn values_of(sol: &Solution) -> Vec<f64> {
    sol.iter().map(|(_, v)| v).collect()
}

fn resolved(outcome: Result<microlp::SolveOutcome, LpError>) -> Result<Option<Solution>, MilpError> {
    match outcome {
        Ok(o) => o
            .into_solution()
            .map(Some)
            .map_err(|_| MilpError::Lp("LP solve interrupted".into())),
        Err(LpError::Infeasible) => Ok(None),
        Err(e) => Err(lp_error(e)),
    }
}

fn add_cut(sol: Solution, cut: &Cut) -> Result<Option<Solution>, MilpError> {
    resolved(sol.add_constraint(cut.0.clone(), cut.1, cut.2))
}

type Incumbent = Option<(f64, Vec<f64>)>;

impl<'a> BranchAndBound<'a> {
    pub fn new(problem: &'a Problem, integers: Vec<IntegerVar>) -> Self {
        Self {
            problem,
            integers,
            node_limit: 200_000,
            int_tol: 1e-6,
            obj_tol: 1e-6,
            lattice: Box::new(|b| b),
            rounder: None,
            separator: None,
            root_rounds: 0,
            node_rounds: 0,
            cutoff: None,
        }
    }

    pub fn node_limit(mut self, limit: usize) -> Self {
        self.node_limit = limit;
        self
    }

    /// Only look for solutions with objective at most `value`; the search
    /// reports infeasibility when there is none.
    pub fn cutoff(mut self, value: f64) -> Self {
        self.cutoff = Some(value);
        self
    }

    pub fn tolerances(mut self, int_tol: f64, obj_tol: f64) -> Self {
        self.int_tol = int_tol;
        self.obj_tol = obj_tol;
        self
    }

    /// Maps an LP bound to the smallest objective value an integer solution
    /// could actually attain at or above it.
    pub fn objective_lattice(mut self, f: impl Fn(f64) -> f64 + 'a) -> Self {
        self.lattice = Box::new(f);
        self
    }

    /// Primal heuristic run on fractional nodes. It receives the node values
    /// and the incumbent objective and may return an integral feasible point
    /// with its objective.
    pub fn rounding(
        mut self,
        f: impl FnMut(&[f64], Option<f64>) -> Result<Option<(f64, Vec<f64>)>, MilpError> + 'a,
    ) -> Self {
        self.rounder = Some(Box::new(f));
        self
    }

    /// Cut callback. It is called with the node values and whether they are
    /// integral; at integral points it acts as a lazy constraint check and
    /// must return a violated cut whenever the point is infeasible. At
    /// fractional points it is called for up to `root_rounds` rounds at the
    /// root and `node_rounds` rounds elsewhere. The third argument holds the
    /// branching fixings of the node per integer variable.
    pub fn separator(
        mut self,
        root_rounds: usize,
        node_rounds: usize,
        f: impl FnMut(&[f64], bool, &[Option<bool>]) -> Result<Separation, MilpError> + 'a,
    ) -> Self {
        self.separator = Some(Box::new(f));
        self.root_rounds = root_rounds;
        self.node_rounds = node_rounds;
        self
    }

    fn fractional_choice(&self, values: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, (u8, f64))> = None;
        for (k, iv) in self.integers.iter().enumerate() {
            let v = values[iv.var.idx()];
            if (v - v.round()).abs() <= self.int_tol {
                continue;
            }
            let frac = (iv.priority, v - v.floor());
            if best.is_none_or(|(_, f)| frac > f) {
                best = Some((k, frac));
            }
        }
        best.map(|(k, _)| k)
    }

    fn branch_row(&self, k: usize, up: bool, value: f64) -> Cut {
        let iv = self.integers[k];
        if iv.binary {
            (vec![(iv.var, 1.0)], ComparisonOp::Eq, if up { 1.0 } else { 0.0 })
        } else if up {
            (vec![(iv.var, 1.0)], ComparisonOp::Ge, value.ceil())
        } else {
            (vec![(iv.var, 1.0)], ComparisonOp::Le, value.floor())
        }
    }

    fn apply_branch(&self, parent: Solution, k: usize, row: &Cut) -> Result<Option<Solution>, MilpError> {
        let iv = self.integers[k];
        if iv.binary {
            resolved(parent.fix_var(iv.var, row.2))
        } else {
            add_cut(parent, row)
        }
    }

    /// Re-solves a node from the original problem. Used when the warm-started
    /// simplex loses numerical stability.
    fn fresh(&self, rows: &[Cut], pool: &[Cut]) -> Result<Option<Solution>, MilpError> {
        let mut problem = self.problem.clone();
        for (terms, op, rhs) in rows.iter().chain(pool) {
            problem.add_constraint(terms.as_slice(), *op, *rhs);
        }
        resolved(problem.solve())
    }

    fn recover(
        &self,
        attempt: Result<Option<Solution>, MilpError>,
        rows: &[Cut],
        pool: &[Cut],
    ) -> Result<Option<Solution>, MilpError> {
        match attempt {
            Err(MilpError::Lp(_)) => self.fresh(rows, pool),
            other => other,
        }
    }

    pub fn run(mut self) -> Result<BnbOutcome, MilpError> {
        let root = match resolved(self.problem.solve())? {
            Some(s) => s,
            None => return Ok(BnbOutcome::Infeasible { nodes: 1 }),
        };
        let mut nodes = 1usize;
        let mut pool: Vec<Cut> = Vec::new();
        let mut incumbent: Incumbent = None;
        let mut stack = vec![Pending {
            parent: root,
            parent_bound: f64::NEG_INFINITY,
            branch: None,
            pool_len: 0,
            depth: 0,
            fixed: vec![None; self.integers.len()],
            rows: Vec::new(),
        }];
        while let Some(mut p) = stack.pop() {
            if !self.can_improve(p.parent_bound, &incumbent) {
                continue;
            }
            let sol = match p.branch {
                None => Some(p.parent),
                Some((k, up)) => {
                    nodes += 1;
                    if nodes > self.node_limit {
                        return Err(MilpError::BudgetExceeded { limit: self.node_limit });
                    }
                    let value = p.parent.var_value_raw(self.integers[k].var);
                    let row = self.branch_row(k, up, value);
                    let attempt = self.apply_branch(p.parent, k, &row);
                    p.rows.push(row);
                    self.recover(attempt, &p.rows, &pool[..p.pool_len])?
                }
            };
            let mut current = sol;
            for cut in &pool[p.pool_len..] {
                let Some(live) = current.take() else { break };
                current = self.recover(add_cut(live, cut), &p.rows, &pool)?;
            }
            let Some(mut sol) = current else { continue };
            let round_limit = if p.depth == 0 {
                self.root_rounds
            } else {
                self.node_rounds
            };
            let mut rounds = 0;
            let branch_on = loop {
                let bound = sol.objective();
                if !self.can_improve(bound, &incumbent) {
                    break None;
                }
                let values = values_of(&sol);
                let choice = self.fractional_choice(&values);
                let integral = choice.is_none();
                let found = match &mut self.separator {
                    Some(sep) if integral || rounds < round_limit => sep(&values, integral, &p.fixed)?,
                    _ => Separation::default(),
                };
                if found.is_empty() {
                    match choice {
                        None => {
                            incumbent = Some((bound, values));
                            break None;
                        }
                        Some(k) => {
                            if let Some(round) = &mut self.rounder {
                                let best = incumbent.as_ref().map(|(b, _)| *b);
                                if let Some((obj, vals)) = round(&values, best)? {
                                    let accept = match best {
                                        Some(b) => obj < b - self.obj_tol,
                                        None => self.cutoff.is_none_or(|c| obj <= c + self.obj_tol),
                                    };
                                    if accept {
                                        incumbent = Some((obj, vals));
                                    }
                                }
                            }
                            break self.can_improve(bound, &incumbent).then_some((k, bound, sol));
                        }
                    }
                }
                rounds += 1;
                let mut current = Some(sol);
                for cut in found.local {
                    if let Some(live) = current.take() {
                        let attempt = add_cut(live, &cut);
                        p.rows.push(cut);
                        current = self.recover(attempt, &p.rows, &pool)?;
                    }
                }
                for cut in found.global {
                    pool.push(cut);
                    if let Some(live) = current.take() {
                        let attempt = add_cut(live, pool.last().expect("just pushed"));
                        current = self.recover(attempt, &p.rows, &pool)?;
                    }
                }
                match current {
                    Some(s) => sol = s,
                    None => break None,
                }
            };
            let Some((k, bound, sol)) = branch_on else { continue };
            let binary = self.integers[k].binary;
            for up in [true, false] {
                let mut fixed = p.fixed.clone();
                if binary {
                    fixed[k] = Some(up);
                }
                stack.push(Pending {
                    parent: sol.clone(),
                    parent_bound: bound,
                    branch: Some((k, up)),
                    pool_len: pool.len(),
                    depth: p.depth + 1,
                    fixed,
                    rows: p.rows.clone(),
                });
            }
        }
        Ok(match incumbent {
            Some((objective, values)) => BnbOutcome::Optimal {
                objective,
                values,
                nodes,
                cuts: pool.len(),
            },
            None => BnbOutcome::Infeasible { nodes },
        })
    }

    fn can_improve(&self, bound: f64, incumbent: &Incumbent) -> bool {
        let lower = (self.lattice)(bound - self.obj_tol);
        match incumbent {
            None => self.cutoff.is_none_or(|c| lower <= c + self.obj_tol),
            Some((best, _)) => lower < best - self.obj_tol,
        }
    }
}
