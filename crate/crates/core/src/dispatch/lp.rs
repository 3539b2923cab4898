//! Thin wrapper over the HiGHS row-wise problem builder.

use highs::{Col, HighsModelStatus, Model, RowProblem, Sense, SolvedModel};

use crate::{Error, Result};

pub(crate) use highs::Col as Var;

/// Incrementally built linear program. Minimises by default.
#[derive(Default)]
pub(crate) struct Lp {
    problem: RowProblem,
    integer: bool,
}

impl Lp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Variable in `[lo, hi]`; `hi = f64::INFINITY` for unbounded above.
    pub fn var(&mut self, cost: f64, lo: f64, hi: f64) -> Var {
        debug_assert!(lo <= hi, "bounds {lo} > {hi}");
        self.problem.add_column(cost, lo..=hi)
    }

    /// Binary variable; turns the problem into a MILP.
    pub fn binary(&mut self, cost: f64) -> Var {
        self.integer = true;
        self.problem.add_integer_column(cost, 0.0..=1.0)
    }

    pub fn eq(&mut self, rhs: f64, terms: &[(Var, f64)]) {
        self.problem.add_row(rhs..=rhs, terms);
    }

    pub fn le(&mut self, rhs: f64, terms: &[(Var, f64)]) {
        self.problem.add_row(..=rhs, terms);
    }

    #[cfg(test)]
    pub fn ge(&mut self, rhs: f64, terms: &[(Var, f64)]) {
        self.problem.add_row(rhs.., terms);
    }

    pub fn into_model(self, sense: Sense) -> LpModel {
        let integer = self.integer;
        let mut model = self.problem.optimise(sense);
        configure(&mut model, integer);
        LpModel { model, integer }
    }

    pub fn minimise(self) -> Result<LpSolution> {
        self.into_model(Sense::Minimise).solve().map(|(s, _)| s)
    }
}

fn configure(model: &mut Model, integer: bool) {
    model.make_quiet();
    if integer {
        model.set_option("mip_rel_gap", 1e-7);
        model.set_option("mip_feasibility_tolerance", 1e-9);
        // Few binaries per window: heuristics and symmetry detection cost
        // more than the branch and bound itself.
        model.set_option("mip_heuristic_effort", 0.0);
        model.set_option("mip_heuristic_run_feasibility_jump", false);
        model.set_option("mip_heuristic_run_rins", false);
        model.set_option("mip_heuristic_run_rens", false);
        model.set_option("mip_heuristic_run_root_reduced_cost", false);
        model.set_option("mip_detect_symmetry", false);
    } else {
        model.set_option("solver", "simplex");
        // Primal simplex was the fastest strategy on window-sized problems.
        model.set_option("simplex_strategy", 4i32);
    }
}

/// A model that can be re-solved after edits (used by the lexicographic
/// operator passes).
pub(crate) struct LpModel {
    model: Model,
    integer: bool,
}

impl LpModel {
    pub fn set_cost(&mut self, var: Var, cost: f64) {
        self.model.change_column_cost(var, cost);
    }

    pub fn set_bounds(&mut self, var: Var, lo: f64, hi: f64) {
        self.model.change_column_bounds(var, lo..=hi);
    }

    pub fn add_ge(&mut self, rhs: f64, terms: &[(Var, f64)]) {
        self.model.add_row(rhs.., terms.iter().copied());
    }

    pub fn set_sense(&mut self, sense: Sense) {
        self.model.set_sense(sense);
    }

    /// Solves and hands the model back for a follow-up pass.
    pub fn solve(self) -> Result<(LpSolution, LpModel)> {
        let integer = self.integer;
        let solved: SolvedModel = self.model.try_solve().map_err(|e| Error::Solver {
            window: 0,
            message: format!("HiGHS rejected the model: {e:?}"),
        })?;
        let status = solved.status();
        let solution = match status {
            HighsModelStatus::Optimal => LpSolution {
                values: solved.get_solution().columns().to_vec(),
                objective: solved.objective_value(),
            },
            HighsModelStatus::ModelEmpty => LpSolution {
                values: Vec::new(),
                objective: 0.0,
            },
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                return Err(Error::Infeasible {
                    window: 0,
                    message: format!("LP status {status:?}"),
                })
            }
            other => {
                return Err(Error::Solver {
                    window: 0,
                    message: format!("LP status {other:?}"),
                })
            }
        };
        let mut model: Model = solved.into();
        configure(&mut model, integer);
        Ok((solution, LpModel { model, integer }))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    values: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub objective: f64,
}

impl LpSolution {
    pub fn get(&self, var: Col) -> f64 {
        self.values[var.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_lp() {
        // min x + 2y  s.t. x + y >= 1, x <= 0.4
        let mut lp = Lp::new();
        let x = lp.var(1.0, 0.0, 0.4);
        let y = lp.var(2.0, 0.0, f64::INFINITY);
        lp.ge(1.0, &[(x, 1.0), (y, 1.0)]);
        let s = lp.minimise().unwrap();
        assert!((s.get(x) - 0.4).abs() < 1e-9);
        assert!((s.objective - 1.6).abs() < 1e-9);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut lp = Lp::new();
        let x = lp.var(1.0, 0.0, 1.0);
        lp.ge(2.0, &[(x, 1.0)]);
        assert!(matches!(lp.minimise(), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn second_pass_reuses_model() {
        let mut lp = Lp::new();
        let x = lp.var(-1.0, 0.0, 1.0);
        let y = lp.var(0.0, 0.0, 1.0);
        lp.le(1.5, &[(x, 1.0), (y, 1.0)]);
        let (s1, mut m) = lp.into_model(Sense::Minimise).solve().unwrap();
        assert!((s1.get(x) - 1.0).abs() < 1e-9);
        m.add_ge(s1.get(x) - 1e-9, &[(x, 1.0)]);
        m.set_cost(x, 0.0);
        m.set_cost(y, -1.0);
        let (s2, _) = m.solve().unwrap();
        assert!((s2.get(x) - 1.0).abs() < 1e-6);
        assert!((s2.get(y) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn milp_fallback() {
        let mut lp = Lp::new();
        let z = lp.binary(0.0);
        let x = lp.var(-1.0, 0.0, 1.0);
        lp.le(0.0, &[(x, 1.0), (z, -0.5)]);
        let s = lp.minimise().unwrap();
        assert!((s.get(x) - 0.5).abs() < 1e-9);
    }
}
