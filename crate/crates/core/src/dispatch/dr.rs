//! Demand-response load shifting.
//!
//! Shifting is modelled as two first-in-first-out queues per household: a
//! delay backlog `B` (load removed now, consumed later) and an advance credit
//! `A` (load consumed early, removed later). Window reach is enforced by
//! bounding each queue with the volume that entered it during the last `W`
//! steps, which is exactly the set of transport plans `s[t, t']` with
//! `|t − t'| ≤ W` once the queue is served oldest first.

use serde::{Deserialize, Serialize};

use super::lp::{Lp, LpSolution, Var};

/// Allowed shift direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrDirection {
    #[default]
    Symmetric,
    DelayOnly,
}

/// One transported amount: load removed at `from`, consumed at `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub from: usize,
    pub to: usize,
    pub amount: f64,
}

/// Sparse representation of `s[t, t']`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DrShiftPlan {
    pub shifts: Vec<Shift>,
}

impl DrShiftPlan {
    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    /// Per-step removed load `Σ_{t'} s[t, t']`.
    pub fn outflow(&self, steps: usize) -> Vec<f64> {
        let mut v = vec![0.0; steps];
        for s in &self.shifts {
            v[s.from] += s.amount;
        }
        v
    }

    /// Per-step added load `Σ_t s[t, t']`.
    pub fn inflow(&self, steps: usize) -> Vec<f64> {
        let mut v = vec![0.0; steps];
        for s in &self.shifts {
            v[s.to] += s.amount;
        }
        v
    }

    /// Largest `|t − t'|` among shifts above `min_amount`.
    pub fn max_distance(&self, min_amount: f64) -> usize {
        self.shifts
            .iter()
            .filter(|s| s.amount > min_amount)
            .map(|s| s.from.abs_diff(s.to))
            .max()
            .unwrap_or(0)
    }

    /// Offsets every step index, used when concatenating windows.
    pub fn offset(mut self, by: usize) -> Self {
        for s in &mut self.shifts {
            s.from += by;
            s.to += by;
        }
        self
    }
}

/// LP columns of the two queues for one household window.
pub(crate) struct DrVars {
    pub delay_out: Vec<Var>,
    pub delay_in: Vec<Var>,
    pub advance_in: Vec<Var>,
    pub advance_out: Vec<Var>,
}

impl DrVars {
    /// Adds queue variables and rows; `shiftable[t]` caps what may leave step
    /// `t`. Shifted volume carries a tie-breaking cost `eps` per kWh.
    pub fn build(lp: &mut Lp, shiftable: &[f64], window: usize, direction: DrDirection, eps: f64) -> Self {
        let n = shiftable.len();
        let symmetric = direction == DrDirection::Symmetric;
        let mut v = DrVars {
            delay_out: Vec::with_capacity(n),
            delay_in: Vec::with_capacity(n),
            advance_in: Vec::new(),
            advance_out: Vec::new(),
        };
        for &cap in shiftable.iter() {
            v.delay_out.push(lp.var(eps, 0.0, cap));
            v.delay_in.push(lp.var(0.0, 0.0, f64::INFINITY));
            if symmetric {
                v.advance_in.push(lp.var(eps, 0.0, f64::INFINITY));
                v.advance_out.push(lp.var(0.0, 0.0, cap));
            }
        }
        if symmetric {
            for (t, &cap) in shiftable.iter().enumerate() {
                lp.le(cap, &[(v.delay_out[t], 1.0), (v.advance_out[t], 1.0)]);
            }
        }
        queue(lp, &v.delay_out, &v.delay_in, window);
        if symmetric {
            queue(lp, &v.advance_in, &v.advance_out, window);
        }
        v
    }

    /// Net load change terms `+out − in` for the load balance row at `t`
    /// (the row reads `supply + out − in = demand`).
    pub fn balance_terms(&self, t: usize) -> Vec<(Var, f64)> {
        let mut terms = vec![(self.delay_out[t], 1.0), (self.delay_in[t], -1.0)];
        if !self.advance_in.is_empty() {
            terms.push((self.advance_out[t], 1.0));
            terms.push((self.advance_in[t], -1.0));
        }
        terms
    }

    /// `(dr_out, dr_in)` per step and the FIFO-reconstructed plan.
    pub fn extract(&self, sol: &LpSolution) -> (Vec<f64>, Vec<f64>, DrShiftPlan) {
        let clean = |v: f64| if v.abs() < 1e-10 { 0.0 } else { v.max(0.0) };
        let get = |vars: &[Var]| -> Vec<f64> { vars.iter().map(|&x| clean(sol.get(x))).collect() };
        let d_out = get(&self.delay_out);
        let d_in = get(&self.delay_in);
        let n = d_out.len();
        let (a_in, a_out) = if self.advance_in.is_empty() {
            (vec![0.0; n], vec![0.0; n])
        } else {
            (get(&self.advance_in), get(&self.advance_out))
        };
        let mut plan = fifo_plan(&d_out, &d_in, false);
        plan.shifts.extend(fifo_plan(&a_in, &a_out, true).shifts);
        let out = d_out.iter().zip(&a_out).map(|(a, b)| a + b).collect();
        let inn = d_in.iter().zip(&a_in).map(|(a, b)| a + b).collect();
        (out, inn, plan)
    }
}

fn queue(lp: &mut Lp, enter: &[Var], leave: &[Var], window: usize) {
    let n = enter.len();
    let mut prev: Option<Var> = None;
    for t in 0..n {
        // Queue level after step t; must be empty at the end of the window.
        let hi = if t + 1 == n { 0.0 } else { f64::INFINITY };
        let level = lp.var(0.0, 0.0, hi);
        let mut row = vec![(level, 1.0), (enter[t], -1.0), (leave[t], 1.0)];
        if let Some(p) = prev {
            row.push((p, -1.0));
        }
        lp.eq(0.0, &row);
        let first = (t + 1).saturating_sub(window);
        let mut reach = vec![(level, 1.0)];
        reach.extend(enter[first..=t].iter().map(|&e| (e, -1.0)));
        lp.le(0.0, &reach);
        prev = Some(level);
    }
}

/// Matches queue entries to exits oldest first. For the advance queue the
/// entering step is where load is consumed (`to`), the exit where it is
/// removed (`from`).
fn fifo_plan(enter: &[f64], leave: &[f64], advance: bool) -> DrShiftPlan {
    let mut pending: std::collections::VecDeque<(usize, f64)> = Default::default();
    let mut shifts = Vec::new();
    for t in 0..enter.len() {
        if enter[t] > 0.0 {
            pending.push_back((t, enter[t]));
        }
        let mut need = leave[t];
        while need > 1e-12 {
            let Some(front) = pending.front_mut() else { break };
            let take = front.1.min(need);
            let (from, to) = if advance { (t, front.0) } else { (front.0, t) };
            if from != to && take > 1e-12 {
                shifts.push(Shift { from, to, amount: take });
            }
            front.1 -= take;
            need -= take;
            if front.1 <= 1e-12 {
                pending.pop_front();
            }
        }
    }
    DrShiftPlan { shifts }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_reconstruction_delay() {
        let enter = [1.0, 0.5, 0.0, 0.0];
        let leave = [0.0, 0.0, 0.8, 0.7];
        let p = fifo_plan(&enter, &leave, false);
        assert_eq!(p.shifts.len(), 3);
        assert_eq!(p.outflow(4), vec![1.0, 0.5, 0.0, 0.0]);
        let inflow = p.inflow(4);
        assert!((inflow[2] - 0.8).abs() < 1e-12 && (inflow[3] - 0.7).abs() < 1e-12);
        assert_eq!(p.max_distance(0.0), 3);
    }

    #[test]
    fn fifo_reconstruction_advance() {
        // consumed early at 0, removed at 2
        let p = fifo_plan(&[0.4, 0.0, 0.0], &[0.0, 0.0, 0.4], true);
        assert_eq!(p.shifts, vec![Shift { from: 2, to: 0, amount: 0.4 }]);
    }

    #[test]
    fn window_reach_is_binding() {
        // Shiftable load at step 0, only a cheap slot at step 5; window 3.
        let n = 6;
        let mut shift = vec![0.0; n];
        shift[0] = 1.0;
        let mut lp = Lp::new();
        let dr = DrVars::build(&mut lp, &shift, 3, DrDirection::DelayOnly, 0.0);
        let price = [1.0, 1.0, 1.0, 0.9, 1.0, 0.1];
        let mut load_vars = Vec::new();
        for t in 0..n {
            let g = lp.var(price[t], 0.0, f64::INFINITY);
            let mut row = vec![(g, 1.0)];
            row.extend(dr.balance_terms(t));
            lp.eq(shift[t], &row);
            load_vars.push(g);
        }
        let s = lp.minimise().unwrap();
        let (out, inn, plan) = dr.extract(&s);
        assert!((out[0] - 1.0).abs() < 1e-9);
        assert!((inn[3] - 1.0).abs() < 1e-9, "{inn:?}");
        assert!(plan.max_distance(1e-9) <= 3);
    }
}
