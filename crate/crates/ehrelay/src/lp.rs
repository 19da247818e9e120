//! Small dense linear-program feasibility and minimization solver.
//!
//! Phase-1 simplex with an anti-cycling guarantee: pivoting starts from the
//! largest-coefficient (Dantzig) rule for speed and switches permanently to
//! Bland's rule as soon as the objective stalls, so termination is provable
//! while typical instances stay fast. Everything is deterministic given the
//! input ordering. Instances in this artifact are tiny (at most a few
//! thousand variables), so no sparsity machinery.

use crate::{Error, Result};

/// Feasibility tolerance on constraint residuals.
pub const FEAS_TOL: f64 = 1e-9;
/// Absolute ceiling on simplex pivots; the per-solve budget scales with the
/// instance size up to this cap, and exhausting it twice (plain run plus one
/// degeneracy-perturbed retry) is a loud solver-stall error.
pub const PIVOT_CAP: usize = 1_000_000;
/// Degenerate pivots tolerated before switching to Bland's rule.
const STALL_LIMIT: usize = 200;
/// Residual accepted from the phase-1 optimum (and, consistently, from the
/// witness check on the recovered point); rows are scaled to unit max
/// coefficient before solving, so this is commensurate across instances.
const PHASE1_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Dense LP: rows tagged with a sense, per-variable bounds, optional linear
/// objective. Finite lower bounds are required; upper bounds may be infinite.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub n_vars: usize,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Option<Vec<f64>>,
}

/// Outcome of an optimization run.
#[derive(Debug, Clone)]
pub enum Solution {
    Optimal { value: f64, point: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LpProblem {
    /// New problem with all variables in `[0, +inf)` and no objective.
    pub fn new(n_vars: usize) -> Self {
        LpProblem {
            n_vars,
            rows: Vec::new(),
            lower: vec![0.0; n_vars],
            upper: vec![f64::INFINITY; n_vars],
            objective: None,
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n_vars);
        self.rows.push(Row { coeffs, sense, rhs });
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    /// Residual-checked feasibility: `Some(witness)` satisfying every row and
    /// bound within [`FEAS_TOL`], or `None`.
    pub fn feasible(&self) -> Result<Option<Vec<f64>>> {
        match self.solve(None)? {
            Solution::Optimal { point, .. } => Ok(Some(point)),
            Solution::Infeasible => Ok(None),
            Solution::Unbounded => unreachable!("phase 1 objective is bounded below"),
        }
    }

    /// Two-phase simplex minimum of the stored objective.
    pub fn minimize(&self) -> Result<Solution> {
        let obj = self
            .objective
            .clone()
            .unwrap_or_else(|| vec![0.0; self.n_vars]);
        self.solve(Some(&obj))
    }

    /// Check a point against all rows and bounds.
    pub fn satisfied_by(&self, x: &[f64]) -> bool {
        self.satisfied_within(x, FEAS_TOL)
    }

    fn satisfied_within(&self, x: &[f64], base_tol: f64) -> bool {
        for (i, &v) in x.iter().enumerate() {
            if v < self.lower[i] - base_tol || v > self.upper[i] + base_tol {
                return false;
            }
        }
        self.rows.iter().all(|row| {
            let lhs: f64 = row.coeffs.iter().zip(x).map(|(c, v)| c * v).sum();
            let tol = base_tol * (1.0 + row.rhs.abs());
            match row.sense {
                Sense::Le => lhs <= row.rhs + tol,
                Sense::Ge => lhs >= row.rhs - tol,
                Sense::Eq => (lhs - row.rhs).abs() <= tol,
            }
        })
    }

    fn solve(&self, objective: Option<&[f64]>) -> Result<Solution> {
        let n = self.n_vars;
        debug_assert!(self.lower.iter().all(|l| l.is_finite()));

        // Shift to y = x - lower >= 0; finite upper bounds become rows.
        let mut work: Vec<(Vec<f64>, Sense, f64)> = Vec::with_capacity(self.rows.len() + n);
        for row in &self.rows {
            let shift: f64 = row.coeffs.iter().zip(&self.lower).map(|(c, l)| c * l).sum();
            work.push((row.coeffs.clone(), row.sense, row.rhs - shift));
        }
        for i in 0..n {
            if self.upper[i].is_finite() {
                let mut c = vec![0.0; n];
                c[i] = 1.0;
                work.push((c, Sense::Le, self.upper[i] - self.lower[i]));
            }
        }

        // Normalize: scale rows to unit max coefficient, drop trivial rows,
        // detect trivially infeasible ones, make rhs nonnegative.
        let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::with_capacity(work.len());
        for (mut c, mut sense, mut b) in work {
            let maxc = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if maxc < 1e-300 {
                let ok = match sense {
                    Sense::Le => b >= -FEAS_TOL,
                    Sense::Ge => b <= FEAS_TOL,
                    Sense::Eq => b.abs() <= FEAS_TOL,
                };
                if ok {
                    continue;
                }
                return Ok(Solution::Infeasible);
            }
            let scale = 1.0 / maxc;
            for v in &mut c {
                *v *= scale;
            }
            b *= scale;
            if b < 0.0 {
                for v in &mut c {
                    *v = -*v;
                }
                b = -b;
                sense = match sense {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
            }
            rows.push((c, sense, b));
        }

        // Degenerate vertices can make the float simplex cycle even under
        // Bland's rule. If the plain run exhausts its pivot budget, retry
        // once with a tiny staggered rhs perturbation that breaks the
        // degeneracy; the recovered point is still checked against the
        // unperturbed rows by verify().
        match self.run_phases(rows.clone(), objective) {
            Err(Error::SolverStall) => {
                let m = rows.len() as f64;
                for (i, row) in rows.iter_mut().enumerate() {
                    let delta = 1e-10 * (i + 1) as f64 / m;
                    row.2 = match row.1 {
                        Sense::Le | Sense::Eq => row.2 + delta,
                        Sense::Ge => (row.2 - delta).max(0.0),
                    };
                }
                self.run_phases(rows, objective)
            }
            other => other,
        }
    }

    fn run_phases(
        &self,
        rows: Vec<(Vec<f64>, Sense, f64)>,
        objective: Option<&[f64]>,
    ) -> Result<Solution> {
        let n = self.n_vars;
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.1 == Sense::Le).count();
        let n_surplus = rows.iter().filter(|r| r.1 == Sense::Ge).count();
        let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
        let ncols = n + n_slack + n_surplus + n_art;

        // Tableau: m rows of (ncols + rhs), basis per row.
        let width = ncols + 1;
        let mut a = vec![0.0f64; m * width];
        let mut basis = vec![0usize; m];
        let art_start = n + n_slack + n_surplus;
        {
            let mut slack = n;
            let mut surplus = n + n_slack;
            let mut art = art_start;
            for (r, (c, sense, b)) in rows.iter().enumerate() {
                let row = &mut a[r * width..(r + 1) * width];
                row[..n].copy_from_slice(c);
                row[ncols] = *b;
                match sense {
                    Sense::Le => {
                        row[slack] = 1.0;
                        basis[r] = slack;
                        slack += 1;
                    }
                    Sense::Ge => {
                        row[surplus] = -1.0;
                        surplus += 1;
                        row[art] = 1.0;
                        basis[r] = art;
                        art += 1;
                    }
                    Sense::Eq => {
                        row[art] = 1.0;
                        basis[r] = art;
                        art += 1;
                    }
                }
            }
        }

        let mut pivots = 0usize;
        let budget = (50 * (m + ncols)).clamp(20_000, PIVOT_CAP);
        let mut bland = false;

        // Phase 1: minimize the sum of artificials.
        let mut cost = vec![0.0f64; width];
        for j in art_start..ncols {
            cost[j] = 1.0;
        }
        for r in 0..m {
            if basis[r] >= art_start {
                for j in 0..width {
                    cost[j] -= a[r * width + j];
                }
            }
        }
        Self::iterate(
            &mut a, &mut basis, &mut cost, m, width, ncols, ncols, &mut pivots, budget, &mut bland,
        )?;
        let phase1 = -cost[ncols];
        if phase1 > PHASE1_TOL {
            return Ok(Solution::Infeasible);
        }

        // Drive leftover artificials out of the basis (or neutralize
        // redundant rows) so phase 2 cannot re-grow them.
        for r in 0..m {
            if basis[r] >= art_start {
                // Pivot on the largest available element: a near-zero pivot
                // would scale this row by a huge factor and smear the error
                // across every other rhs. If nothing solid is left, the
                // artificial carries ~0 and the row is effectively redundant.
                let mut entered = false;
                let mut best = 0usize;
                let mut best_abs = 0.0f64;
                for j in 0..art_start {
                    let v = a[r * width + j].abs();
                    if v > best_abs {
                        best_abs = v;
                        best = j;
                    }
                }
                if best_abs > 1e-7 {
                    Self::pivot(&mut a, &mut basis, &mut cost, m, width, r, best);
                    entered = true;
                }
                if !entered {
                    // Redundant row: zero it so it never constrains again.
                    for j in 0..width {
                        a[r * width + j] = 0.0;
                    }
                }
            }
        }

        let objective = match objective {
            None => {
                let point = self.extract(&a, &basis, m, width, ncols, n);
                return self.verify(point);
            }
            Some(o) => o,
        };

        // Phase 2 over the real objective, artificial columns excluded.
        let mut cost = vec![0.0f64; width];
        cost[..n].copy_from_slice(objective);
        for r in 0..m {
            if basis[r] < n && cost[basis[r]] != 0.0 {
                let coef = cost[basis[r]];
                for j in 0..width {
                    cost[j] -= coef * a[r * width + j];
                }
            }
        }
        let unbounded = !Self::iterate(
            &mut a, &mut basis, &mut cost, m, width, ncols, art_start, &mut pivots, budget,
            &mut bland,
        )?;
        if unbounded {
            return Ok(Solution::Unbounded);
        }
        let point = self.extract(&a, &basis, m, width, ncols, n);
        match self.verify(point)? {
            Solution::Optimal { point, .. } => {
                let value: f64 = objective.iter().zip(&point).map(|(c, x)| c * x).sum();
                Ok(Solution::Optimal { value, point })
            }
            other => Ok(other),
        }
    }

    /// Simplex loop; returns Ok(true) at optimality, Ok(false) if unbounded.
    #[allow(clippy::too_many_arguments)]
    fn iterate(
        a: &mut [f64],
        basis: &mut [usize],
        cost: &mut [f64],
        m: usize,
        width: usize,
        ncols: usize,
        enter_limit: usize,
        pivots: &mut usize,
        budget: usize,
        bland: &mut bool,
    ) -> Result<bool> {
        let mut stall = 0usize;
        let mut last_obj = -cost[ncols];
        loop {
            // Entering column.
            let mut enter = None;
            if *bland {
                for j in 0..enter_limit {
                    if cost[j] < -1e-9 {
                        enter = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -1e-9;
                for j in 0..enter_limit {
                    if cost[j] < best {
                        best = cost[j];
                        enter = Some(j);
                    }
                }
            }
            let Some(j) = enter else {
                return Ok(true);
            };

            // Ratio test; exact ties go to the smallest basic index. The
            // comparison must be exact (no epsilon band), otherwise distinct
            // ratios can be treated as ties and Bland's anti-cycling
            // guarantee is lost.
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..m {
                let arj = a[r * width + j];
                if arj > 1e-9 {
                    let ratio = (a[r * width + ncols] / arj).max(0.0);
                    let better = match leave {
                        None => true,
                        Some(lr) => {
                            ratio < best_ratio || (ratio == best_ratio && basis[r] < basis[lr])
                        }
                    };
                    if better {
                        best_ratio = ratio;
                        leave = Some(r);
                    }
                }
            }
            let Some(r) = leave else {
                return Ok(false);
            };

            Self::pivot(a, basis, cost, m, width, r, j);
            *pivots += 1;
            if *pivots > budget {
                return Err(Error::SolverStall);
            }
            let obj = -cost[ncols];
            if (obj - last_obj).abs() <= 1e-12 * (1.0 + obj.abs()) {
                stall += 1;
                if stall >= STALL_LIMIT {
                    *bland = true;
                }
            } else {
                stall = 0;
                last_obj = obj;
            }
        }
    }

    fn pivot(
        a: &mut [f64],
        basis: &mut [usize],
        cost: &mut [f64],
        m: usize,
        width: usize,
        r: usize,
        j: usize,
    ) {
        let piv = a[r * width + j];
        let inv = 1.0 / piv;
        for v in &mut a[r * width..(r + 1) * width] {
            *v *= inv;
        }
        // Split borrows: copy the pivot row once, then eliminate.
        let prow: Vec<f64> = a[r * width..(r + 1) * width].to_vec();
        for rr in 0..m {
            if rr != r {
                let f = a[rr * width + j];
                if f != 0.0 {
                    for (v, p) in a[rr * width..(rr + 1) * width].iter_mut().zip(&prow) {
                        *v -= f * p;
                    }
                }
            }
        }
        let f = cost[j];
        if f != 0.0 {
            for (v, p) in cost.iter_mut().zip(&prow) {
                *v -= f * p;
            }
        }
        basis[r] = j;
    }

    fn extract(
        &self,
        a: &[f64],
        basis: &[usize],
        m: usize,
        width: usize,
        ncols: usize,
        n: usize,
    ) -> Vec<f64> {
        let mut x = self.lower.clone();
        for r in 0..m {
            if basis[r] < n {
                x[basis[r]] += a[r * width + ncols];
            }
        }
        x
    }

    fn verify(&self, point: Vec<f64>) -> Result<Solution> {
        // Match the phase-1 acceptance threshold: a knife-edge instance may
        // sit within PHASE1_TOL of its rows, and rejecting it here would turn
        // a boundary verdict into a hard error.
        if self.satisfied_within(&point, PHASE1_TOL) {
            Ok(Solution::Optimal { value: 0.0, point })
        } else {
            // A phase-1 "feasible" point violating the rows means the solver
            // lost precision; fail loudly rather than return a bad verdict.
            Err(Error::SolverStall)
        }
    }

    /// Plain-text dump, for fixtures and debugging.
    pub fn to_text(&self) -> String {
        let fmt = |v: f64| {
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{v:?}")
            }
        };
        let mut out = format!("lp {}\nbounds\n", self.n_vars);
        for i in 0..self.n_vars {
            out.push_str(&format!("{} {}\n", fmt(self.lower[i]), fmt(self.upper[i])));
        }
        out.push_str(&format!("rows {}\n", self.rows.len()));
        for row in &self.rows {
            let tag = match row.sense {
                Sense::Le => "le",
                Sense::Ge => "ge",
                Sense::Eq => "eq",
            };
            out.push_str(&format!("{tag} {:?}", row.rhs));
            for c in &row.coeffs {
                out.push_str(&format!(" {c:?}"));
            }
            out.push('\n');
        }
        if let Some(obj) = &self.objective {
            out.push_str("objective");
            for c in obj {
                out.push_str(&format!(" {c:?}"));
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("lp text: {msg}"));
        let parse = |tok: &str| -> Result<f64> {
            match tok {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => tok.parse().map_err(|_| bad("bad number")),
            }
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| bad("empty"))?;
        let n_vars: usize = head
            .strip_prefix("lp ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("missing header"))?;
        if lines.next() != Some("bounds") {
            return Err(bad("missing bounds"));
        }
        let mut p = LpProblem::new(n_vars);
        for i in 0..n_vars {
            let line = lines.next().ok_or_else(|| bad("short bounds"))?;
            let mut t = line.split_whitespace();
            p.lower[i] = parse(t.next().ok_or_else(|| bad("short bound line"))?)?;
            p.upper[i] = parse(t.next().ok_or_else(|| bad("short bound line"))?)?;
        }
        let rows_head = lines.next().ok_or_else(|| bad("missing rows"))?;
        let n_rows: usize = rows_head
            .strip_prefix("rows ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad rows header"))?;
        for _ in 0..n_rows {
            let line = lines.next().ok_or_else(|| bad("short rows"))?;
            let mut t = line.split_whitespace();
            let sense = match t.next() {
                Some("le") => Sense::Le,
                Some("ge") => Sense::Ge,
                Some("eq") => Sense::Eq,
                _ => return Err(bad("bad sense")),
            };
            let rhs = parse(t.next().ok_or_else(|| bad("missing rhs"))?)?;
            let coeffs: Vec<f64> = t.map(parse).collect::<Result<_>>()?;
            if coeffs.len() != n_vars {
                return Err(bad("coefficient count mismatch"));
            }
            p.rows.push(Row { coeffs, sense, rhs });
        }
        for line in lines {
            if let Some(rest) = line.strip_prefix("objective") {
                let obj: Vec<f64> = rest
                    .split_whitespace()
                    .map(parse)
                    .collect::<Result<_>>()?;
                if obj.len() != n_vars {
                    return Err(bad("objective length mismatch"));
                }
                p.objective = Some(obj);
            } else if line == "end" {
                break;
            } else {
                return Err(bad("unexpected line"));
            }
        }
        Ok(p)
    }
}
