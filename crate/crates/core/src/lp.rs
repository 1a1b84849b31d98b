//! Linear programs in the form
//!
//! ```text
//! minimize  cᵀx   subject to   A x = b,   G x ≤ h,   x_j ≥ 0, 0 ≤ x_j ≤ u_j or free
//! ```
//!
//! and a bundled dense revised-simplex solver.
//!
//! The solver keeps an explicit basis inverse (column-major) and updates it
//! with one elimination step per pivot; the constraint matrix itself is held
//! as sparse columns. Phase one minimizes the sum of artificial variables,
//! phase two the real objective with artificials barred from re-entering.
//! Boxed variables stay out of the row count: a nonbasic one sits at either
//! bound, and the ratio test includes the entering variable's own bound flip.
//! Pricing is Dantzig's most-negative reduced cost with a Harris two-pass
//! ratio test; after [`DEGENERATE_LIMIT`] consecutive degenerate pivots the
//! solver switches to Bland's smallest-index rule until it makes progress
//! again, which rules out cycling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_LIMIT: usize = 50;
const REFRESH_EVERY: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VarBound {
    NonNegative,
    Free,
    /// `0 ≤ x ≤ upper`
    Boxed(f64),
}

/// Sparse matrix in coordinate form. Duplicate entries are summed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CooMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        CooMatrix {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.entries.push((row, col, val));
        }
    }

    pub fn from_dense(rows: &[Vec<f64>], ncols: usize) -> Self {
        let mut m = CooMatrix::new(rows.len(), ncols);
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                m.push(i, j, *v);
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for &(i, j, v) in &self.entries {
            out[i] += v * x[j];
        }
        out
    }

    pub fn t_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for &(i, j, v) in &self.entries {
            out[j] += v * y[i];
        }
        out
    }
}

/// Named contiguous ranges of the decision vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariableMap {
    blocks: Vec<(String, std::ops::Range<usize>)>,
}

impl VariableMap {
    pub fn push(&mut self, label: &str, len: usize) -> std::ops::Range<usize> {
        let start = self.blocks.last().map_or(0, |b| b.1.end);
        let range = start..start + len;
        self.blocks.push((label.to_string(), range.clone()));
        range
    }

    pub fn range(&self, label: &str) -> Option<std::ops::Range<usize>> {
        self.blocks
            .iter()
            .find(|b| b.0 == label)
            .map(|b| b.1.clone())
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.1.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.0.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardFormLp {
    pub objective: Vec<f64>,
    pub eq_matrix: CooMatrix,
    pub eq_rhs: Vec<f64>,
    pub ineq_matrix: CooMatrix,
    pub ineq_rhs: Vec<f64>,
    pub bounds: Vec<VarBound>,
    pub variable_map: VariableMap,
}

impl StandardFormLp {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let bad = |what: &str| Err(Error::Solver(format!("malformed LP: {what}")));
        if self.bounds.len() != n {
            return bad("bounds length");
        }
        if self.eq_matrix.ncols != n || self.ineq_matrix.ncols != n {
            return bad("constraint column count");
        }
        if self.eq_matrix.nrows != self.eq_rhs.len() {
            return bad("equality row count");
        }
        if self.ineq_matrix.nrows != self.ineq_rhs.len() {
            return bad("inequality row count");
        }
        if !self.variable_map.is_empty() && self.variable_map.len() != n {
            return bad("variable map does not cover x");
        }
        for m in [&self.eq_matrix, &self.ineq_matrix] {
            if m.entries
                .iter()
                .any(|&(i, j, v)| i >= m.nrows || j >= m.ncols || !v.is_finite())
            {
                return bad("matrix entry out of range or non-finite");
            }
        }
        if self
            .bounds
            .iter()
            .any(|b| matches!(b, VarBound::Boxed(u) if !(u.is_finite() && *u >= 0.0)))
        {
            return bad("box bound must be finite and nonnegative");
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) || !finite(&self.eq_rhs) || !finite(&self.ineq_rhs) {
            return bad("non-finite coefficient");
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Max-norm violation of all constraints and bounds at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (ax, b) in self.eq_matrix.mul_vec(x).iter().zip(&self.eq_rhs) {
            worst = worst.max((ax - b).abs());
        }
        for (gx, h) in self.ineq_matrix.mul_vec(x).iter().zip(&self.ineq_rhs) {
            worst = worst.max(gx - h);
        }
        for (xj, bound) in x.iter().zip(&self.bounds) {
            match *bound {
                VarBound::NonNegative => worst = worst.max(-xj),
                VarBound::Boxed(u) => worst = worst.max(-xj).max(xj - u),
                VarBound::Free => {}
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal solution; empty unless `status` is `Optimal`.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual multipliers `y` of `A x = b`.
    pub eq_duals: Vec<f64>,
    /// Dual multipliers `λ ≤ 0` of `G x ≤ h`.
    pub ineq_duals: Vec<f64>,
    pub iterations: usize,
}

/// Optimality evidence for a solved LP, from the primal and dual solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub primal_residual: f64,
    /// Largest violation of dual feasibility (sign of reduced costs and `λ`).
    pub dual_residual: f64,
    /// `|cᵀx − (bᵀy + hᵀλ + uᵀν)|`, with box multipliers `ν = min(d, 0)`
    /// taken from the reduced costs `d`.
    pub duality_gap: f64,
}

impl LpSolution {
    pub fn certificate(&self, lp: &StandardFormLp) -> Certificate {
        let primal_residual = lp.primal_residual(&self.x);
        let at_y = lp.eq_matrix.t_mul_vec(&self.eq_duals);
        let gl = lp.ineq_matrix.t_mul_vec(&self.ineq_duals);
        let mut dual_residual: f64 = 0.0;
        let mut box_term = 0.0;
        for j in 0..lp.num_vars() {
            let d = lp.objective[j] - at_y[j] - gl[j];
            dual_residual = dual_residual.max(match lp.bounds[j] {
                VarBound::NonNegative => -d,
                VarBound::Free => d.abs(),
                VarBound::Boxed(u) => {
                    box_term += u * d.min(0.0);
                    0.0
                }
            });
        }
        for l in &self.ineq_duals {
            dual_residual = dual_residual.max(*l);
        }
        let dual_obj: f64 = lp
            .eq_rhs
            .iter()
            .zip(&self.eq_duals)
            .chain(lp.ineq_rhs.iter().zip(&self.ineq_duals))
            .map(|(b, y)| b * y)
            .sum::<f64>()
            + box_term;
        Certificate {
            primal_residual,
            dual_residual,
            duality_gap: (self.objective - dual_obj).abs(),
        }
    }
}

/// Solves `lp` to optimality or reports infeasibility/unboundedness.
///
/// Deterministic: identical input yields bitwise identical output.
pub fn solve_lp(lp: &StandardFormLp) -> Result<LpSolution> {
    lp.validate()?;
    let mut tab = Simplex::new(lp);
    let max_iters = 100 * (tab.m + tab.ncols) + 10_000;

    // phase one
    let phase1_cost: Vec<f64> = (0..tab.ncols)
        .map(|j| if tab.is_artificial[j] { 1.0 } else { 0.0 })
        .collect();
    if tab.num_artificial > 0 {
        match tab.optimize(&phase1_cost, false, max_iters)? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => {
                return Err(Error::Solver("phase one reported unbounded".into()))
            }
        }
        tab.refresh();
        let infeas: f64 = (0..tab.m)
            .filter(|&i| tab.is_artificial[tab.basis[i]])
            .map(|i| tab.x_b[i])
            .sum();
        if infeas > 1e-7 * tab.rhs_scale() {
            return Ok(tab.status_only(LpStatus::Infeasible));
        }
        tab.drive_out_artificials();
    }

    // phase two
    let cost = tab.cost.clone();
    match tab.optimize(&cost, true, max_iters)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded => return Ok(tab.status_only(LpStatus::Unbounded)),
    }
    tab.refresh();
    Ok(tab.solution(lp))
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

/// Where an original variable lives among the internal columns.
#[derive(Clone, Copy)]
enum VarSlot {
    Single(usize),
    Split(usize, usize),
}

struct Simplex {
    m: usize,
    m_eq: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    cost: Vec<f64>,
    /// Upper bound per column, `INFINITY` when unbounded above.
    upper: Vec<f64>,
    b: Vec<f64>,
    /// `-1` where the original row was negated to make `b ≥ 0`.
    row_sign: Vec<f64>,
    is_artificial: Vec<bool>,
    num_artificial: usize,
    slots: Vec<VarSlot>,
    basis: Vec<usize>,
    /// Basis position of each column, `usize::MAX` when nonbasic.
    position: Vec<usize>,
    /// Nonbasic columns resting at their upper bound.
    at_upper: Vec<bool>,
    /// Column-major `m × m` basis inverse.
    binv: Vec<f64>,
    x_b: Vec<f64>,
    iterations: usize,
}

impl Simplex {
    fn new(lp: &StandardFormLp) -> Self {
        let m_eq = lp.eq_rhs.len();
        let m_in = lp.ineq_rhs.len();
        let m = m_eq + m_in;
        let rhs: Vec<f64> = lp.eq_rhs.iter().chain(&lp.ineq_rhs).copied().collect();
        let row_sign: Vec<f64> = rhs
            .iter()
            .map(|v| if *v < 0.0 { -1.0 } else { 1.0 })
            .collect();
        let b: Vec<f64> = rhs.iter().zip(&row_sign).map(|(v, s)| v * s).collect();

        // gather original columns
        let n = lp.num_vars();
        let mut orig_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in &lp.eq_matrix.entries {
            orig_cols[j].push((i, v * row_sign[i]));
        }
        for &(i, j, v) in &lp.ineq_matrix.entries {
            orig_cols[j].push((m_eq + i, v * row_sign[m_eq + i]));
        }
        for col in &mut orig_cols {
            col.sort_by_key(|e| e.0);
            col.dedup_by(|later, earlier| {
                if later.0 == earlier.0 {
                    earlier.1 += later.1;
                    true
                } else {
                    false
                }
            });
            col.retain(|e| e.1 != 0.0);
        }

        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        let mut cost = Vec::new();
        let mut upper = Vec::new();
        let mut is_artificial = Vec::new();
        let mut push_col = |entries: &mut dyn Iterator<Item = (usize, f64)>,
                            c: f64,
                            ub: f64,
                            artificial: bool| {
            for (i, v) in entries {
                row_idx.push(i);
                vals.push(v);
            }
            col_ptr.push(row_idx.len());
            cost.push(c);
            upper.push(ub);
            is_artificial.push(artificial);
            cost.len() - 1
        };

        let mut slots = Vec::with_capacity(n);
        for j in 0..n {
            let c = lp.objective[j];
            let ub = match lp.bounds[j] {
                VarBound::Boxed(u) => u,
                _ => f64::INFINITY,
            };
            let plus = push_col(&mut orig_cols[j].iter().copied(), c, ub, false);
            match lp.bounds[j] {
                VarBound::NonNegative | VarBound::Boxed(_) => slots.push(VarSlot::Single(plus)),
                VarBound::Free => {
                    let minus = push_col(
                        &mut orig_cols[j].iter().map(|&(i, v)| (i, -v)),
                        -c,
                        f64::INFINITY,
                        false,
                    );
                    slots.push(VarSlot::Split(plus, minus));
                }
            }
        }
        let mut basis = vec![usize::MAX; m];
        for i in 0..m_in {
            let row = m_eq + i;
            let col = push_col(
                &mut std::iter::once((row, row_sign[row])),
                0.0,
                f64::INFINITY,
                false,
            );
            if row_sign[row] > 0.0 {
                basis[row] = col;
            }
        }
        let mut num_artificial = 0;
        for (row, slot) in basis.iter_mut().enumerate() {
            if *slot == usize::MAX {
                *slot = push_col(&mut std::iter::once((row, 1.0)), 0.0, f64::INFINITY, true);
                num_artificial += 1;
            }
        }
        let ncols = cost.len();
        let mut position = vec![usize::MAX; ncols];
        for (i, &c) in basis.iter().enumerate() {
            position[c] = i;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let x_b = b.clone();
        Simplex {
            m,
            m_eq,
            ncols,
            col_ptr,
            row_idx,
            vals,
            cost,
            upper,
            b,
            row_sign,
            is_artificial,
            num_artificial,
            slots,
            basis,
            position,
            at_upper: vec![false; ncols],
            binv,
            x_b,
            iterations: 0,
        }
    }

    #[inline]
    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
        self.row_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.vals[lo..hi].iter().copied())
    }

    #[inline]
    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.column(j).map(|(i, v)| y[i] * v).sum::<f64>()
    }

    /// Improvement rate of moving nonbasic `j` off its bound, or `None` when
    /// `j` cannot enter.
    #[inline]
    fn entering_gain(&self, cost: &[f64], y: &[f64], j: usize, phase_two: bool) -> Option<f64> {
        if self.position[j] != usize::MAX
            || (phase_two && self.is_artificial[j])
            || self.upper[j] == 0.0
        {
            return None;
        }
        let d = self.reduced_cost(cost, y, j);
        Some(if self.at_upper[j] { d } else { -d })
    }

    /// `B⁻¹ a_j`
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for (k, v) in self.column(j) {
            let col = &self.binv[k * m..(k + 1) * m];
            for (a, bk) in alpha.iter_mut().zip(col) {
                *a += v * bk;
            }
        }
        alpha
    }

    /// `c_Bᵀ B⁻¹`
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|c| {
                let col = &self.binv[c * m..(c + 1) * m];
                self.basis
                    .iter()
                    .zip(col)
                    .map(|(&bj, v)| cost[bj] * v)
                    .sum()
            })
            .collect()
    }

    /// Right-hand side net of the nonbasic columns held at their upper bound.
    fn effective_rhs(&self) -> Vec<f64> {
        let mut r = self.b.clone();
        for j in 0..self.ncols {
            if self.at_upper[j] {
                let u = self.upper[j];
                for (row, v) in self.column(j) {
                    r[row] -= v * u;
                }
            }
        }
        r
    }

    fn recompute_x(&mut self) {
        let m = self.m;
        let mut x = vec![0.0; m];
        for (k, bk) in self.effective_rhs().iter().enumerate() {
            if *bk == 0.0 {
                continue;
            }
            let col = &self.binv[k * m..(k + 1) * m];
            for (xi, v) in x.iter_mut().zip(col) {
                *xi += bk * v;
            }
        }
        self.x_b = x;
    }

    fn basis_residual(&self) -> f64 {
        let mut r = self.effective_rhs();
        for (i, &j) in self.basis.iter().enumerate() {
            let xi = self.x_b[i];
            for (row, v) in self.column(j) {
                r[row] -= v * xi;
            }
        }
        r.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn rhs_scale(&self) -> f64 {
        let mut scale = self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (j, &u) in self.upper.iter().enumerate() {
            if self.at_upper[j] {
                scale = scale.max(u);
            }
        }
        1.0 + scale
    }

    /// Recomputes `x_B` from scratch and reinverts the basis if the
    /// accumulated update error has grown.
    fn refresh(&mut self) {
        self.recompute_x();
        if self.basis_residual() > 1e-10 * self.rhs_scale() {
            self.reinvert();
            self.recompute_x();
        }
    }

    /// Rebuilds `B⁻¹` by Gauss-Jordan elimination with partial pivoting.
    fn reinvert(&mut self) {
        let m = self.m;
        // row-major working copy of B augmented with identity
        let mut a = vec![0.0; m * m];
        for (i, &j) in self.basis.iter().enumerate() {
            for (row, v) in self.column(j) {
                a[row * m + i] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&p, &q| a[p * m + col].abs().total_cmp(&a[q * m + col].abs()))
                .unwrap();
            if a[piv * m + col].abs() < 1e-14 {
                // singular basis; keep the updated inverse
                return;
            }
            if piv != col {
                for k in 0..m {
                    a.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            let (pivot_a, pivot_inv) = (a[col * m..(col + 1) * m].to_vec(), inv[col * m..(col + 1) * m].to_vec());
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * m + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * pivot_a[k];
                    inv[r * m + k] -= f * pivot_inv[k];
                }
            }
        }
        // inv is row-major B⁻¹; store column-major
        for r in 0..m {
            for c in 0..m {
                self.binv[c * m + r] = inv[r * m + c];
            }
        }
    }

    /// Replaces the basic variable at position `p` with column `q`. The
    /// leaving column rests at its upper bound when `leaves_at_upper`.
    fn pivot(&mut self, p: usize, q: usize, alpha: &[f64], leaves_at_upper: bool) {
        let m = self.m;
        let ap = alpha[p];
        let nz: Vec<usize> = (0..m).filter(|&i| i != p && alpha[i] != 0.0).collect();
        for c in 0..m {
            let col = &mut self.binv[c * m..(c + 1) * m];
            let pv = col[p] / ap;
            col[p] = pv;
            if pv != 0.0 {
                for &i in &nz {
                    col[i] -= alpha[i] * pv;
                }
            }
        }
        let leaving = self.basis[p];
        self.position[leaving] = usize::MAX;
        self.at_upper[leaving] = leaves_at_upper;
        self.basis[p] = q;
        self.position[q] = p;
        self.at_upper[q] = false;
        self.iterations += 1;
    }

    fn optimize(&mut self, cost: &[f64], phase_two: bool, max_iters: usize) -> Result<PhaseEnd> {
        let m = self.m;
        let cmax = cost.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let opt_tol = OPTIMALITY_TOL * (1.0 + cmax);
        let mut y = self.duals(cost);
        let mut degenerate_run = 0usize;
        let mut since_refresh = 0usize;
        loop {
            if self.iterations > max_iters {
                return Err(Error::Solver(format!(
                    "iteration limit {max_iters} reached"
                )));
            }
            if since_refresh >= REFRESH_EVERY {
                self.refresh();
                y = self.duals(cost);
                since_refresh = 0;
            }
            let bland = degenerate_run >= DEGENERATE_LIMIT;

            // pricing
            let mut entering = None;
            let mut best = opt_tol;
            for j in 0..self.ncols {
                let Some(gain) = self.entering_gain(cost, &y, j, phase_two) else {
                    continue;
                };
                if bland {
                    if gain > opt_tol {
                        entering = Some(j);
                        break;
                    }
                } else if gain > best {
                    best = gain;
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                // confirm with fresh duals before declaring optimality
                if since_refresh > 0 {
                    self.refresh();
                    y = self.duals(cost);
                    since_refresh = 0;
                    let still_optimal = (0..self.ncols).all(|j| {
                        self.entering_gain(cost, &y, j, phase_two)
                            .is_none_or(|g| g <= opt_tol)
                    });
                    if !still_optimal {
                        continue;
                    }
                }
                return Ok(PhaseEnd::Optimal);
            };
            let d_q = self.reduced_cost(cost, &y, q);
            let from_upper = self.at_upper[q];

            // basic variables move by −θ·δ as the entering one moves by θ
            let alpha = self.ftran(q);
            let delta: Vec<f64> = if from_upper {
                alpha.iter().map(|a| -a).collect()
            } else {
                alpha.clone()
            };
            // distance to the bound each basic variable heads toward
            let room = |i: usize| -> Option<f64> {
                if delta[i] > PIVOT_TOL {
                    Some(self.x_b[i].max(0.0))
                } else if delta[i] < -PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                    Some((self.upper[self.basis[i]] - self.x_b[i]).max(0.0))
                } else {
                    None
                }
            };

            // ratio test
            let leave = if bland {
                let mut choice: Option<(usize, f64)> = None;
                for i in 0..m {
                    let Some(r) = room(i) else { continue };
                    let ratio = r / delta[i].abs();
                    choice = match choice {
                        None => Some((i, ratio)),
                        Some((p, best)) => {
                            if ratio < best - 1e-15
                                || (ratio <= best + 1e-15 && self.basis[i] < self.basis[p])
                            {
                                Some((i, ratio))
                            } else {
                                Some((p, best))
                            }
                        }
                    }
                }
                choice.map(|c| c.0)
            } else {
                let mut bound = f64::INFINITY;
                for i in 0..m {
                    if let Some(r) = room(i) {
                        bound = bound.min((r + FEASIBILITY_TOL) / delta[i].abs());
                    }
                }
                let mut choice: Option<usize> = None;
                for i in 0..m {
                    if let Some(r) = room(i) {
                        if r / delta[i].abs() <= bound
                            && choice.is_none_or(|p| delta[i].abs() > delta[p].abs())
                        {
                            choice = Some(i);
                        }
                    }
                }
                choice
            };
            let theta_row = leave.map(|p| room(p).unwrap() / delta[p].abs());
            let ub_q = self.upper[q];

            if ub_q.is_finite() && theta_row.is_none_or(|t| ub_q <= t) {
                // bound flip: the basis is unchanged
                for i in 0..m {
                    self.x_b[i] -= ub_q * delta[i];
                }
                self.at_upper[q] = !from_upper;
                self.iterations += 1;
                degenerate_run = 0;
                since_refresh += 1;
                continue;
            }
            let Some(p) = leave else {
                return Ok(PhaseEnd::Unbounded);
            };
            let theta = theta_row.unwrap();
            let leaves_at_upper = delta[p] < 0.0;
            for i in 0..m {
                self.x_b[i] -= theta * delta[i];
            }
            self.x_b[p] = if from_upper { ub_q - theta } else { theta };
            if theta * delta[p].abs() <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(p, q, &alpha, leaves_at_upper);
            // y ← y + d_q · (row p of the new inverse)
            for (c, yc) in y.iter_mut().enumerate() {
                *yc += d_q * self.binv[c * m + p];
            }
            since_refresh += 1;
        }
    }

    /// Pivots basic artificial variables (at zero level) out of the basis
    /// where a structural column can replace them. Rows where none can are
    /// redundant and keep their artificial.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        for p in 0..m {
            if !self.is_artificial[self.basis[p]] {
                continue;
            }
            let row: Vec<f64> = (0..m).map(|c| self.binv[c * m + p]).collect();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.ncols {
                if self.position[j] != usize::MAX || self.is_artificial[j] {
                    continue;
                }
                let r: f64 = self.column(j).map(|(i, v)| row[i] * v).sum();
                if r.abs() > 1e-7 && best.is_none_or(|b| r.abs() > b.1.abs()) {
                    best = Some((j, r));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.ftran(q);
                let t = self.x_b[p] / alpha[p];
                for i in 0..m {
                    self.x_b[i] -= t * alpha[i];
                }
                self.x_b[p] = if self.at_upper[q] { self.upper[q] } else { 0.0 } + t;
                self.pivot(p, q, &alpha, false);
            }
        }
        self.refresh();
    }

    fn status_only(&self, status: LpStatus) -> LpSolution {
        LpSolution {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            eq_duals: Vec::new(),
            ineq_duals: Vec::new(),
            iterations: self.iterations,
        }
    }

    fn solution(&self, lp: &StandardFormLp) -> LpSolution {
        let mut internal: Vec<f64> = (0..self.ncols)
            .map(|j| if self.at_upper[j] { self.upper[j] } else { 0.0 })
            .collect();
        for (i, &j) in self.basis.iter().enumerate() {
            internal[j] = self.x_b[i];
        }
        let x: Vec<f64> = self
            .slots
            .iter()
            .map(|slot| match *slot {
                VarSlot::Single(j) => internal[j],
                VarSlot::Split(p, q) => internal[p] - internal[q],
            })
            .collect();
        let y = self.duals(&self.cost);
        let signed: Vec<f64> = y.iter().zip(&self.row_sign).map(|(v, s)| v * s).collect();
        LpSolution {
            status: LpStatus::Optimal,
            objective: lp.objective_value(&x),
            x,
            eq_duals: signed[..self.m_eq].to_vec(),
            ineq_duals: signed[self.m_eq..].to_vec(),
            iterations: self.iterations,
        }
    }
}
