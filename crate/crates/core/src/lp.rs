//! Dense two-phase simplex: Harris ratio test, with Bland's rule as the anti-cycling fallback.
//!
//! Programs handled here are small (a few hundred columns at most), so the
//! tableau is kept dense. Variables carry individual lower/upper bounds which
//! are folded into the standard form before phase one starts.
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::settings::Settings;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `optimize objective·x` subject to linear rows and per-variable bounds.
///
/// Bounds default to `[0, +inf)`; use `f64::NEG_INFINITY` / `f64::INFINITY`
/// for unbounded sides.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub point: Vec<f64>,
    /// Shadow price of each constraint: derivative of the optimal value
    /// with respect to its right-hand side.
    pub duals: Vec<f64>,
    /// `objective - A^T duals`, the multipliers of the variable bounds.
    pub reduced_costs: Vec<f64>,
}

impl LpSolution {
    fn without_point(status: LpStatus, n: usize, m: usize) -> Self {
        LpSolution {
            status,
            value: f64::NAN,
            point: vec![f64::NAN; n],
            duals: vec![f64::NAN; m],
            reduced_costs: vec![f64::NAN; n],
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self
    }

    pub fn with_constraint(mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        self.add_constraint(coeffs, relation, rhs);
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn set_free(&mut self, var: usize) -> &mut Self {
        self.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY)
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::MalformedProgram(format!(
                "bound vectors have lengths {}/{} but there are {n} variables",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedProgram("non-finite objective coefficient".into()));
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::MalformedProgram(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if row.coeffs.iter().any(|c| !c.is_finite()) || !row.rhs.is_finite() {
                return Err(Error::MalformedProgram(format!("constraint {i} is not finite")));
            }
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::MalformedProgram(format!("variable {j} has invalid bounds")));
            }
        }
        Ok(())
    }

    /// Objective value at `x` in the program's own sense.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when a pivot falls below `pivot_tol`.
pub(crate) fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, pivot_tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < pivot_tol {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Every `k`-subset of `0..n` in lexicographic order.
pub(crate) fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// How an original variable is rebuilt from nonnegative standard-form columns.
struct VarMap {
    offset: f64,
    parts: Vec<(usize, f64)>,
}

struct StdRow {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
    origin: Option<usize>,
}


const DEGENERATE_STREAK: usize = 20;
/// Smallest entry the ratio test will pivot on.
const PIVOT_TOL: f64 = 1e-9;

/// Pivots between rebuilds of the tableau from the original rows.
const REFRESH_EVERY: usize = 32;

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Rows as first built, before any pivot.
    original: Vec<Vec<f64>>,
    /// Cost of every column in the current phase.
    cost: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    iterations: usize,
    since_refresh: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.ncols]
    }

    /// Reduced costs and negated objective value for the current basis.
    fn reset_objective(&mut self) {
        let mut obj = self.cost.clone();
        obj.push(0.0);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = self.cost[b];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        for &b in &self.basis {
            obj[b] = 0.0;
        }
        self.obj = obj;
    }

    /// Recompute `B^-1 [A | b]` from the original rows. Leaves the tableau
    /// untouched, and returns false, when the basis matrix is numerically singular.
    fn refresh(&mut self, pivot_tol: f64) -> bool {
        let m = self.rows.len();
        let width = self.ncols + 1;
        // Gauss-Jordan on [B | original].
        let mut aug: Vec<Vec<f64>> = self
            .original
            .iter()
            .map(|row| self.basis.iter().map(|&b| row[b]).chain(row.iter().copied()).collect())
            .collect();
        for col in 0..m {
            let pivot = (col..m)
                .max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))
                .expect("nonempty range");
            if aug[pivot][col].abs() < pivot_tol {
                return false;
            }
            aug.swap(col, pivot);
            let p = aug[col][col];
            for v in aug[col].iter_mut() {
                *v /= p;
            }
            let pivot_row = aug[col].clone();
            for (i, row) in aug.iter_mut().enumerate() {
                if i != col && row[col] != 0.0 {
                    let f = row[col];
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.rows = aug.into_iter().map(|row| row[m..m + width].to_vec()).collect();
        for (i, &b) in self.basis.iter().enumerate() {
            for (k, row) in self.rows.iter_mut().enumerate() {
                row[b] = if k == i { 1.0 } else { 0.0 };
            }
        }
        self.reset_objective();
        self.since_refresh = 0;
        true
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.ncols + 1;
        let p = self.rows[r][c];
        {
            let row = &mut self.rows[r];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[c] = 1.0;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for k in 0..width {
                    row[k] -= f * pivot_row[k];
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for k in 0..width {
                self.obj[k] -= f * pivot_row[k];
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    fn clean_rhs(&mut self, tol: f64) {
        let nc = self.ncols;
        for row in self.rows.iter_mut() {
            if row[nc] < 0.0 && row[nc] > -tol {
                row[nc] = 0.0;
            }
        }
    }

    /// Two-pass ratio test: relax each bound by `slack`, then take the
    /// largest pivot among rows whose exact ratio fits the relaxed step.
    fn harris_row(&self, c: usize, slack: f64) -> Option<usize> {
        let nc = self.ncols;
        let step = self
            .rows
            .iter()
            .filter(|row| row[c] > PIVOT_TOL)
            .map(|row| (row[nc].max(0.0) + slack) / row[c])
            .fold(f64::INFINITY, f64::min);
        let mut best: Option<usize> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let a = row[c];
            if a > PIVOT_TOL && row[nc].max(0.0) / a <= step {
                let better = best.is_none_or(|b| {
                    let ab = self.rows[b][c];
                    a > ab || (a == ab && self.basis[i] < self.basis[b])
                });
                if better {
                    best = Some(i);
                }
            }
        }
        best
    }

    /// Exact minimum ratio, ties to the lowest basic index; with Bland
    /// pricing this cannot cycle.
    fn bland_row(&self, c: usize, slack: f64) -> Option<usize> {
        let nc = self.ncols;
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let a = row[c];
            if a <= PIVOT_TOL {
                continue;
            }
            let rhs = if row[nc] <= slack { 0.0 } else { row[nc] };
            let ratio = rhs / a;
            let better = best.is_none_or(|(b, br)| {
                let tie = (ratio - br).abs() <= 1e-12 * ratio.max(br);
                (!tie && ratio < br) || (tie && self.basis[i] < self.basis[b])
            });
            if better {
                best = Some((i, ratio));
            }
        }
        best.map(|(i, _)| i)
    }

    fn run(&mut self, allowed: &[bool], settings: &Settings, limit: usize) -> Result<Outcome> {
        let mut degenerate = 0usize;
        // Columns whose every positive entry is below the pivot tolerance.
        let mut rejected = vec![false; self.ncols];
        loop {
            if self.iterations > limit {
                return Err(Error::NumericalBreakdown(format!(
                    "iteration limit {limit} reached"
                )));
            }
            let mut is_basic = vec![false; self.ncols];
            for &b in &self.basis {
                is_basic[b] = true;
            }
            // Bland: lowest-index improving column.
            let entering = (0..self.ncols).find(|&j| {
                allowed[j] && !is_basic[j] && !rejected[j] && self.obj[j] < -settings.optimality_tol
            });
            let Some(c) = entering else {
                if self.since_refresh > 0 && self.refresh(settings.rank_tol) {
                    rejected.iter_mut().for_each(|r| *r = false);
                    continue;
                }
                if let Some(c) = rejected.iter().position(|&r| r) {
                    return Err(Error::NumericalBreakdown(format!(
                        "column {c} has only pivots below {PIVOT_TOL:e}"
                    )));
                }
                return Ok(Outcome::Optimal);
            };
            let slack = 0.1 * settings.feasibility_tol;
            let best = if degenerate > DEGENERATE_STREAK {
                self.bland_row(c, slack)
            } else {
                self.harris_row(c, slack)
            };
            match best {
                Some(r) => {
                    if self.rhs(r) <= slack {
                        degenerate += 1;
                    } else {
                        degenerate = 0;
                    }
                    self.pivot(r, c);
                    rejected.iter_mut().for_each(|r| *r = false);
                    self.since_refresh += 1;
                    if self.since_refresh.is_multiple_of(REFRESH_EVERY) {
                        self.refresh(settings.rank_tol);
                    }
                    self.clean_rhs(settings.feasibility_tol);
                }
                None if self.rows.iter().any(|row| row[c] > 0.0) => rejected[c] = true,
                None => {
                    if self.since_refresh > 0 && self.refresh(settings.rank_tol) {
                        rejected.iter_mut().for_each(|r| *r = false);
                        continue;
                    }
                    return Ok(Outcome::Unbounded);
                }
            }
        }
    }

    /// Smallest basic value; negative beyond tolerance means the basis has
    /// drifted out of the feasible region.
    fn min_rhs(&self) -> f64 {
        self.rows.iter().map(|row| row[self.ncols]).fold(0.0, f64::min)
    }
}

/// Solve `lp` with default settings.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    solve_with(lp, &Settings::default())
}

pub fn solve_with(lp: &LinearProgram, settings: &Settings) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();
    let m_user = lp.constraints.len();

    // Standard form: every column nonnegative.
    let mut maps = Vec::with_capacity(n);
    let mut n_std = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo > hi {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, n, m_user));
        }
        let map = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => {
                bound_rows.push((n_std, hi - lo));
                VarMap { offset: lo, parts: vec![(n_std, 1.0)] }
            }
            (true, false) => VarMap { offset: lo, parts: vec![(n_std, 1.0)] },
            (false, true) => VarMap { offset: hi, parts: vec![(n_std, -1.0)] },
            (false, false) => {
                n_std += 1;
                VarMap { offset: 0.0, parts: vec![(n_std - 1, 1.0), (n_std, -1.0)] }
            }
        };
        n_std += 1;
        maps.push(map);
    }

    let mut std_rows = Vec::with_capacity(m_user + bound_rows.len());
    for (i, row) in lp.constraints.iter().enumerate() {
        let mut coeffs = vec![0.0; n_std];
        let mut rhs = row.rhs;
        for (j, &a) in row.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            rhs -= a * maps[j].offset;
            for &(col, s) in &maps[j].parts {
                coeffs[col] += a * s;
            }
        }
        std_rows.push(StdRow { coeffs, relation: row.relation, rhs, origin: Some(i) });
    }
    for &(col, width) in &bound_rows {
        let mut coeffs = vec![0.0; n_std];
        coeffs[col] = 1.0;
        std_rows.push(StdRow { coeffs, relation: Relation::Le, rhs: width, origin: None });
    }

    let mut flips = Vec::with_capacity(std_rows.len());
    for row in std_rows.iter_mut() {
        if row.rhs < 0.0 {
            row.rhs = -row.rhs;
            for a in row.coeffs.iter_mut() {
                *a = -*a;
            }
            row.relation = match row.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
            flips.push(-1.0);
        } else {
            flips.push(1.0);
        }
    }

    let m = std_rows.len();
    let n_slack = std_rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let n_art = std_rows.iter().filter(|r| r.relation != Relation::Le).count();
    let ncols = n_std + n_slack + n_art;
    let art_start = n_std + n_slack;

    // Per row: (slack column, sign) and artificial column, when present.
    let mut slack_of = vec![None; m];
    let mut art_of = vec![None; m];
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut next_slack, mut next_art) = (n_std, art_start);
    for (i, r) in std_rows.iter().enumerate() {
        let mut row = vec![0.0; ncols + 1];
        row[..n_std].copy_from_slice(&r.coeffs);
        row[ncols] = r.rhs;
        match r.relation {
            Relation::Le => {
                row[next_slack] = 1.0;
                slack_of[i] = Some((next_slack, 1.0));
                basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                row[next_slack] = -1.0;
                slack_of[i] = Some((next_slack, -1.0));
                next_slack += 1;
                row[next_art] = 1.0;
                art_of[i] = Some(next_art);
                basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                row[next_art] = 1.0;
                art_of[i] = Some(next_art);
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(row);
    }

    let mut tab = Tableau {
        original: rows.clone(),
        rows,
        cost: (0..ncols).map(|j| if j >= art_start { 1.0 } else { 0.0 }).collect(),
        obj: Vec::new(),
        basis,
        ncols,
        iterations: 0,
        since_refresh: 0,
    };
    let limit = 50_000 + 200 * (m + ncols);
    let mut row_alive = vec![true; m];

    // Phase one.
    if n_art > 0 {
        tab.reset_objective();
        let allowed = vec![true; ncols];
        match tab.run(&allowed, settings, limit)? {
            Outcome::Optimal => {}
            Outcome::Unbounded => {
                return Err(Error::NumericalBreakdown("phase one reported unboundedness".into()))
            }
        }
        let infeasibility = -tab.obj[ncols];
        let scale = 1.0 + std_rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if infeasibility > settings.feasibility_tol * scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, n, m_user));
        }
        // Drive remaining artificials out of the basis.
        for i in 0..m {
            if tab.basis[i] < art_start {
                continue;
            }
            tab.rows[i][ncols] = 0.0;
            let mut best: Option<(usize, f64)> = None;
            for j in 0..art_start {
                let a = tab.rows[i][j].abs();
                if a > settings.rank_tol && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            match best {
                Some((j, _)) => tab.pivot(i, j),
                None => row_alive[i] = false,
            }
        }
        if row_alive.iter().any(|a| !a) {
            let mut kept_rows = Vec::new();
            let mut kept_basis = Vec::new();
            let mut kept_original = Vec::new();
            for i in 0..m {
                if row_alive[i] {
                    kept_rows.push(std::mem::take(&mut tab.rows[i]));
                    kept_original.push(std::mem::take(&mut tab.original[i]));
                    kept_basis.push(tab.basis[i]);
                }
            }
            tab.rows = kept_rows;
            tab.basis = kept_basis;
            tab.original = kept_original;
        }
    }

    // Phase two, always as a minimization.
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; ncols];
    for (j, map) in maps.iter().enumerate() {
        for &(col, s) in &map.parts {
            cost[col] += sign * lp.objective[j] * s;
        }
    }
    tab.cost = cost;
    tab.reset_objective();
    let allowed: Vec<bool> = (0..ncols).map(|j| j < art_start).collect();
    match tab.run(&allowed, settings, limit)? {
        Outcome::Optimal => {}
        Outcome::Unbounded => {
            return Ok(LpSolution::without_point(LpStatus::Unbounded, n, m_user));
        }
    }

    let scale = 1.0 + std_rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    if tab.min_rhs() < -settings.feasibility_tol * scale {
        return Err(Error::NumericalBreakdown(format!(
            "optimal basis is infeasible by {:e}",
            -tab.min_rhs()
        )));
    }
    let mut x_std = vec![0.0; ncols];
    for (i, &b) in tab.basis.iter().enumerate() {
        x_std[b] = tab.rows[i][ncols].max(0.0);
    }
    let point: Vec<f64> = maps
        .iter()
        .map(|map| map.offset + map.parts.iter().map(|&(c, s)| s * x_std[c]).sum::<f64>())
        .collect();

    // Row multipliers from reduced costs of the slack / artificial columns.
    let mut duals = vec![0.0; m_user];
    for i in 0..m {
        if !row_alive[i] {
            continue;
        }
        let y_std = if let Some((col, s)) = slack_of[i] {
            // reduced cost of slack = 0 - y * s
            -tab.obj[col] / s
        } else if let Some(col) = art_of[i] {
            -tab.obj[col]
        } else {
            0.0
        };
        if let Some(orig) = std_rows[i].origin {
            duals[orig] = sign * flips[i] * y_std;
        }
    }
    let reduced_costs: Vec<f64> = (0..n)
        .map(|j| {
            lp.objective[j]
                - lp
                    .constraints
                    .iter()
                    .zip(&duals)
                    .map(|(row, y)| row.coeffs[j] * y)
                    .sum::<f64>()
        })
        .collect();
    let value = lp.evaluate(&point);
    Ok(LpSolution { status: LpStatus::Optimal, value, point, duals, reduced_costs })
}

/// Independent optimality certificate for an optimal solution: primal
/// feasibility, dual sign feasibility, complementary slackness and equality
/// of the Lagrangian dual value with the primal value.
pub fn certify(lp: &LinearProgram, sol: &LpSolution, feas_tol: f64, cs_tol: f64) -> std::result::Result<(), String> {
    if sol.status != LpStatus::Optimal {
        return Err(format!("status {:?} is not optimal", sol.status));
    }
    let x = &sol.point;
    let maximize = lp.sense == Sense::Maximize;
    for (i, row) in lp.constraints.iter().enumerate() {
        let lhs = dot(&row.coeffs, x);
        let slack = lhs - row.rhs;
        let tol = feas_tol * (1.0 + row.rhs.abs());
        let ok = match row.relation {
            Relation::Le => slack <= tol,
            Relation::Ge => slack >= -tol,
            Relation::Eq => slack.abs() <= tol,
        };
        if !ok {
            return Err(format!("constraint {i} violated by {slack:e}"));
        }
        let y = sol.duals[i];
        let sign_ok = match (row.relation, maximize) {
            (Relation::Eq, _) => true,
            (Relation::Le, false) | (Relation::Ge, true) => y <= cs_tol,
            (Relation::Ge, false) | (Relation::Le, true) => y >= -cs_tol,
        };
        if !sign_ok {
            return Err(format!("dual {i} = {y:e} has the wrong sign"));
        }
        if (y * slack).abs() > cs_tol {
            return Err(format!("complementary slackness fails on row {i}: {:e}", y * slack));
        }
    }
    let mut dual_value: f64 = lp.constraints.iter().zip(&sol.duals).map(|(r, y)| r.rhs * y).sum();
    for j in 0..lp.num_vars() {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if x[j] < lo - feas_tol * (1.0 + lo.abs()) || x[j] > hi + feas_tol * (1.0 + hi.abs()) {
            return Err(format!("variable {j} outside its bounds"));
        }
        let d = sol.reduced_costs[j];
        // In minimization a positive reduced cost pins x at its lower bound.
        let d_min = if maximize { -d } else { d };
        if d_min.abs() <= cs_tol {
            dual_value += d * x[j];
            continue;
        }
        let bound = if d_min > 0.0 { lo } else { hi };
        if !bound.is_finite() {
            return Err(format!("reduced cost {d:e} of variable {j} points at an infinite bound"));
        }
        if (d * (x[j] - bound)).abs() > cs_tol {
            return Err(format!("variable {j} not at the bound its reduced cost requires"));
        }
        dual_value += d * bound;
    }
    let gap = (dual_value - sol.value).abs();
    if gap > cs_tol * (1.0 + sol.value.abs()) {
        return Err(format!("duality gap {gap:e}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn solve_certified(lp: &LinearProgram) -> LpSolution {
        let sol = solve(lp).unwrap();
        if sol.is_optimal() {
            certify(lp, &sol, 1e-9, 1e-7).unwrap();
        }
        sol
    }

    #[test]
    fn single_variable_bound() {
        let lp = LinearProgram::maximize(vec![1.0]).with_constraint(vec![1.0], Relation::Le, 1.0);
        let sol = solve_certified(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_face() {
        let lp = LinearProgram::maximize(vec![1.0, 1.0]).with_constraint(
            vec![1.0, 1.0],
            Relation::Le,
            1.0,
        );
        let sol = solve_certified(&lp);
        assert!((sol.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let lp = LinearProgram::maximize(vec![1.0])
            .with_constraint(vec![1.0], Relation::Ge, 1.0)
            .with_constraint(vec![1.0], Relation::Le, 0.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.set_bounds(0, 1.0, 0.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn trinomial_martingale_polytope() {
        // q_u + q_m + q_d = 1 and 2 q_u + q_m + 0.5 q_d = 1 force q_d = 2 q_u.
        let lp = LinearProgram::maximize(vec![1.0, 0.0, 0.0])
            .with_constraint(vec![2.0, 1.0, 0.5], Relation::Eq, 1.0)
            .with_constraint(vec![1.0, 1.0, 1.0], Relation::Eq, 1.0);
        let sol = solve_certified(&lp);
        assert!((sol.value - 1.0 / 3.0).abs() < 1e-12);
        assert!((sol.point[2] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_detected() {
        let lp = LinearProgram::maximize(vec![1.0, 0.0]).with_constraint(
            vec![1.0, -1.0],
            Relation::Le,
            1.0,
        );
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_upper_bounded_variables() {
        // min x + y, x free with x >= -3 via row, y <= 2 and y >= -inf, x + y >= -5
        let mut lp = LinearProgram::minimize(vec![1.0, 1.0])
            .with_constraint(vec![1.0, 0.0], Relation::Ge, -3.0)
            .with_constraint(vec![1.0, 1.0], Relation::Ge, -5.0);
        lp.set_free(0);
        lp.set_bounds(1, f64::NEG_INFINITY, 2.0);
        let sol = solve_certified(&lp);
        assert!((sol.value + 5.0).abs() < 1e-12);
    }

    #[test]
    fn boxed_variables_with_equality() {
        let mut lp = LinearProgram::maximize(vec![3.0, 2.0, -1.0])
            .with_constraint(vec![1.0, 1.0, 1.0], Relation::Eq, 2.0);
        lp.set_bounds(0, 0.0, 0.5).set_bounds(1, -1.0, 1.0).set_bounds(2, 0.25, 4.0);
        let sol = solve_certified(&lp);
        // x0 = 0.5, x1 = 1, x2 = 0.5
        assert!((sol.value - (1.5 + 2.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let lp = LinearProgram::maximize(vec![1.0, 2.0])
            .with_constraint(vec![1.0, 1.0], Relation::Eq, 1.0)
            .with_constraint(vec![2.0, 2.0], Relation::Eq, 2.0);
        let sol = solve_certified(&lp);
        assert!((sol.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_malformed() {
        let lp = LinearProgram::maximize(vec![1.0]).with_constraint(vec![1.0, 2.0], Relation::Le, 1.0);
        assert!(matches!(solve(&lp), Err(Error::MalformedProgram(_))));
    }

    #[test]
    fn small_distinct_ratios_are_not_ties() {
        let lp = LinearProgram::maximize(vec![1.0])
            .with_constraint(vec![1e7], Relation::Le, 1.0)
            .with_constraint(vec![1e7], Relation::Le, 0.999_999);
        let sol = solve_certified(&lp);
        assert!((sol.point[0] - 0.999_999e-7).abs() < 1e-20);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example, which cycles under the largest-coefficient rule.
        let lp = LinearProgram::minimize(vec![-0.75, 150.0, -0.02, 6.0])
            .with_constraint(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0)
            .with_constraint(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0)
            .with_constraint(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let sol = solve_certified(&lp);
        assert!((sol.value + 0.05).abs() < 1e-12);
    }

    fn random_lp() -> impl Strategy<Value = LinearProgram> {
        (1usize..6, 1usize..6).prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec((prop::collection::vec(-3.0f64..3.0, n), 0u8..3, -2.0f64..4.0), m),
                any::<bool>(),
            )
                .prop_map(move |(obj, rows, maximize)| {
                    let mut lp = LinearProgram::new(
                        if maximize { Sense::Maximize } else { Sense::Minimize },
                        obj,
                    );
                    for (coeffs, rel, rhs) in rows {
                        let relation = match rel {
                            0 => Relation::Le,
                            1 => Relation::Ge,
                            _ => Relation::Eq,
                        };
                        lp.add_constraint(coeffs, relation, rhs);
                    }
                    // Box every variable so optimal solutions are common.
                    for j in 0..n {
                        lp.set_bounds(j, -10.0, 10.0);
                    }
                    lp
                })
        })
    }

    proptest! {
        #[test]
        fn strong_duality_on_random_programs(lp in random_lp()) {
            let sol = solve(&lp).unwrap();
            prop_assert_ne!(sol.status, LpStatus::Unbounded);
            if sol.is_optimal() {
                prop_assert!(certify(&lp, &sol, 1e-9, 1e-7).is_ok(), "{:?}", certify(&lp, &sol, 1e-9, 1e-7));
            }
        }

        #[test]
        fn row_permutation_preserves_value(lp in random_lp(), seed in any::<u64>()) {
            let sol = solve(&lp).unwrap();
            let mut permuted = lp.clone();
            let k = permuted.constraints.len();
            permuted.constraints.rotate_left((seed as usize) % k);
            permuted.constraints.reverse();
            let other = solve(&permuted).unwrap();
            prop_assert_eq!(sol.status, other.status);
            if sol.is_optimal() {
                prop_assert!((sol.value - other.value).abs() <= 1e-9 * (1.0 + sol.value.abs()));
            }
        }
    }
}
