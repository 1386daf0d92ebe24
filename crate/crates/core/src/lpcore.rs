//! Linear programs in standard equality form with nonnegative variables:
//! `min c^T x  s.t.  A x = b, x >= 0`.
//!
//! The module owns problem validation, a light presolve (empty columns,
//! duplicate and empty rows), solution post-checks against the feasibility
//! tolerances, and an MPS dump for cross-validation with external solvers.
//! Pivoting is delegated to two established backends with complementary
//! strengths on the degenerate occupation-measure programs this crate
//! produces:
//!
//! * [`solve`] uses the `microlp` sparse revised simplex, whose basic
//!   solutions are clean (nonbasic variables exactly zero, residuals near
//!   machine precision) but which can stall through long degenerate pivot
//!   sequences;
//! * [`solve_scan`] prefers the HiGHS dual simplex, which is fast and robust
//!   but only accurate to its working tolerance (~1e-7); it is meant for
//!   screening many instances, with the winners re-solved via [`solve`].

use crate::error::{Error, Result};

/// Feasibility tolerance on `||Ax - b||_inf / max(1, ||b||_inf)`.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Allowed negativity on returned variables.
pub const NONNEGATIVITY_TOL: f64 = 1e-9;
/// Relaxed residual tolerance accepted from the screening solver.
pub const SCAN_FEASIBILITY_TOL: f64 = 1e-7;
/// Relaxed negativity accepted from the screening solver (clamped away).
pub const SCAN_NONNEGATIVITY_TOL: f64 = 1e-6;

/// `min c^T x  s.t.  rows . x = rhs, x >= 0`, rows sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl LpProblem {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars {
            return Err(Error::InvalidParameter(format!(
                "objective has {} coefficients for {} variables",
                self.objective.len(),
                self.n_vars
            )));
        }
        if self.rhs.len() != self.rows.len() {
            return Err(Error::InvalidParameter(format!(
                "{} rows but {} right-hand sides",
                self.rows.len(),
                self.rhs.len()
            )));
        }
        for c in &self.objective {
            if !c.is_finite() {
                return Err(Error::InvalidParameter("non-finite objective coefficient".into()));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !self.rhs[i].is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite rhs in row {i}")));
            }
            for &(j, v) in row {
                if j >= self.n_vars {
                    return Err(Error::InvalidParameter(format!(
                        "row {i} references variable {j} of {}",
                        self.n_vars
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!("non-finite entry in row {i}")));
                }
            }
        }
        Ok(())
    }

    /// Residual `||Ax - b||_inf` of a candidate point.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (row, &b) in self.rows.iter().zip(&self.rhs) {
            let ax: f64 = row.iter().map(|&(j, v)| v * x[j]).sum();
            worst = worst.max((ax - b).abs());
        }
        worst
    }

    /// Dump in MPS format (objective row `COST`, equality rows `R...`,
    /// default nonnegative bounds).
    pub fn write_mps<W: std::io::Write>(&self, name: &str, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "NAME          {name}")?;
        writeln!(w, "ROWS")?;
        writeln!(w, " N  COST")?;
        for i in 0..self.rows.len() {
            writeln!(w, " E  R{i:07}")?;
        }
        // Column-major entries.
        let mut cols: Vec<Vec<(String, f64)>> = vec![Vec::new(); self.n_vars];
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                cols[j].push(("COST".to_string(), c));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                if v != 0.0 {
                    cols[j].push((format!("R{i:07}"), v));
                }
            }
        }
        writeln!(w, "COLUMNS")?;
        for (j, entries) in cols.iter().enumerate() {
            for pair in entries.chunks(2) {
                write!(w, "    X{j:07}  ")?;
                for (row, v) in pair {
                    write!(w, "{row:<10}{v:<16.9e}")?;
                }
                writeln!(w)?;
            }
        }
        writeln!(w, "RHS")?;
        for (i, &b) in self.rhs.iter().enumerate() {
            if b != 0.0 {
                writeln!(w, "    RHS       R{i:07}  {b:<16.9e}")?;
            }
        }
        writeln!(w, "ENDATA")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver output. For non-optimal statuses `x` is empty and the objective is
/// `+inf` (infeasible) or `-inf` (unbounded).
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    fn infeasible() -> Self {
        Self { status: LpStatus::Infeasible, x: Vec::new(), objective: f64::INFINITY }
    }

    fn unbounded() -> Self {
        Self { status: LpStatus::Unbounded, x: Vec::new(), objective: f64::NEG_INFINITY }
    }
}

enum Presolved {
    Reduced { keep_vars: Vec<usize>, rows: Vec<Vec<(usize, f64)>>, rhs: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// Drop empty columns (fixing their variables at zero), empty rows, and
/// exact duplicate rows. Degenerate occupation-measure programs produce all
/// three in bulk.
fn presolve(p: &LpProblem) -> Presolved {
    let mut used = vec![false; p.n_vars];
    for row in &p.rows {
        for &(j, v) in row {
            if v != 0.0 {
                used[j] = true;
            }
        }
    }
    for j in 0..p.n_vars {
        if !used[j] && p.objective[j] < 0.0 {
            // Unconstrained nonnegative variable with negative cost.
            return Presolved::Unbounded;
        }
    }
    let keep_vars: Vec<usize> = (0..p.n_vars).filter(|&j| used[j]).collect();
    let mut renumber = vec![usize::MAX; p.n_vars];
    for (new, &old) in keep_vars.iter().enumerate() {
        renumber[old] = new;
    }

    let mut seen = std::collections::HashSet::new();
    let mut rows = Vec::with_capacity(p.rows.len());
    let mut rhs = Vec::with_capacity(p.rows.len());
    for (row, &b) in p.rows.iter().zip(&p.rhs) {
        let mut compact: Vec<(usize, f64)> =
            row.iter().filter(|&&(_, v)| v != 0.0).map(|&(j, v)| (renumber[j], v)).collect();
        compact.sort_by_key(|&(j, _)| j);
        if compact.is_empty() {
            if b != 0.0 {
                return Presolved::Infeasible;
            }
            continue;
        }
        // Signature over exact bit patterns: only true duplicates collapse.
        let signature: Vec<(usize, u64)> =
            compact.iter().map(|&(j, v)| (j, v.to_bits())).collect();
        if !seen.insert((signature, b.to_bits())) {
            continue;
        }
        rows.push(compact);
        rhs.push(b);
    }
    Presolved::Reduced { keep_vars, rows, rhs }
}

/// Run the microlp revised simplex on the presolved problem.
fn solve_microlp(p: &LpProblem) -> Result<LpSolution> {
    let (keep_vars, rows, rhs) = match presolve(p) {
        Presolved::Infeasible => return Ok(LpSolution::infeasible()),
        Presolved::Unbounded => return Ok(LpSolution::unbounded()),
        Presolved::Reduced { keep_vars, rows, rhs } => (keep_vars, rows, rhs),
    };

    let mut backend = microlp::Problem::new(microlp::OptimizationDirection::Minimize);
    let vars: Vec<microlp::Variable> = keep_vars
        .iter()
        .map(|&old| backend.add_var(p.objective[old], (0.0, f64::INFINITY)))
        .collect();
    for (row, &b) in rows.iter().zip(&rhs) {
        let mut expr = microlp::LinearExpr::empty();
        for &(j, v) in row {
            expr.add(vars[j], v);
        }
        backend.add_constraint(expr, microlp::ComparisonOp::Eq, b);
    }

    let solution = match backend.solve() {
        Ok(outcome) => match outcome.into_solution() {
            Ok(s) => s,
            Err(_) => {
                return Err(Error::NumericalFailure(
                    "LP solve interrupted before reaching optimality".into(),
                ))
            }
        },
        Err(microlp::Error::Infeasible) => return Ok(LpSolution::infeasible()),
        Err(microlp::Error::Unbounded) => return Ok(LpSolution::unbounded()),
        Err(e) => return Err(Error::NumericalFailure(format!("LP backend: {e}"))),
    };

    let mut x = vec![0.0; p.n_vars];
    for (&old, var) in keep_vars.iter().zip(&vars) {
        x[old] = solution.var_value(*var);
    }
    finish_checked(p, x, NONNEGATIVITY_TOL, FEASIBILITY_TOL)
}

/// Run HiGHS. `None` means the backend could not produce a usable verdict
/// and the caller should fall through to the simplex backend.
fn solve_highs(p: &LpProblem) -> Option<(LpStatus, Vec<f64>)> {
    let mut pb = highs::RowProblem::default();
    let cols: Vec<highs::Col> = p
        .objective
        .iter()
        .map(|&c| pb.add_column(c, 0.0..f64::INFINITY))
        .collect();
    for (row, &b) in p.rows.iter().zip(&p.rhs) {
        let factors: Vec<(highs::Col, f64)> = row.iter().map(|&(j, v)| (cols[j], v)).collect();
        pb.add_row(b..=b, factors);
    }
    let mut model = pb.optimise(highs::Sense::Minimise);
    model.set_option("output_flag", false);
    model.set_option("threads", 1i32);
    let solved = model.try_solve().ok()?;
    match solved.status() {
        highs::HighsModelStatus::Optimal => {
            let x = solved.get_solution().columns().to_vec();
            Some((LpStatus::Optimal, x))
        }
        highs::HighsModelStatus::Infeasible => Some((LpStatus::Infeasible, Vec::new())),
        highs::HighsModelStatus::Unbounded => Some((LpStatus::Unbounded, Vec::new())),
        _ => None,
    }
}

/// Clamp sub-tolerance negatives, verify the tolerances, recompute the
/// objective from the clamped point.
fn finish_checked(p: &LpProblem, mut x: Vec<f64>, neg_tol: f64, feas_tol: f64) -> Result<LpSolution> {
    let min_x = x.iter().fold(0.0f64, |a, &v| a.min(v));
    if min_x < -neg_tol {
        return Err(Error::NumericalFailure(format!(
            "LP solution violates nonnegativity: min x = {min_x:.3e}"
        )));
    }
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let b_scale = p.rhs.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let residual = p.residual(&x);
    if residual > feas_tol * b_scale {
        return Err(Error::NumericalFailure(format!(
            "LP solution residual {residual:.3e} exceeds {:.3e}",
            feas_tol * b_scale
        )));
    }
    let objective = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { status: LpStatus::Optimal, x, objective })
}

/// Solve the program to the strict tolerances. Optimal solutions are
/// post-checked; a violation is a numerical failure, not a silently degraded
/// answer.
pub fn solve(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    solve_microlp(p)
}

/// Screening solve: prefer the fast backend and accept its working accuracy
/// (`SCAN_*` tolerances); fall back to the strict path when it fails or
/// returns something outside even those bounds. Intended for scanning large
/// instance families where only comparisons and coarse reads of the solution
/// matter; re-certify any selected instance with [`solve`].
pub fn solve_scan(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    if let Some((status, x)) = solve_highs(p) {
        match status {
            LpStatus::Optimal => {
                if let Ok(s) = finish_checked(p, x, SCAN_NONNEGATIVITY_TOL, SCAN_FEASIBILITY_TOL) {
                    return Ok(s);
                }
            }
            LpStatus::Infeasible => return Ok(LpSolution::infeasible()),
            LpStatus::Unbounded => return Ok(LpSolution::unbounded()),
        }
    }
    solve_microlp(p)
}
