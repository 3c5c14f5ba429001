//! Standard-form second-order cone programs and the solver interface.
//!
//! A [`ConicProgram`] is `minimize c'x subject to s = b - A x, s in K` where
//! `K` is a product of zero, nonnegative and second-order cones. Rows are added
//! as affine expressions and the cone list is kept in row order.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

/// Sparse affine expression `sum coeff * x[index] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(index: usize) -> Self {
        Self {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Zero(usize),
    Nonnegative(usize),
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::Nonnegative(n) | Cone::SecondOrder(n) => n,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    n_vars: usize,
    cost: Vec<f64>,
    /// Each row is the slack expression `s_i(x)`.
    rows: Vec<Affine>,
    cones: Vec<Cone>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `n` variables and returns the index of the first.
    pub fn add_vars(&mut self, n: usize) -> usize {
        let start = self.n_vars;
        self.n_vars += n;
        self.cost.resize(self.n_vars, 0.0);
        start
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn rows(&self) -> &[Affine] {
        &self.rows
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn add_cost(&mut self, index: usize, coeff: f64) {
        self.cost[index] += coeff;
    }

    fn push(&mut self, row: Affine, cone: Cone) {
        debug_assert!(row.terms.iter().all(|&(i, _)| i < self.n_vars));
        self.rows.push(row);
        match (self.cones.last_mut(), cone) {
            (Some(Cone::Zero(n)), Cone::Zero(1))
            | (Some(Cone::Nonnegative(n)), Cone::Nonnegative(1)) => *n += 1,
            _ => self.cones.push(cone),
        }
    }

    /// `expr == 0`.
    pub fn add_eq(&mut self, expr: Affine) {
        self.push(expr, Cone::Zero(1));
    }

    /// `expr >= 0`.
    pub fn add_nonneg(&mut self, expr: Affine) {
        self.push(expr, Cone::Nonnegative(1));
    }

    /// `|| (e_1, .., e_k) || <= bound`.
    pub fn add_soc(&mut self, bound: Affine, entries: Vec<Affine>) {
        let dim = entries.len() + 1;
        self.rows.push(bound);
        self.rows.extend(entries);
        self.cones.push(Cone::SecondOrder(dim));
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest cone violation of `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        let mut row = 0;
        for cone in &self.cones {
            let s: Vec<f64> = self.rows[row..row + cone.dim()]
                .iter()
                .map(|r| r.eval(x))
                .collect();
            let v = match cone {
                Cone::Zero(_) => s.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
                Cone::Nonnegative(_) => s.iter().fold(0.0, |m: f64, v| m.max(-v)),
                Cone::SecondOrder(_) => {
                    (s[1..].iter().map(|v| v * v).sum::<f64>().sqrt() - s[0]).max(0.0)
                }
            };
            worst = worst.max(v);
            row += cone.dim();
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Converged only to reduced accuracy.
    Inaccurate,
    /// Iteration limit, numerical breakdown or stalled progress.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub detail: String,
}

pub trait ConicSolver {
    fn solve(&self, program: &ConicProgram) -> ConicSolution;

    /// Alternative configurations tried in order when a solve ends inaccurate
    /// or fails outright.
    fn fallbacks(&self) -> Vec<Box<dyn ConicSolver>>;
}

/// Interior-point solver backed by Clarabel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarabelSolver {
    pub tolerance: f64,
    pub max_iter: u32,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iter: 200,
        }
    }
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, program: &ConicProgram) -> ConicSolution {
        let n = program.n_vars;
        let m = program.rows.len();
        let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::with_capacity(m);
        for (r, row) in program.rows.iter().enumerate() {
            // s = b - A x  with  s = row(x)  =>  A = -terms, b = constant
            for &(j, a) in &row.terms {
                if a != 0.0 {
                    ri.push(r);
                    ci.push(j);
                    vals.push(-a);
                }
            }
            b.push(row.constant);
        }
        let a = CscMatrix::new_from_triplets(m, n, ri, ci, vals);
        let p = CscMatrix::zeros((n, n));
        let cones: Vec<SupportedConeT<f64>> = program
            .cones
            .iter()
            .map(|c| match *c {
                Cone::Zero(k) => SupportedConeT::ZeroConeT(k),
                Cone::Nonnegative(k) => SupportedConeT::NonnegativeConeT(k),
                Cone::SecondOrder(k) => SupportedConeT::SecondOrderConeT(k),
            })
            .collect();
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_feas(self.tolerance)
            .tol_gap_abs(self.tolerance)
            .tol_gap_rel(self.tolerance)
            .presolve_enable(false)
            .build()
            .expect("static solver settings are valid");
        let mut solver = match DefaultSolver::new(&p, &program.cost, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => {
                return ConicSolution {
                    status: SolveStatus::Failed,
                    x: vec![0.0; n],
                    objective: f64::NAN,
                    iterations: 0,
                    detail: format!("setup failed: {e}"),
                }
            }
        };
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
            _ => SolveStatus::Failed,
        };
        ConicSolution {
            status,
            x: sol.x.clone(),
            objective: sol.obj_val,
            iterations: sol.iterations,
            detail: format!("{:?}", sol.status),
        }
    }

    /// A tighter run first; interior-point methods on these programs sometimes
    /// stall short of a tight target, so a looser run comes last.
    fn fallbacks(&self) -> Vec<Box<dyn ConicSolver>> {
        let iters = self.max_iter * 2;
        vec![
            Box::new(ClarabelSolver {
                tolerance: self.tolerance * 0.01,
                max_iter: iters,
            }),
            Box::new(ClarabelSolver {
                tolerance: self.tolerance * 10.0,
                max_iter: iters,
            }),
        ]
    }
}

/// Solves, then walks the solver's fallbacks while the outcome stays
/// inaccurate or failed. Definite answers (optimal, infeasible, unbounded)
/// end the walk.
pub fn solve_with_fallbacks(solver: &dyn ConicSolver, program: &ConicProgram) -> ConicSolution {
    let mut sol = solver.solve(program);
    for alt in solver.fallbacks() {
        if !matches!(sol.status, SolveStatus::Inaccurate | SolveStatus::Failed) {
            break;
        }
        sol = alt.solve(program);
    }
    sol
}

/// Solves with the default [`ClarabelSolver`].
pub fn solve_conic(program: &ConicProgram) -> ConicSolution {
    ClarabelSolver::default().solve(program)
}
