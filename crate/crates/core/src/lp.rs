//! Exact rational linear programming.
//!
//! A dense two-phase primal simplex over arbitrary-precision rationals, with
//! Bland's rule for anti-cycling. Equilibrium price search asks strict
//! feasibility questions (is the optimal slack positive?), so a floating-point
//! solver would make nonexistence verdicts unsound; everything here is exact.
//!
//! Problem form: maximize `c . x` subject to `A x <= b`, `x >= 0`. Right-hand
//! sides may be negative; Phase I introduces artificial variables for those
//! rows.

use num::{Signed, Zero};

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpResult {
    Optimal {
        objective: Rational,
        solution: Vec<Rational>,
    },
    Infeasible,
    Unbounded,
}

/// One inequality `coeffs . x <= rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<Rational>,
    pub rhs: Rational,
}

pub fn maximize(objective: &[Rational], constraints: &[Constraint]) -> LpResult {
    Simplex::new(objective, constraints).run()
}

struct Simplex {
    /// rows x (cols + 1); last column is the right-hand side.
    tableau: Vec<Vec<Rational>>,
    /// Objective row in `z - c.x = 0` form: entry `j` holds the negated
    /// reduced cost of column `j`; the last entry is the objective value.
    obj: Vec<Rational>,
    basis: Vec<usize>,
    objective: Vec<Rational>,
    num_structural: usize,
    artificial_start: usize,
    cols: usize,
}

impl Simplex {
    fn new(objective: &[Rational], constraints: &[Constraint]) -> Self {
        let n = objective.len();
        let rows = constraints.len();
        let artificial_start = n + rows;
        let num_artificial = constraints.iter().filter(|c| c.rhs.is_negative()).count();
        let cols = artificial_start + num_artificial;

        let mut tableau = vec![vec![Rational::zero(); cols + 1]; rows];
        let mut basis = vec![0usize; rows];
        let mut next_artificial = artificial_start;
        for (i, constraint) in constraints.iter().enumerate() {
            assert_eq!(constraint.coeffs.len(), n, "constraint arity mismatch");
            let flip = constraint.rhs.is_negative();
            for (j, a) in constraint.coeffs.iter().enumerate() {
                tableau[i][j] = if flip { -a.clone() } else { a.clone() };
            }
            let one = Rational::from_integer(1.into());
            tableau[i][n + i] = if flip { -one.clone() } else { one.clone() };
            tableau[i][cols] = if flip {
                -constraint.rhs.clone()
            } else {
                constraint.rhs.clone()
            };
            if flip {
                tableau[i][next_artificial] = one;
                basis[i] = next_artificial;
                next_artificial += 1;
            } else {
                basis[i] = n + i;
            }
        }

        Simplex {
            tableau,
            obj: vec![Rational::zero(); cols + 1],
            basis,
            objective: objective.to_vec(),
            num_structural: n,
            artificial_start,
            cols,
        }
    }

    fn run(mut self) -> LpResult {
        if self.cols > self.artificial_start {
            // Phase I: maximize minus the sum of artificials; feasible iff the
            // optimum is exactly zero.
            self.obj = vec![Rational::zero(); self.cols + 1];
            for j in self.artificial_start..self.cols {
                self.obj[j] = Rational::from_integer(1.into());
            }
            for row in 0..self.tableau.len() {
                if self.basis[row] >= self.artificial_start {
                    let row_vals = self.tableau[row].clone();
                    for (o, r) in self.obj.iter_mut().zip(&row_vals) {
                        *o -= r;
                    }
                }
            }
            let bounded = self.pivot_until_optimal();
            debug_assert!(bounded, "phase I objective is bounded by zero");
            if !self.obj[self.cols].is_zero() {
                return LpResult::Infeasible;
            }
            self.drive_out_artificials();
        }

        // Phase II on the original objective.
        self.obj = vec![Rational::zero(); self.cols + 1];
        for j in 0..self.num_structural {
            self.obj[j] = -self.objective[j].clone();
        }
        for row in 0..self.tableau.len() {
            let v = self.basis[row];
            if !self.obj[v].is_zero() {
                let factor = self.obj[v].clone();
                let row_vals = self.tableau[row].clone();
                for (o, r) in self.obj.iter_mut().zip(&row_vals) {
                    *o -= &factor * r;
                }
            }
        }
        if !self.pivot_until_optimal() {
            return LpResult::Unbounded;
        }

        let mut solution = vec![Rational::zero(); self.num_structural];
        for (row, &v) in self.basis.iter().enumerate() {
            if v < self.num_structural {
                solution[v] = self.tableau[row][self.cols].clone();
            }
        }
        LpResult::Optimal {
            objective: self.obj[self.cols].clone(),
            solution,
        }
    }

    /// Bland's rule: entering variable is the lowest-index eligible column;
    /// leaving variable is the lowest-index basic variable among the
    /// minimum-ratio rows. Artificial columns never re-enter. Returns false
    /// on unboundedness.
    fn pivot_until_optimal(&mut self) -> bool {
        loop {
            let entering = (0..self.artificial_start).find(|&j| self.obj[j].is_negative());
            let Some(q) = entering else { return true };
            let mut leaving: Option<(usize, Rational)> = None;
            for row in 0..self.tableau.len() {
                let coeff = &self.tableau[row][q];
                if !coeff.is_positive() {
                    continue;
                }
                let ratio = &self.tableau[row][self.cols] / coeff;
                let better = match &leaving {
                    None => true,
                    Some((best_row, best_ratio)) => {
                        ratio < *best_ratio
                            || (ratio == *best_ratio && self.basis[row] < self.basis[*best_row])
                    }
                };
                if better {
                    leaving = Some((row, ratio));
                }
            }
            let Some((r, _)) = leaving else { return false };
            self.pivot(r, q);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let pivot_value = self.tableau[row][col].clone();
        for entry in self.tableau[row].iter_mut() {
            *entry /= &pivot_value;
        }
        let pivot_row = self.tableau[row].clone();
        for other in 0..self.tableau.len() {
            if other == row {
                continue;
            }
            let factor = self.tableau[other][col].clone();
            if factor.is_zero() {
                continue;
            }
            for (entry, p) in self.tableau[other].iter_mut().zip(&pivot_row) {
                *entry -= &factor * p;
            }
        }
        let factor = self.obj[col].clone();
        if !factor.is_zero() {
            for (entry, p) in self.obj.iter_mut().zip(&pivot_row) {
                *entry -= &factor * p;
            }
        }
        self.basis[row] = col;
    }

    /// After a zero-optimum Phase I, pivot remaining artificials out of the
    /// basis (degenerate pivots); rows with no eligible pivot column are
    /// redundant and dropped.
    fn drive_out_artificials(&mut self) {
        let mut row = 0;
        while row < self.tableau.len() {
            if self.basis[row] < self.artificial_start {
                row += 1;
                continue;
            }
            let pivot_col = (0..self.artificial_start).find(|&j| !self.tableau[row][j].is_zero());
            match pivot_col {
                Some(col) => {
                    self.pivot(row, col);
                    row += 1;
                }
                None => {
                    self.tableau.remove(row);
                    self.basis.remove(row);
                }
            }
        }
    }
}
