//! Exact linear-system solving over the rationals.
//!
//! The clearing fixed points are piecewise affine: once the default set and
//! threshold fees are pinned, the remaining system is linear. Solving it with
//! exact Gaussian elimination removes every tolerance from the golden paths.

use crate::rational::Rational;
use num::Zero;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinearError {
    #[error("singular linear system (no unique solution)")]
    Singular,
    #[error("dimension mismatch: matrix is {rows}x{cols}, rhs has {rhs} entries")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        rhs: usize,
    },
}

/// Solves `A x = b` exactly by Gaussian elimination with row pivoting.
pub fn solve(a: &[Vec<Rational>], b: &[Rational]) -> Result<Vec<Rational>, LinearError> {
    let n = a.len();
    if a.iter().any(|row| row.len() != n) || b.len() != n {
        return Err(LinearError::DimensionMismatch {
            rows: n,
            cols: a.first().map_or(0, Vec::len),
            rhs: b.len(),
        });
    }
    let mut m: Vec<Vec<Rational>> = a.to_vec();
    let mut rhs: Vec<Rational> = b.to_vec();

    for col in 0..n {
        let pivot_row = (col..n)
            .find(|&r| !m[r][col].is_zero())
            .ok_or(LinearError::Singular)?;
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let pivot = m[col][col].clone();
        let (pivot_rows, lower_rows) = m.split_at_mut(col + 1);
        let pivot_row = &pivot_rows[col];
        let (pivot_rhs, lower_rhs) = rhs.split_at_mut(col + 1);
        for (row, b) in lower_rows.iter_mut().zip(lower_rhs.iter_mut()) {
            if row[col].is_zero() {
                continue;
            }
            let factor = &row[col] / &pivot;
            for (cell, pivot_cell) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *cell -= &factor * pivot_cell;
            }
            *b -= &factor * &pivot_rhs[col];
        }
    }

    let mut x = vec![Rational::zero(); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row].clone();
        for col in (row + 1)..n {
            acc -= &m[row][col] * &x[col];
        }
        x[row] = acc / &m[row][row];
    }
    Ok(x)
}
