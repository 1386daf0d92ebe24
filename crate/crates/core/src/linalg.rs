//! Stationary distributions of irreducible chains via GTH state reduction.
//!
//! The GTH algorithm (Grassmann-Taksar-Heyman) is Gaussian elimination
//! specialized to Markov chains: states are eliminated one at a time and the
//! update uses only additions, multiplications and divisions of nonnegative
//! quantities, so every entry of the result carries relative accuracy even
//! when the stationary probabilities span many orders of magnitude (an
//! overloaded queue's empty state, for instance). No pivoting is needed,
//! which keeps the transition matrix banded under the lexicographic state
//! order; storage and work are O(n*b) and O(n*b^2) for half-bandwidth b.

use crate::error::{Error, Result};

/// Stationary distribution of an irreducible row-stochastic matrix given as
/// sparse rows over indices `0..n`. Returns a normalized positive vector.
pub fn gth_stationary(n: usize, rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    assert_eq!(rows.len(), n, "row count mismatch");
    if n == 0 {
        return Err(Error::InvalidParameter("empty chain".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }

    let mut band = 1usize;
    for (i, row) in rows.iter().enumerate() {
        for &(j, _) in row {
            debug_assert!(j < n);
            band = band.max(i.abs_diff(j));
        }
    }
    let width = 2 * band + 1;

    // p[i * width + (j - i + band)] = P[i][j], row-major band storage.
    let mut p = vec![0.0f64; n * width];
    {
        let at = |i: usize, j: usize| i * width + (j + band - i);
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                p[at(i, j)] += v;
            }
        }
    }

    // Eliminate states n-1 .. 1. After eliminating state k, column k and the
    // departure mass s[k] stay frozen for the back substitution.
    let mut departure = vec![0.0f64; n];
    for k in (1..n).rev() {
        let lo = k.saturating_sub(band);
        let mut s = 0.0f64;
        for j in lo..k {
            s += p[k * width + (j + band - k)];
        }
        if !(s > 0.0) {
            return Err(Error::NumericalFailure(format!(
                "GTH: state {k} has no transitions to lower states; the chain \
                 is not irreducible on the given index set"
            )));
        }
        departure[k] = s;
        for i in lo..k {
            let pik = p[i * width + (k + band - i)];
            if pik == 0.0 {
                continue;
            }
            let f = pik / s;
            for j in lo..k {
                let pkj = p[k * width + (j + band - k)];
                if pkj != 0.0 {
                    p[i * width + (j + band - i)] += f * pkj;
                }
            }
        }
    }

    // Back substitution: unnormalized pi, then scale.
    let mut pi = vec![0.0f64; n];
    pi[0] = 1.0;
    for k in 1..n {
        let lo = k.saturating_sub(band);
        let mut inflow = 0.0f64;
        for i in lo..k {
            let pik = p[i * width + (k + band - i)];
            if pik != 0.0 {
                inflow += pi[i] * pik;
            }
        }
        pi[k] = inflow / departure[k];
    }
    let total: f64 = pi.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::NumericalFailure(format!(
            "GTH produced non-normalizable mass (total {total:.3e})"
        )));
    }
    for v in pi.iter_mut() {
        *v /= total;
    }
    Ok(pi)
}
