//! Two-player zero-sum matrix games: row player maximizes `pᵀ M q`.
//!
//! The solver shifts the payoff matrix to be strictly positive and solves
//! `max 1ᵀy  s.t.  M y ≤ 1, y ≥ 0` with a dense tableau simplex under
//! Bland's rule. The column strategy is the normalized primal optimum and
//! the row strategy is read off the slack reduced costs (the dual). If the
//! result cannot be certified, a multiplicative-weights pass is tried
//! before giving up.

use crate::error::{Error, Result};

/// Default certification tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Tolerance used inside planning loops.
pub const PLANNING_TOL: f64 = 1e-6;

const PIVOT_EPS: f64 = 1e-12;
const DIST_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixGame {
    rows: usize,
    cols: usize,
    payoff: Vec<f64>,
}

impl MatrixGame {
    /// `payoff` is row-major `rows × cols`.
    pub fn new(rows: usize, cols: usize, payoff: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("matrix game needs at least one row and one column"));
        }
        if payoff.len() != rows * cols {
            return Err(Error::param(format!(
                "payoff has {} entries, expected {}",
                payoff.len(),
                rows * cols
            )));
        }
        if payoff.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("payoff matrix has non-finite entries"));
        }
        Ok(Self { rows, cols, payoff })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::param("ragged payoff matrix"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.payoff[i * self.cols + j]
    }

    pub fn payoff(&self) -> &[f64] {
        &self.payoff
    }

    fn range(&self) -> (f64, f64) {
        self.payoff
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// `(M q)_i` for every row.
    pub fn row_payoffs(&self, q: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * q[j]).sum())
            .collect()
    }

    /// `(pᵀ M)_j` for every column.
    pub fn col_payoffs(&self, p: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| p[i] * self.get(i, j)).sum())
            .collect()
    }

    /// `pᵀ M q`.
    pub fn expected(&self, p: &[f64], q: &[f64]) -> f64 {
        self.row_payoffs(q).iter().zip(p).map(|(a, b)| a * b).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
    pub exploitability: f64,
}

fn check_distribution(v: &[f64], len: usize, who: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::param(format!("{who} strategy has length {}, expected {len}", v.len())));
    }
    if v.iter().any(|p| !(*p >= -DIST_TOL) || !p.is_finite()) {
        return Err(Error::param(format!("{who} strategy has negative or non-finite mass")));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > DIST_TOL {
        return Err(Error::param(format!("{who} strategy sums to {total}")));
    }
    Ok(())
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Duality gap `max_i (M q)_i − min_j (pᵀ M)_j`: the total gain available
/// to the two players from pure deviations. Zero exactly at equilibria.
pub fn exploitability(game: &MatrixGame, p: &[f64], q: &[f64]) -> Result<f64> {
    check_distribution(p, game.rows, "row")?;
    check_distribution(q, game.cols, "column")?;
    Ok(gap(game, p, q))
}

fn gap(game: &MatrixGame, p: &[f64], q: &[f64]) -> f64 {
    (max_of(&game.row_payoffs(q)) - min_of(&game.col_payoffs(p))).max(0.0)
}

/// Solves the game to an exploitability of at most `tol · max(1, range)`,
/// where `range` is the spread of payoff entries.
pub fn solve(game: &MatrixGame, tol: f64) -> Result<GameSolution> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("solver tolerance must be positive, got {tol}")));
    }
    let (lo, hi) = game.range();
    let spread = hi - lo;
    let threshold = tol * spread.max(1.0);
    if spread == 0.0 {
        let mut p = vec![0.0; game.rows];
        let mut q = vec![0.0; game.cols];
        p[0] = 1.0;
        q[0] = 1.0;
        return Ok(GameSolution {
            value: lo,
            row_strategy: p,
            col_strategy: q,
            exploitability: 0.0,
        });
    }

    let mut residual = f64::INFINITY;
    if let Some((p, q)) = simplex(game, lo, spread) {
        let e = gap(game, &p, &q);
        if e <= threshold {
            return Ok(finish(game, p, q, e));
        }
        residual = e;
    }

    let (p, q) = multiplicative_weights(game, lo, spread, threshold);
    let e = gap(game, &p, &q);
    if e <= threshold {
        return Ok(finish(game, p, q, e));
    }
    Err(Error::Solver {
        context: format!("{}x{} matrix game", game.rows, game.cols),
        residual: residual.min(e),
    })
}

fn finish(game: &MatrixGame, p: Vec<f64>, q: Vec<f64>, e: f64) -> GameSolution {
    // any point between the two security levels is within the gap of the true value
    let lower = min_of(&game.col_payoffs(&p));
    let upper = max_of(&game.row_payoffs(&q));
    // at an exact equilibrium the two levels can cross by rounding
    let value = game.expected(&p, &q).clamp(lower.min(upper), upper.max(lower));
    GameSolution {
        value,
        row_strategy: p,
        col_strategy: q,
        exploitability: e,
    }
}

fn normalize(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        let n = v.len() as f64;
        v.iter_mut().for_each(|x| *x = 1.0 / n);
    }
}

/// Dense tableau simplex; returns `None` if the iteration budget runs out.
fn simplex(game: &MatrixGame, lo: f64, spread: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let (m, n) = (game.rows, game.cols);
    let width = n + m + 1;
    // constraint rows, then the objective row
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        for j in 0..n {
            t[i * width + j] = (game.get(i, j) - lo) / spread + 1.0;
        }
        t[i * width + n + i] = 1.0;
        t[i * width + width - 1] = 1.0;
    }
    for j in 0..n {
        t[m * width + j] = -1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let budget = 50 * (m + n) + 100;
    let mut converged = false;
    for _ in 0..budget {
        let entering = (0..n + m).find(|&j| t[m * width + j] < -PIVOT_EPS);
        let Some(col) = entering else {
            converged = true;
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * width + col];
            if a > PIVOT_EPS {
                let ratio = t[i * width + width - 1] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - PIVOT_EPS
                            || ((ratio - best).abs() <= PIVOT_EPS && basis[i] < basis[r])
                        {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        // bounded because all constraint entries are positive
        let (row, _) = leave?;
        pivot(&mut t, m + 1, width, row, col);
        basis[row] = col;
    }
    if !converged {
        return None;
    }

    let mut y = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            y[b] = t[i * width + width - 1];
        }
    }
    let mut x: Vec<f64> = (0..m).map(|i| t[m * width + n + i]).collect();
    normalize(&mut y);
    normalize(&mut x);
    Some((x, y))
}

fn pivot(t: &mut [f64], rows: usize, width: usize, row: usize, col: usize) {
    let p = t[row * width + col];
    for j in 0..width {
        t[row * width + j] /= p;
    }
    t[row * width + col] = 1.0;
    for i in 0..rows {
        if i == row {
            continue;
        }
        let f = t[i * width + col];
        if f == 0.0 {
            continue;
        }
        for j in 0..width {
            t[i * width + j] -= f * t[row * width + j];
        }
        t[i * width + col] = 0.0;
    }
}

/// Hedge for both players with averaged iterates on the rescaled payoffs.
fn multiplicative_weights(game: &MatrixGame, lo: f64, spread: f64, threshold: f64) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (game.rows, game.cols);
    let iterations = 200_000usize;
    let eta = ((m.max(n) as f64).ln().max(1.0) / iterations as f64).sqrt() * 4.0;
    let scaled = |i: usize, j: usize| (game.get(i, j) - lo) / spread;
    let mut lw = vec![0.0; m];
    let mut lv = vec![0.0; n];
    let mut avg_p = vec![0.0; m];
    let mut avg_q = vec![0.0; n];
    let mut best = (vec![1.0 / m as f64; m], vec![1.0 / n as f64; n]);
    let mut best_gap = gap(game, &best.0, &best.1);
    for t in 1..=iterations {
        let p = softmax(&lw);
        let q = softmax(&lv.iter().map(|v| -v).collect::<Vec<_>>());
        for i in 0..m {
            lw[i] += eta * (0..n).map(|j| scaled(i, j) * q[j]).sum::<f64>();
        }
        for j in 0..n {
            lv[j] += eta * (0..m).map(|i| scaled(i, j) * p[i]).sum::<f64>();
        }
        avg_p.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        avg_q.iter_mut().zip(&q).for_each(|(a, b)| *a += b);
        if t % 1000 == 0 {
            let mut pp = avg_p.clone();
            let mut qq = avg_q.clone();
            normalize(&mut pp);
            normalize(&mut qq);
            let g = gap(game, &pp, &qq);
            if g < best_gap {
                best_gap = g;
                best = (pp, qq);
            }
            if best_gap <= threshold {
                break;
            }
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = max_of(logits);
    let mut v: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    normalize(&mut v);
    v
}
