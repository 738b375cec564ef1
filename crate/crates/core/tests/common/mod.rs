//! Independent reference computations shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use parlsvi::envs::{LinearMdpSpec, LinearMgSpec, RewardTable};
use rand::Rng;

/// Value of the zero-sum game `m` (row player maximizes) by enumerating
/// square equalizing subsystems and keeping the best nonnegative solution.
pub fn vertex_enumeration_value(m: &[Vec<f64>]) -> f64 {
    let rows = m.len();
    let cols = m[0].len();
    let mut best = f64::NEG_INFINITY;
    for k in 1..=rows.min(cols) {
        for rs in subsets(rows, k) {
            for cs in subsets(cols, k) {
                // unknowns p_i (i in rs) and v: Σ p_i m[i][j] − v = 0 (j in cs), Σ p_i = 1
                let n = k + 1;
                let mut a = DMatrix::zeros(n, n);
                let mut b = DVector::zeros(n);
                for (r, &j) in cs.iter().enumerate() {
                    for (c, &i) in rs.iter().enumerate() {
                        a[(r, c)] = m[i][j];
                    }
                    a[(r, k)] = -1.0;
                }
                for c in 0..k {
                    a[(k, c)] = 1.0;
                }
                b[k] = 1.0;
                let Some(sol) = a.lu().solve(&b) else { continue };
                if (0..k).any(|c| sol[c] < -1e-12) {
                    continue;
                }
                let mut p = vec![0.0; rows];
                for (c, &i) in rs.iter().enumerate() {
                    p[i] = sol[c].max(0.0);
                }
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= total);
                let security = (0..cols)
                    .map(|j| (0..rows).map(|i| p[i] * m[i][j]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min);
                best = best.max(security);
            }
        }
    }
    best
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

/// `E[Σ_h r_h]` from `x0` by pushing the state distribution forward.
/// `policy(h, x)` returns a distribution over (joint) actions.
pub fn forward_value(
    spec: &LinearMdpSpec,
    reward: &RewardTable,
    x0: usize,
    policy: impl Fn(usize, usize) -> Vec<f64>,
) -> f64 {
    let s = spec.n_states();
    let kernel = spec.kernel();
    let mut dist = vec![0.0; s];
    dist[x0] = 1.0;
    let mut total = 0.0;
    for h in 0..spec.horizon() {
        let mut next = vec![0.0; s];
        for x in 0..s {
            if dist[x] == 0.0 {
                continue;
            }
            for (a, pa) in policy(h, x).into_iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                total += dist[x] * pa * reward.get(h, x, a);
                for (xn, p) in kernel.row(h, x, a).iter().enumerate() {
                    next[xn] += dist[x] * pa * p;
                }
            }
        }
        dist = next;
    }
    total
}

/// Best value over all deterministic policies, by brute force.
pub fn brute_force_optimum(spec: &LinearMdpSpec, reward: &RewardTable, x0: usize) -> f64 {
    let (s, a, hz) = (spec.n_states(), spec.n_actions(), spec.horizon());
    let n = s * hz;
    let count = a.pow(n as u32);
    let mut best = f64::NEG_INFINITY;
    for code in 0..count {
        let mut digits = vec![0usize; n];
        let mut c = code;
        for d in digits.iter_mut() {
            *d = c % a;
            c /= a;
        }
        let v = forward_value(spec, reward, x0, |h, x| {
            let mut e = vec![0.0; a];
            e[digits[h * s + x]] = 1.0;
            e
        });
        best = best.max(v);
    }
    best
}

/// Joint-action distribution of two independent per-player distributions.
pub fn product(p: &[f64], q: &[f64]) -> Vec<f64> {
    p.iter().flat_map(|a| q.iter().map(move |b| a * b)).collect()
}

/// Uniform draw from the simplex.
pub fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let t: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= t);
    v
}

/// Random tabular MDP tables `[h][x][a][x']`, `[h][x][a]`.
pub fn random_tabular<R: Rng>(s: usize, a: usize, hz: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut t = Vec::with_capacity(hz * s * a * s);
    for _ in 0..hz * s * a {
        t.extend(random_simplex(s, rng));
    }
    let r = (0..hz * s * a).map(|_| rng.random::<f64>()).collect();
    (t, r)
}

pub fn random_tabular_mg<R: Rng>(s: usize, a: usize, b: usize, hz: usize, rng: &mut R) -> LinearMgSpec {
    let (t, r) = random_tabular(s, a * b, hz, rng);
    LinearMgSpec::tabular(s, a, b, hz, &t, &r, 0).unwrap()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
