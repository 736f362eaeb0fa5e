//! CoSaMP recovery of the spectral magnitude from the stacked system.
//!
//! Every column of `Φ` holds exactly one 1 per branch, so the adjoint is a
//! gather-and-sum over branch rows and the restricted Gram matrix `Φ_Tᵀ Φ_T`
//! is the table of shared-row counts. Neither needs a dense `Φ`.

use serde::{Deserialize, Serialize};

use crate::error::{MassError, Result};
use crate::sampler::StackedSystem;

/// Ridge added to the restricted normal equations when they are singular.
pub const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseRecoveryConfig {
    pub sparsity: usize,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    /// Halting threshold on `‖y - Φx‖ / ‖y‖`.
    #[serde(default = "default_tolerance")]
    pub residual_tolerance: f64,
}

fn default_iterations() -> usize {
    50
}

fn default_tolerance() -> f64 {
    1e-6
}

impl SparseRecoveryConfig {
    pub fn new(sparsity: usize) -> Self {
        SparseRecoveryConfig {
            sparsity,
            max_iterations: default_iterations(),
            residual_tolerance: default_tolerance(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sparsity == 0 {
            return Err(MassError::Config("sparsity must be >= 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(MassError::Config("max_iterations must be >= 1".into()));
        }
        if !(self.residual_tolerance >= 0.0) {
            return Err(MassError::Config("residual_tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Recovered `|X̂|` over the `N` centered bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveredSpectrum {
    /// Nonnegative magnitude per centered bin position.
    pub magnitude: Vec<f64>,
    /// Positions with nonzero magnitude, ascending.
    pub support: Vec<usize>,
    /// `‖y - Φ|X̂|‖₂` of the returned magnitude.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Relative residual reached the tolerance.
    pub converged: bool,
    /// Some restricted least-squares solve needed the ridge term.
    pub rank_deficient: bool,
    /// `(position, value)` of negative least-squares entries clipped to zero.
    pub clipped: Vec<(usize, f64)>,
    /// Residual norm after each accepted iteration, starting with `‖y‖`.
    pub residual_history: Vec<f64>,
}

impl RecoveredSpectrum {
    pub fn zeros(n: usize) -> Self {
        RecoveredSpectrum {
            magnitude: vec![0.0; n],
            support: Vec::new(),
            residual_norm: 0.0,
            iterations: 0,
            converged: true,
            rank_deficient: false,
            clipped: Vec::new(),
            residual_history: vec![0.0],
        }
    }

    pub fn len(&self) -> usize {
        self.magnitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitude.is_empty()
    }

    /// Writes `bin,frequency_hz,magnitude` rows; bin spacing is `1/T`.
    pub fn write_csv<W: std::io::Write>(&self, out: W, observation_s: f64) -> Result<()> {
        let n = self.magnitude.len();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin", "frequency_hz", "magnitude"])?;
        for (pos, m) in self.magnitude.iter().enumerate() {
            let bin = crate::dft::bin_at(n, pos);
            w.write_record([bin.to_string(), (bin as f64 / observation_s).to_string(), m.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Indices of the `count` largest entries of `score` (ties to the lower index),
/// skipping entries whose score is exactly zero.
fn top_indices(score: &[f64], candidates: &[usize], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = candidates.iter().copied().filter(|&i| score[i] != 0.0).collect();
    let cmp = |a: &usize, b: &usize| {
        score[*b]
            .partial_cmp(&score[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    if idx.len() > count {
        idx.select_nth_unstable_by(count, cmp);
        idx.truncate(count);
    }
    idx.sort_unstable();
    idx
}

/// In-place Cholesky of a row-major `n×n` SPD matrix. Returns `false` if a
/// pivot falls below `floor`.
fn cholesky(a: &mut [f64], n: usize, floor: f64) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Least squares of `y` on the columns `cols`, through the normal equations.
/// Returns the coefficients and whether the ridge term was needed.
fn restricted_lstsq(system: &StackedSystem, aty: &[f64], cols: &[usize]) -> (Vec<f64>, bool) {
    let n = cols.len();
    let v = system.branches() as f64;
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        gram[i * n + i] = v;
        for j in 0..i {
            let s = system.shared_rows(cols[i], cols[j]) as f64;
            gram[i * n + j] = s;
            gram[j * n + i] = s;
        }
    }
    let rhs: Vec<f64> = cols.iter().map(|&c| aty[c]).collect();
    let mut l = gram.clone();
    if cholesky(&mut l, n, 1e-9 * v) {
        let mut b = rhs;
        cholesky_solve(&l, n, &mut b);
        return (b, false);
    }
    let mut ridge = RIDGE;
    loop {
        l.copy_from_slice(&gram);
        for i in 0..n {
            l[i * n + i] += ridge;
        }
        if cholesky(&mut l, n, 0.0) {
            let mut b = rhs;
            cholesky_solve(&l, n, &mut b);
            return (b, true);
        }
        ridge *= 10.0;
    }
}

fn residual(system: &StackedSystem, cols: &[usize], vals: &[f64]) -> Vec<f64> {
    let mut r = system.y().to_vec();
    for (&c, &v) in cols.iter().zip(vals) {
        if v != 0.0 {
            for row in system.column_rows(c) {
                r[row] -= v;
            }
        }
    }
    r
}

/// CoSaMP: proxy `Φᵀr`, merge its `2k` largest entries with the current
/// support, least squares on the merged set, prune to `k`, update the residual.
///
/// Halts when the relative residual reaches the tolerance, after
/// `max_iterations`, or when an iteration fails to reduce the residual (that
/// iteration is discarded). Negative entries are clipped at output.
pub fn cosamp(system: &StackedSystem, config: &SparseRecoveryConfig) -> Result<RecoveredSpectrum> {
    config.validate()?;
    let n = system.nyquist_n();
    let k = config.sparsity;
    if k > system.rows() {
        return Err(MassError::Config(format!(
            "sparsity {k} exceeds the {} available measurements",
            system.rows()
        )));
    }
    let y_norm = norm(system.y());
    if y_norm == 0.0 {
        return Ok(RecoveredSpectrum::zeros(n));
    }

    let aty = system.adjoint(system.y());
    let all: Vec<usize> = (0..n).collect();
    let mut support: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut r = system.y().to_vec();
    let mut r_norm = y_norm;
    let mut history = vec![y_norm];
    let mut rank_deficient = false;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.max_iterations {
        let proxy: Vec<f64> = system.adjoint(&r).into_iter().map(f64::abs).collect();
        let omega = top_indices(&proxy, &all, 2 * k);
        let mut merged = omega;
        merged.extend_from_slice(&support);
        merged.sort_unstable();
        merged.dedup();
        if merged.is_empty() {
            break;
        }
        let (b, deficient) = restricted_lstsq(system, &aty, &merged);
        let mut dense = vec![0.0; n];
        for (&c, &v) in merged.iter().zip(&b) {
            dense[c] = v.abs();
        }
        let keep = top_indices(&dense, &merged, k);
        let kept_vals: Vec<f64> = keep
            .iter()
            .map(|c| b[merged.binary_search(c).expect("kept column is in merged set")])
            .collect();
        let r_new = residual(system, &keep, &kept_vals);
        let new_norm = norm(&r_new);
        if !(new_norm < r_norm) {
            break;
        }
        iterations += 1;
        rank_deficient |= deficient;
        support = keep;
        values = kept_vals;
        r = r_new;
        r_norm = new_norm;
        history.push(r_norm);
        if r_norm <= config.residual_tolerance * y_norm {
            converged = true;
            break;
        }
    }

    let mut magnitude = vec![0.0; n];
    let mut clipped = Vec::new();
    for (&c, &v) in support.iter().zip(&values) {
        if v < 0.0 {
            clipped.push((c, v));
        } else {
            magnitude[c] = v;
        }
    }
    let out_support: Vec<usize> = support.iter().copied().filter(|&c| magnitude[c] > 0.0).collect();
    let out_vals: Vec<f64> = out_support.iter().map(|&c| magnitude[c]).collect();
    let residual_norm = if clipped.is_empty() { r_norm } else { norm(&residual(system, &out_support, &out_vals)) };

    Ok(RecoveredSpectrum {
        magnitude,
        support: out_support,
        residual_norm,
        iterations,
        converged,
        rank_deficient,
        clipped,
        residual_history: history,
    })
}

/// Heuristic sparsity estimate: runs CoSaMP for `k = 1, 2, 4, …` up to
/// `max_sparsity` and stops at the first doubling that improves the residual
/// by less than 10%. Not part of the original method.
pub fn estimate_sparsity(system: &StackedSystem, max_sparsity: usize, base: &SparseRecoveryConfig) -> Result<usize> {
    let cap = max_sparsity.clamp(1, system.rows());
    let run = |k: usize| cosamp(system, &SparseRecoveryConfig { sparsity: k, ..*base }).map(|r| r.residual_norm);
    let mut k = 1;
    let mut prev = run(k)?;
    while k < cap {
        if prev <= base.residual_tolerance * norm(system.y()) {
            break;
        }
        let next_k = (2 * k).min(cap);
        let next = run(next_k)?;
        if next > 0.9 * prev {
            break;
        }
        k = next_k;
        prev = next;
    }
    Ok(k)
}

/// `(1/N)·Σ(|X̂| - |X|)²`.
pub fn recovery_mse(estimate: &RecoveredSpectrum, truth: &[f64]) -> Result<f64> {
    if estimate.magnitude.len() != truth.len() {
        return Err(MassError::Shape(format!(
            "estimate has {} bins, truth {}",
            estimate.magnitude.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = estimate
        .magnitude
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sse / truth.len() as f64)
}

/// `‖x̂ - x‖₂ / ‖x‖₂` (absolute error when `x = 0`).
pub fn relative_error(estimate: &[f64], truth: &[f64]) -> f64 {
    let diff: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let t = norm(truth);
    if t == 0.0 {
        diff
    } else {
        diff / t
    }
}

/// Positions where `truth` is nonzero, ascending.
pub fn support_of(truth: &[f64]) -> Vec<usize> {
    truth.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i).collect()
}
