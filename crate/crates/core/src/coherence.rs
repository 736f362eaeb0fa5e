//! Coherence of the stacked aliasing matrix and the recovery-probability
//! quantities that go with it.
//!
//! Columns of `Φ` carry exactly `v` ones, so the normalized inner product of
//! two columns is (shared rows)/v, and the shared-row count of bins `n`, `h`
//! only depends on which `M_i` divide `n - h`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MassError, Result};
use crate::recovery::{cosamp, relative_error, support_of, SparseRecoveryConfig};
use crate::rng::{stream, Purpose};
use crate::sampler::{build_alias_matrix, SamplingPlan, StackedSystem};

/// Largest `N` accepted by the pairwise brute-force coherence.
pub const BRUTE_FORCE_CAP: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub mu: f64,
    pub predicted_mu: f64,
    /// Column positions achieving `mu` (first pair in scan order).
    pub max_pair: (usize, usize),
    /// Branches in which `max_pair` shares a row; `mu = max_shared / v`.
    pub max_shared: usize,
    pub branches: usize,
    /// `D_l = N / M_l`.
    pub undersampling_factors: Vec<f64>,
    /// Probability that a random column pair collides in branch `l`,
    /// `(N - M_l) / (M_l (N - 1))`.
    pub pair_collision_probabilities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoherenceMethod {
    /// Pairwise normalized inner products over all column pairs, `O(N²·v)`.
    BruteForce,
    /// Maximum over bin differences of the number of dividing `M_i`, `O(N·v)`.
    CollisionCount,
    /// Brute force up to [`BRUTE_FORCE_CAP`], collision count above.
    Auto,
}

/// Exact mutual coherence by pairwise brute force; rejects `N` above the cap.
pub fn mutual_coherence(system: &StackedSystem) -> Result<CoherenceReport> {
    mutual_coherence_with(system, CoherenceMethod::BruteForce)
}

pub fn mutual_coherence_with(system: &StackedSystem, method: CoherenceMethod) -> Result<CoherenceReport> {
    let n = system.nyquist_n();
    let lengths = system.branch_lengths();
    let (max_shared, max_pair) = match method {
        CoherenceMethod::BruteForce => {
            if n > BRUTE_FORCE_CAP {
                return Err(MassError::CapExceeded { n, cap: BRUTE_FORCE_CAP });
            }
            brute_force(system)
        }
        CoherenceMethod::CollisionCount => collision_count(&lengths, n),
        CoherenceMethod::Auto if n <= BRUTE_FORCE_CAP => brute_force(system),
        CoherenceMethod::Auto => collision_count(&lengths, n),
    };
    let v = lengths.len();
    let mu = match method {
        CoherenceMethod::BruteForce => brute_force_mu(system, max_pair),
        _ => max_shared as f64 / v as f64,
    };
    Ok(CoherenceReport {
        mu,
        predicted_mu: 1.0 / v as f64,
        max_pair,
        max_shared,
        branches: v,
        undersampling_factors: lengths.iter().map(|&m| n as f64 / m as f64).collect(),
        pair_collision_probabilities: lengths
            .iter()
            .map(|&m| (n - m) as f64 / (m as f64 * (n - 1) as f64))
            .collect(),
    })
}

/// Normalized inner product of two columns, from their row lists.
fn column_inner_product(system: &StackedSystem, a: usize, b: usize) -> f64 {
    let ra: Vec<usize> = system.column_rows(a).collect();
    let rb: Vec<usize> = system.column_rows(b).collect();
    let dot: f64 = ra
        .iter()
        .map(|r| if rb.contains(r) { 1.0 } else { 0.0 })
        .sum();
    dot / ((ra.len() * rb.len()) as f64).sqrt()
}

fn brute_force_mu(system: &StackedSystem, pair: (usize, usize)) -> f64 {
    if system.nyquist_n() < 2 {
        return 0.0;
    }
    column_inner_product(system, pair.0, pair.1)
}

fn brute_force(system: &StackedSystem) -> (usize, (usize, usize)) {
    let n = system.nyquist_n();
    let rows: Vec<Vec<usize>> = (0..n).map(|c| system.column_rows(c).collect()).collect();
    let mut best = (0usize, (0usize, 1usize.min(n.saturating_sub(1))));
    for a in 0..n {
        for b in a + 1..n {
            let shared = rows[a].iter().zip(&rows[b]).filter(|(x, y)| x == y).count();
            if shared > best.0 {
                best = (shared, (a, b));
            }
        }
    }
    best
}

fn collision_count(lengths: &[usize], n: usize) -> (usize, (usize, usize)) {
    let mut best = (0usize, (0usize, 1usize.min(n.saturating_sub(1))));
    for d in 1..n {
        let shared = lengths.iter().filter(|&&m| d % m == 0).count();
        if shared > best.0 {
            best = (shared, (0, d));
        }
    }
    best
}

/// `1 - ((2k-1)/v)·Σ 1/M_i` as an exact rational, clamped below at zero.
pub fn prop2_success_bound_exact(k: usize, plan: &SamplingPlan) -> BigRational {
    let v = plan.branches();
    let sum = plan
        .branch_lengths()
        .iter()
        .fold(BigRational::zero(), |acc, &m| acc + BigRational::new(BigInt::one(), BigInt::from(m)));
    let factor = BigRational::new(BigInt::from(2 * k as i64 - 1), BigInt::from(v));
    let bound = BigRational::one() - factor * sum;
    if bound < BigRational::zero() {
        BigRational::zero()
    } else {
        bound
    }
}

/// Lower bound on the probability of successful recovery with `v < 2k` branches.
pub fn prop2_success_bound(k: usize, plan: &SamplingPlan) -> f64 {
    assert!(k >= 1, "sparsity must be >= 1");
    prop2_success_bound_exact(k, plan).to_f64().unwrap_or(0.0)
}

/// Probability that at most one of the `⌈N/M⌉` bins folding onto a row is
/// occupied, when each bin is occupied with probability `k/N`.
pub fn overlap_probability_closed_form(k: usize, n: usize, m: usize) -> f64 {
    assert!(m > 0 && m < n && k <= n, "need 0 < M < N and k <= N");
    let c = n.div_ceil(m) as i32;
    let p = k as f64 / n as f64;
    let q = 1.0 - p;
    q.powi(c) + c as f64 * p * q.powi(c - 1)
}

/// The `M = √N` simplification of [`overlap_probability_closed_form`].
pub fn overlap_probability_sqrt_form(k: usize, n: usize) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    let root = nf.sqrt();
    ((nf - kf) / nf).powf(root) * (nf - kf + kf * root) / (nf - kf)
}

/// Per-branch no-overlap probabilities and their product. The product treats
/// branches as independent, which is a heuristic.
pub fn overlap_probability_all_branches(k: usize, plan: &SamplingPlan) -> (Vec<f64>, f64) {
    let per: Vec<f64> = plan
        .branch_lengths()
        .iter()
        .map(|&m| overlap_probability_closed_form(k, plan.nyquist_n(), m))
        .collect();
    let product = per.iter().product();
    (per, product)
}

/// An empirical frequency with its 3σ binomial half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
    pub successes: usize,
    pub trials: usize,
}

impl Estimate {
    pub fn from_counts(successes: usize, trials: usize) -> Self {
        let p = successes as f64 / trials as f64;
        Estimate {
            value: p,
            half_width: 3.0 * (p * (1.0 - p) / trials as f64).sqrt(),
            successes,
            trials,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.value - x).abs() <= self.half_width
    }
}

/// Monte-Carlo estimate of the no-overlap probability: occupies every bin
/// independently with probability `k/N` and counts the occupants of one row
/// that collects `⌈N/M⌉` bins.
pub fn overlap_probability_monte_carlo<R: Rng>(k: usize, n: usize, m: usize, trials: usize, rng: &mut R) -> Estimate {
    assert!(trials >= 1, "need at least one trial");
    if k == 0 {
        return Estimate::from_counts(trials, trials);
    }
    let alias = build_alias_matrix(m, n);
    let full = n.div_ceil(m);
    let counts = alias.row_counts();
    let row = counts.iter().position(|&c| c == full).expect("some row has ceil(N/M) members");
    let members = counts[row];
    let p = k as f64 / n as f64;
    let mut ok = 0;
    for _ in 0..trials {
        let mut occupied = 0;
        for _ in 0..members {
            if rng.random::<f64>() < p {
                occupied += 1;
            }
        }
        if occupied < 2 {
            ok += 1;
        }
    }
    Estimate::from_counts(ok, trials)
}

/// Draws a `k`-sparse nonnegative magnitude vector: uniform support, values
/// uniform in `[1, 2)`.
pub fn random_sparse_magnitude<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for pos in rand::seq::index::sample(rng, n, k) {
        x[pos] = rng.random_range(1.0..2.0);
    }
    x
}

/// Whether `estimate` recovers `truth` with the same support and relative
/// ℓ2 error below `1e-6`.
pub fn is_exact_recovery(estimate: &[f64], truth: &[f64]) -> bool {
    support_of(estimate) == support_of(truth) && relative_error(estimate, truth) < 1e-6
}

/// Fraction of random noiseless `k`-sparse instances `y = Φx` that CoSaMP
/// recovers exactly under `plan`. Trial `t` draws from stream `(seed, Instance, 0, t)`.
pub fn empirical_recovery_probability(k: usize, plan: &SamplingPlan, trials: usize, seed: u64) -> Result<Estimate> {
    if trials == 0 {
        return Err(MassError::Config("need at least one trial".into()));
    }
    if k == 0 {
        return Ok(Estimate::from_counts(trials, trials));
    }
    let config = SparseRecoveryConfig::new(k);
    let outcomes: Vec<Result<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Purpose::Instance, 0, t);
            let x = random_sparse_magnitude(plan.nyquist_n(), k, &mut rng);
            let sys = StackedSystem::measure(plan, &x)?;
            let rec = cosamp(&sys, &config)?;
            Ok(is_exact_recovery(&rec.magnitude, &x))
        })
        .collect();
    let mut ok = 0;
    for o in outcomes {
        if o? {
            ok += 1;
        }
    }
    Ok(Estimate::from_counts(ok, trials))
}

/// One line of a coherence report CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceRow {
    pub plan_id: String,
    pub v: usize,
    pub mu: f64,
    pub predicted_mu: f64,
    pub bound: f64,
    pub empirical_rate: f64,
}

pub fn write_coherence_csv<W: std::io::Write>(rows: &[CoherenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
