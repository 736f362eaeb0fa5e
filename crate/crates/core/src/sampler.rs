//! Multi-rate branch planning, aliasing matrices and the stacked measurement system.
//!
//! Branch `i` collects `M_i` samples over the observation window, so its
//! `M_i`-point DFT folds the `N` Nyquist bins onto `M_i` rows: centered bin
//! `n` lands on the centered row `m` with `n ≡ m (mod M_i)`. Stacking the
//! scaled branch magnitudes `(N/M_i)|Y_i|` gives `y = Φ|X|` whenever no two
//! occupied bins share a row.

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{MassError, Result};

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime `>= n`.
pub fn next_prime(n: usize) -> usize {
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// Whether centered bins `a` and `b` fold onto the same row of an `m`-row branch.
pub fn collides(m: usize, a: i64, b: i64) -> bool {
    (a - b).rem_euclid(m as i64) == 0
}

/// Branch lengths `M_1..M_v` for an `N`-bin Nyquist grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan")]
pub struct SamplingPlan {
    nyquist_n: usize,
    observation_s: f64,
    branch_lengths: Vec<usize>,
}

#[derive(Deserialize)]
struct RawPlan {
    nyquist_n: usize,
    #[serde(default = "one")]
    observation_s: f64,
    branch_lengths: Vec<usize>,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawPlan> for SamplingPlan {
    type Error = MassError;

    fn try_from(raw: RawPlan) -> Result<Self> {
        SamplingPlan::new(raw.nyquist_n, raw.observation_s, raw.branch_lengths)
    }
}

impl SamplingPlan {
    /// Builds and fully validates a plan: distinct primes below `N` with every
    /// pairwise product above `N`.
    pub fn new(nyquist_n: usize, observation_s: f64, branch_lengths: Vec<usize>) -> Result<Self> {
        let plan = Self::unchecked(nyquist_n, observation_s, branch_lengths)?;
        plan.check_pairwise()?;
        Ok(plan)
    }

    /// Builds a plan that only satisfies the structural requirements (distinct
    /// primes, `1 < M_i < N`) without the pairwise product condition.
    pub fn unchecked(nyquist_n: usize, observation_s: f64, branch_lengths: Vec<usize>) -> Result<Self> {
        if branch_lengths.is_empty() {
            return Err(MassError::Plan("at least one branch is required".into()));
        }
        if !(observation_s > 0.0) {
            return Err(MassError::Plan(format!("observation time must be positive, got {observation_s}")));
        }
        for (i, &m) in branch_lengths.iter().enumerate() {
            if !is_prime(m) {
                return Err(MassError::Plan(format!("branch {i}: M = {m} is not prime")));
            }
            if m >= nyquist_n {
                return Err(MassError::Plan(format!("branch {i}: M = {m} is not below N = {nyquist_n}")));
            }
            if branch_lengths[..i].contains(&m) {
                return Err(MassError::Plan(format!("branch {i}: M = {m} repeated")));
            }
        }
        Ok(SamplingPlan { nyquist_n, observation_s, branch_lengths })
    }

    /// First pair `(M_l, M_z)` with `M_l·M_z <= N`, if any.
    pub fn pairwise_violation(&self) -> Option<(usize, usize)> {
        let m = &self.branch_lengths;
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                if m[i] * m[j] <= self.nyquist_n {
                    return Some((m[i], m[j]));
                }
            }
        }
        None
    }

    pub fn check_pairwise(&self) -> Result<()> {
        match self.pairwise_violation() {
            Some((a, b)) => Err(MassError::Plan(format!(
                "M = {a} and M = {b}: product {} does not exceed N = {}",
                a * b,
                self.nyquist_n
            ))),
            None => Ok(()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.pairwise_violation().is_none()
    }

    pub fn with_observation(mut self, observation_s: f64) -> Self {
        self.observation_s = observation_s;
        self
    }

    pub fn nyquist_n(&self) -> usize {
        self.nyquist_n
    }

    pub fn observation_s(&self) -> f64 {
        self.observation_s
    }

    pub fn branch_lengths(&self) -> &[usize] {
        &self.branch_lengths
    }

    pub fn branches(&self) -> usize {
        self.branch_lengths.len()
    }

    /// Branch sampling rates `f_i = M_i / T`.
    pub fn rates_hz(&self) -> Vec<f64> {
        self.branch_lengths.iter().map(|&m| m as f64 / self.observation_s).collect()
    }

    pub fn total_samples(&self) -> usize {
        self.branch_lengths.iter().sum()
    }

    /// `ΣM_i / N`; the compression ratio used in reports.
    pub fn sum_ratio(&self) -> f64 {
        self.total_samples() as f64 / self.nyquist_n as f64
    }

    /// `ΣM_i / (v·N)`.
    pub fn mean_ratio(&self) -> f64 {
        self.sum_ratio() / self.branches() as f64
    }

    /// Undersampling factors `D_l = N / M_l`.
    pub fn undersampling_factors(&self) -> Vec<f64> {
        self.branch_lengths.iter().map(|&m| self.nyquist_n as f64 / m as f64).collect()
    }

    pub fn alias_matrices(&self) -> Vec<AliasMatrix> {
        self.branch_lengths
            .iter()
            .map(|&m| build_alias_matrix(m, self.nyquist_n))
            .collect()
    }
}

/// First prime at or above `scale·√N` and its `v - 1` successors.
pub fn select_primes(nyquist_n: usize, v: usize, scale: f64) -> Result<SamplingPlan> {
    if v == 0 {
        return Err(MassError::Plan("need at least one branch".into()));
    }
    let start = scale * (nyquist_n as f64).sqrt();
    if !(scale >= 1.0) || start < 2.0 {
        return Err(MassError::Plan(format!(
            "scale a = {scale} with N = {nyquist_n} gives a·√N = {start}; need a >= 1 and a·√N >= 2"
        )));
    }
    let mut primes = Vec::with_capacity(v);
    let mut p = next_prime(start.ceil() as usize);
    for _ in 0..v {
        primes.push(p);
        p = next_prime(p + 1);
    }
    SamplingPlan::new(nyquist_n, 1.0, primes)
}

/// Binary aliasing operator of one branch, stored as its column-to-row map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasMatrix {
    rows: usize,
    cols: usize,
    column_to_row: Vec<usize>,
}

/// Builds `Φ_i` for `M_i = m` rows and `N = n` columns.
pub fn build_alias_matrix(m: usize, n: usize) -> AliasMatrix {
    assert!(m > 1 && m < n, "alias matrix needs 1 < M < N (M = {m}, N = {n})");
    let half = (m / 2) as i64;
    let column_to_row = (0..n)
        .map(|pos| (dft::fold(m, dft::bin_at(n, pos)) + half) as usize)
        .collect();
    AliasMatrix { rows: m, cols: n, column_to_row }
}

impl AliasMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row position (0-based) hit by column position `col`.
    pub fn row_of(&self, col: usize) -> usize {
        self.column_to_row[col]
    }

    pub fn column_to_row(&self) -> &[usize] {
        &self.column_to_row
    }

    /// Centered row index for centered Nyquist bin `bin`.
    pub fn row_of_bin(&self, bin: i64) -> Option<i64> {
        dft::position_of(self.cols, bin)
            .map(|pos| dft::bin_at(self.rows, self.column_to_row[pos]))
    }

    /// Whether two column positions share a row.
    pub fn same_row(&self, a: usize, b: usize) -> bool {
        self.column_to_row[a] == self.column_to_row[b]
    }

    pub fn row_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.rows];
        for &r in &self.column_to_row {
            counts[r] += 1;
        }
        counts
    }

    pub fn dense(&self) -> Vec<Vec<u8>> {
        let mut out = vec![vec![0u8; self.cols]; self.rows];
        for (c, &r) in self.column_to_row.iter().enumerate() {
            out[r][c] = 1;
        }
        out
    }

    /// Writes the dense 0/1 matrix as headerless CSV, one matrix row per line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.dense() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// One branch's DFT in centered bin order.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchMeasurement {
    pub length: usize,
    pub dft: Vec<Complex64>,
    pub magnitude: Vec<f64>,
}

pub fn branch_dft(samples: &[f64]) -> Result<BranchMeasurement> {
    if samples.is_empty() {
        return Err(MassError::EmptySample);
    }
    let dft = dft::centered_dft(samples);
    let magnitude = dft.iter().map(|c| c.norm()).collect();
    Ok(BranchMeasurement { length: samples.len(), dft, magnitude })
}

/// `y = Φ|X|`: scaled branch magnitudes over the stacked aliasing blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    nyquist_n: usize,
    y: Vec<f64>,
    phi: Vec<AliasMatrix>,
    offsets: Vec<usize>,
}

pub fn stack_measurements(plan: &SamplingPlan, branches: &[BranchMeasurement]) -> Result<StackedSystem> {
    if branches.len() != plan.branches() {
        return Err(MassError::Shape(format!(
            "{} branch measurements for a {}-branch plan",
            branches.len(),
            plan.branches()
        )));
    }
    let n = plan.nyquist_n() as f64;
    let mut y = Vec::with_capacity(plan.total_samples());
    for (i, (b, &m)) in branches.iter().zip(plan.branch_lengths()).enumerate() {
        if b.length != m || b.magnitude.len() != m {
            return Err(MassError::Shape(format!(
                "branch {i}: {} samples, plan expects {m}",
                b.magnitude.len()
            )));
        }
        let scale = n / m as f64;
        y.extend(b.magnitude.iter().map(|v| v * scale));
    }
    StackedSystem::new(plan, y)
}

impl StackedSystem {
    /// Pairs a measurement vector with the plan's aliasing blocks.
    pub fn new(plan: &SamplingPlan, y: Vec<f64>) -> Result<Self> {
        if y.len() != plan.total_samples() {
            return Err(MassError::Shape(format!(
                "measurement length {} but plan has {} rows",
                y.len(),
                plan.total_samples()
            )));
        }
        let mut offsets = Vec::with_capacity(plan.branches());
        let mut acc = 0;
        for &m in plan.branch_lengths() {
            offsets.push(acc);
            acc += m;
        }
        Ok(StackedSystem { nyquist_n: plan.nyquist_n(), y, phi: plan.alias_matrices(), offsets })
    }

    /// Noiseless measurements `Φx` of a given magnitude vector.
    pub fn measure(plan: &SamplingPlan, x: &[f64]) -> Result<Self> {
        let mut sys = Self::new(plan, vec![0.0; plan.total_samples()])?;
        sys.y = sys.apply(x)?;
        Ok(sys)
    }

    pub fn nyquist_n(&self) -> usize {
        self.nyquist_n
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn branches(&self) -> usize {
        self.phi.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn blocks(&self) -> &[AliasMatrix] {
        &self.phi
    }

    pub fn branch_lengths(&self) -> Vec<usize> {
        self.phi.iter().map(|b| b.rows()).collect()
    }

    /// Copy with every measurement multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.y.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Stacked row indices of column `col`, one per branch.
    pub fn column_rows(&self, col: usize) -> impl Iterator<Item = usize> + '_ {
        self.phi
            .iter()
            .zip(&self.offsets)
            .map(move |(b, &off)| off + b.row_of(col))
    }

    /// Number of branches in which columns `a` and `b` share a row.
    pub fn shared_rows(&self, a: usize, b: usize) -> usize {
        self.phi.iter().filter(|blk| blk.same_row(a, b)).count()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nyquist_n {
            return Err(MassError::Shape(format!("x has length {}, expected {}", x.len(), self.nyquist_n)));
        }
        let mut out = vec![0.0; self.rows()];
        for (col, &v) in x.iter().enumerate() {
            if v != 0.0 {
                for r in self.column_rows(col) {
                    out[r] += v;
                }
            }
        }
        Ok(out)
    }

    /// `Φᵀ r` over all `N` columns.
    pub fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        debug_assert_eq!(r.len(), self.rows());
        let mut out = vec![0.0; self.nyquist_n];
        for (blk, &off) in self.phi.iter().zip(&self.offsets) {
            let seg = &r[off..off + blk.rows()];
            for (o, &row) in out.iter_mut().zip(blk.column_to_row()) {
                *o += seg[row];
            }
        }
        out
    }

    /// Dense stacked matrix, `ΣM_i` rows by `N` columns.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.nyquist_n]; self.rows()];
        for col in 0..self.nyquist_n {
            for r in self.column_rows(col) {
                out[r][col] = 1.0;
            }
        }
        out
    }
}
