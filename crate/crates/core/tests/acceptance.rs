//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its criterion.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mass_core::coherence::{
    mutual_coherence_with, overlap_probability_closed_form, overlap_probability_monte_carlo, prop2_success_bound,
    CoherenceMethod,
};
use mass_core::harness::{target_energies, EnergySamples, ResolvedScenario, Scenario};
use mass_core::recovery::{cosamp, SparseRecoveryConfig};
use mass_core::sampler::{is_prime, select_primes, SamplingPlan, StackedSystem};

fn report(id: u32, name: &str, pass: bool, detail: &str, started: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[acceptance] criterion {id} {verdict} {name}: {detail} ({:.1}s)", started.elapsed().as_secs_f64());
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> ResolvedScenario {
    Scenario::load(&scenarios_dir().join(format!("{name}.json"))).unwrap().resolve().unwrap()
}

fn row_position(n: usize, m: usize, pos: usize) -> usize {
    let bin = pos as i64 - (n / 2) as i64;
    (bin + (m / 2) as i64).rem_euclid(m as i64) as usize
}

/// Pairwise count of shared rows over all column pairs, from residues alone.
fn max_shared_rows(n: usize, primes: &[usize]) -> usize {
    let rows: Vec<Vec<usize>> = primes.iter().map(|&m| (0..n).map(|p| row_position(n, m, p)).collect()).collect();
    let mut best = 0;
    for a in 0..n {
        for b in a + 1..n {
            let shared = rows.iter().filter(|r| r[a] == r[b]).count();
            best = best.max(shared);
        }
    }
    best
}

fn primes_below(n: usize) -> Vec<usize> {
    (2..n).filter(|&p| is_prime(p)).collect()
}

fn pairwise_ok(n: usize, primes: &[usize]) -> bool {
    primes.iter().enumerate().all(|(i, &a)| primes[i + 1..].iter().all(|&b| a != b && a * b > n))
}

fn check_plan(n: usize, primes: &[usize]) -> Result<(), String> {
    let v = primes.len();
    let oracle = max_shared_rows(n, primes);
    if oracle != 1 {
        return Err(format!("N={n} {primes:?}: oracle max shared rows {oracle}"));
    }
    let plan = SamplingPlan::new(n, 1.0, primes.to_vec()).map_err(|e| e.to_string())?;
    let sys = StackedSystem::new(&plan, vec![0.0; plan.total_samples()]).map_err(|e| e.to_string())?;
    for method in [CoherenceMethod::BruteForce, CoherenceMethod::CollisionCount] {
        let r = mutual_coherence_with(&sys, method).map_err(|e| e.to_string())?;
        if r.max_shared != 1 || r.mu != 1.0 / v as f64 {
            return Err(format!("N={n} {primes:?} {method:?}: max_shared {} mu {}", r.max_shared, r.mu));
        }
    }
    Ok(())
}

#[test]
fn criterion_1_coherence_exactness() {
    let started = Instant::now();
    let grid = [60usize, 150, 210, 450];
    let mut checked = 0usize;
    let mut failure = None;

    for &n in &grid {
        for v in 2..=5 {
            let plan = select_primes(n, v, 1.0).unwrap();
            if let Err(e) = check_plan(n, plan.branch_lengths()) {
                failure.get_or_insert(e);
            }
            checked += 1;
        }
    }

    let strategy = (0..grid.len(), 2usize..=5, any::<u64>()).prop_filter_map("no valid plan", move |(gi, v, salt)| {
        let n = grid[gi];
        let pool = primes_below(n);
        let mut rng = ChaCha8Rng::seed_from_u64(salt);
        for _ in 0..200 {
            let mut picked: Vec<usize> = Vec::new();
            for _ in 0..v {
                let p = pool[rng.random_range(0..pool.len())];
                if !picked.contains(&p) {
                    picked.push(p);
                }
            }
            if picked.len() == v && pairwise_ok(n, &picked) {
                return Some((n, picked));
            }
        }
        None
    });
    let mut runner = TestRunner::new(Config { cases: 256, failure_persistence: None, ..Config::default() });
    let outcome = runner.run(&strategy, |(n, primes)| {
        check_plan(n, &primes).map_err(TestCaseError::fail)?;
        Ok(())
    });
    if let Err(e) = outcome {
        failure.get_or_insert(e.to_string());
    }
    checked += 256;

    let pass = failure.is_none();
    let detail = failure.unwrap_or_else(|| format!("mu = 1/v exactly on {checked} plans"));
    report(1, "mutual coherence equals 1/v", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 30);
}

/// Exact-recovery count over `trials` noiseless instances. Measurements are
/// built here from residues, independent of the library operator.
fn exact_recoveries(n: usize, k: usize, plan: &SamplingPlan, trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0;
    for _ in 0..trials {
        let mut x = vec![0.0; n];
        let mut support: Vec<usize> = Vec::new();
        while support.len() < k {
            let p = rng.random_range(0..n);
            if !support.contains(&p) {
                support.push(p);
            }
        }
        support.sort_unstable();
        for &p in &support {
            x[p] = rng.random_range(0.5..2.0);
        }
        let mut y = Vec::new();
        for &m in plan.branch_lengths() {
            let mut block = vec![0.0; m];
            for (p, &val) in x.iter().enumerate() {
                block[row_position(n, m, p)] += val;
            }
            y.extend(block);
        }
        let sys = StackedSystem::new(plan, y).unwrap();
        let rec = cosamp(&sys, &SparseRecoveryConfig::new(k)).unwrap();
        let found: Vec<usize> = (0..n).filter(|&p| rec.magnitude[p] > 0.0).collect();
        let err: f64 = x.iter().zip(&rec.magnitude).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if found == support && err / norm < 1e-6 {
            ok += 1;
        }
    }
    ok
}

#[test]
fn criterion_2_noiseless_exact_recovery() {
    let started = Instant::now();
    let n = 1000;
    let mut parts = Vec::new();
    let mut pass = true;
    for k in 1..=4 {
        let plan = select_primes(n, 2 * k, 1.0).unwrap();
        let ok = exact_recoveries(n, k, &plan, 100, 1000 + k as u64);
        pass &= ok == 100;
        parts.push(format!("k={k}: {ok}/100"));
    }
    let detail = parts.join(", ");
    report(2, "exact recovery with v = 2k", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 60);
}

/// `Pr(X <= 1)` for `X ~ Binomial(c, p)` by direct summation.
fn at_most_one(c: usize, p: f64) -> f64 {
    (0..=1usize)
        .map(|j| {
            let choose = if j == 0 { 1.0 } else { c as f64 };
            choose * p.powi(j as i32) * (1.0 - p).powi((c - j) as i32)
        })
        .sum()
}

#[test]
fn criterion_3_overlap_probability() {
    let started = Instant::now();
    let trials = 100_000;
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in [31usize, 37] {
        for k in [2usize, 5, 10] {
            let n = 1024;
            let closed = overlap_probability_closed_form(k, n, m);
            let oracle = at_most_one(n.div_ceil(m), k as f64 / n as f64);
            let est = overlap_probability_monte_carlo(k, n, m, trials, &mut rng);
            let sigma3 = 3.0 * (closed * (1.0 - closed) / trials as f64).sqrt();
            let ok = (closed - oracle).abs() < 1e-12 && (est.value - closed).abs() <= sigma3;
            pass &= ok;
            parts.push(format!("M={m} k={k}: {closed:.5} vs {:.5}", est.value));
        }
    }
    let far = overlap_probability_closed_form(10, 10_000, 101);
    pass &= far >= 0.99;
    parts.push(format!("k=10 N=1e4 M=101: {far:.5}"));
    let detail = parts.join("; ");
    report(3, "overlap probability closed form vs Monte Carlo", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 30);
}

#[test]
fn criterion_4_success_bound() {
    let started = Instant::now();
    let n = 1000;
    let trials = 500;
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [2usize, 3] {
        for v in [2 * k - 1, 2 * k - 2] {
            let plan = select_primes(n, v, 1.0).unwrap();
            let inv: f64 = plan.branch_lengths().iter().map(|&m| 1.0 / m as f64).sum();
            let bound = (1.0 - (2 * k - 1) as f64 / v as f64 * inv).max(0.0);
            assert!((bound - prop2_success_bound(k, &plan)).abs() < 1e-12);
            let rate = exact_recoveries(n, k, &plan, trials, 4000 + 10 * k as u64 + v as u64) as f64 / trials as f64;
            let ok = rate >= bound - 0.05;
            pass &= ok;
            parts.push(format!("k={k} v={v}: rate {rate:.3} bound {bound:.3}{}", if ok { "" } else { " (below)" }));
        }
    }
    let detail = parts.join("; ");
    report(4, "empirical rate >= bound - 0.05", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 300);
}

/// Detection probability at the `(1 - pfa)` H0 quantile, computed here from
/// the raw energies.
fn pd_at(e: &EnergySamples, pfa: f64) -> f64 {
    let mut h0 = e.h0.clone();
    h0.sort_by(f64::total_cmp);
    let h = (1.0 - pfa) * (h0.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(h0.len() - 1);
    let lambda = h0[lo] + (h - lo as f64) * (h0[hi] - h0[lo]);
    e.h1.iter().filter(|&&x| x > lambda).count() as f64 / e.h1.len() as f64
}

fn pd_of(name: &str, pfa: f64) -> f64 {
    pd_at(&target_energies(&load(name)).unwrap(), pfa)
}

#[test]
fn criterion_5_fading_ordering() {
    let started = Instant::now();
    let at = |snr: u32| -> Vec<f64> {
        ["awgn", "rayleigh", "shadow"].iter().map(|c| pd_of(&format!("fig4b_{c}_{snr}db"), 0.1)).collect()
    };
    let p5 = at(5);
    let p0 = at(0);
    let ordered = p5[0] >= p5[1] - 0.03 && p5[1] >= p5[2] - 0.03;
    let spread = p0.iter().cloned().fold(f64::MIN, f64::max) - p0.iter().cloned().fold(f64::MAX, f64::min);
    let pass = ordered && spread <= 0.05;
    let p15 = at(15);
    let detail = format!(
        "5 dB awgn/rayleigh/shadow {:.3}/{:.3}/{:.3}; 0 dB {:.3}/{:.3}/{:.3} spread {spread:.3}; 15 dB (info) {:.3}/{:.3}/{:.3}",
        p5[0], p5[1], p5[2], p0[0], p0[1], p0[2], p15[0], p15[1], p15[2]
    );
    report(5, "fading ordering at pfa 0.1", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 600);
}

#[test]
fn criterion_6_asynchrony_robustness() {
    let started = Instant::now();
    let sync = target_energies(&load("fig4a_sync")).unwrap();
    let asynchronous = target_energies(&load("fig4a_async")).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for pfa in [0.05, 0.1, 0.2] {
        let (a, b) = (pd_at(&sync, pfa), pd_at(&asynchronous, pfa));
        pass &= (a - b).abs() < 0.05;
        parts.push(format!("pfa {pfa}: sync {a:.3} async {b:.3}"));
    }
    let detail = parts.join("; ");
    report(6, "sync vs async Pd", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 600);
}

#[test]
fn criterion_7_compression_trend() {
    let started = Instant::now();
    let names = ["fig3a_compression_v12", "fig3a_compression_v17", "fig3a_compression_v22"];
    let ctxs: Vec<ResolvedScenario> = names.iter().map(|n| load(n)).collect();
    let k = ctxs[0].recovery.sparsity;
    let ratios: Vec<f64> = ctxs.iter().map(|c| c.plan.sum_ratio()).collect();
    let pds: Vec<f64> = ctxs.iter().map(|c| pd_at(&target_energies(c).unwrap(), 0.1)).collect();
    let same_k = ctxs.iter().all(|c| c.recovery.sparsity == k);
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    let monotone = pds.windows(2).all(|w| w[1] >= w[0] - 0.03);
    let pass = same_k && increasing && monotone;
    let detail = format!(
        "k={k}; ratio {:.3}/{:.3}/{:.3} -> Pd {:.3}/{:.3}/{:.3}",
        ratios[0], ratios[1], ratios[2], pds[0], pds[1], pds[2]
    );
    report(7, "compression ratio vs Pd", pass, &detail, started);
    assert!(pass, "{detail}");
    assert!(started.elapsed().as_secs() < 600);
}

fn run_cli(threads: &str, out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_mass"))
        .args(["run", "--config"])
        .arg(scenarios_dir().join("fig4b_shadow_15db.json"))
        .args(["--trials", "40", "--seed", "9", "--out"])
        .arg(out)
        .env("MASS_THREADS", threads)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

#[test]
fn criterion_8_thread_count_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    run_cli("1", &one);
    run_cli("4", &four);
    let mut files: Vec<String> = std::fs::read_dir(&one)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    let identical = !files.is_empty()
        && files.iter().all(|f| std::fs::read(one.join(f)).unwrap() == std::fs::read(four.join(f)).unwrap());
    let detail = format!("{} files compared: {}", files.len(), files.join(", "));
    report(8, "byte-identical CSVs across MASS_THREADS", identical, &detail, started);
    assert!(identical, "{detail}");
}
