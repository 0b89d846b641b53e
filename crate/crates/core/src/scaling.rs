//! Forward-time scaling of the mixing modes against dense attention.
//!
//! Each timing sample runs the operator enough times to last at least
//! [`MIN_SAMPLE_SECONDS`]; the reported time per forward is the median over
//! `repeats` samples taken after one warmup call. Eigendecomposition is
//! timed once per `n` and reported separately, never inside a mixing time.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::attention_baseline_forward;
use crate::chebyshev::chebyshev_fit;
use crate::error::{invalid, GwtError, Result};
use crate::filter_bank::{wavelet_mix, FilterBank, MixMode, DEFAULT_HIDDEN};
use crate::graph::{build_chain_graph, normalized_laplacian, symmetrize, NormalizedLaplacian};
use crate::matrix::DenseMatrix;
use crate::spectral::{apply_filter_exact, eigendecompose, truncate, EigenSystem, DEFAULT_TOL};

pub const MIN_SAMPLE_SECONDS: f64 = 2e-3;
/// Relative tolerance for outputs that should agree up to roundoff.
pub const ROUNDOFF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    Mix(MixMode),
    Attention,
}

impl BenchMode {
    pub fn label(&self) -> String {
        match self {
            BenchMode::Mix(m) => m.label(),
            BenchMode::Attention => "attention".into(),
        }
    }
}

impl FromStr for BenchMode {
    type Err = GwtError;

    /// `exact`, `truncated:M`, `chebyshev:P` or `attention`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let num = |default: usize| -> Result<usize> {
            arg.map_or(Ok(default), |a| {
                a.parse()
                    .map_err(|_| GwtError::InvalidArgument(format!("bad mode parameter in {s:?}")))
            })
        };
        let mode = match name {
            "exact" if arg.is_none() => BenchMode::Mix(MixMode::Exact),
            "truncated" => BenchMode::Mix(MixMode::Truncated(num(16)?)),
            "chebyshev" => BenchMode::Mix(MixMode::Chebyshev(num(16)?)),
            "attention" if arg.is_none() => BenchMode::Attention,
            _ => return invalid(format!("unknown bench mode {s:?}")),
        };
        if let BenchMode::Mix(m) = mode {
            m.validate()?;
        }
        Ok(mode)
    }
}

/// Peak-allocation hook. The benchmark resets it before one untimed call of
/// the operator and reads the peak afterwards.
pub trait AllocProbe {
    fn reset(&self);
    fn peak_bytes(&self) -> Option<u64>;
}

/// Reports allocation as unavailable.
pub struct NoAllocProbe;

impl AllocProbe for NoAllocProbe {
    fn reset(&self) {}
    fn peak_bytes(&self) -> Option<u64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    pub d: usize,
    pub k: usize,
    pub modes: Vec<BenchMode>,
    pub repeats: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.ns.iter().any(|&n| n < 8) {
            return invalid("bench sizes must be non-empty and each n >= 8");
        }
        if self.repeats < 3 {
            return invalid("bench needs at least 3 repeats");
        }
        if self.d == 0 || self.k == 0 || self.modes.is_empty() {
            return invalid("bench needs d, k >= 1 and at least one mode");
        }
        for m in &self.modes {
            if let BenchMode::Mix(MixMode::Truncated(m)) = m {
                if self.ns.iter().any(|n| m > n) {
                    return invalid(format!("truncated({m}) exceeds the smallest n"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub mode: String,
    /// Median seconds per forward call.
    pub seconds: f64,
    /// Eigendecomposition time for the spectral modes.
    pub eig_seconds: Option<f64>,
    /// Peak heap bytes allocated during one call of the timed operator.
    pub peak_alloc_bytes: Option<u64>,
    pub checksum: f64,
    /// Error against the mode's reference output, relative to its size.
    pub ref_error: f64,
    pub ref_tolerance: f64,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// Least-squares slope of `ln seconds` against `ln n`, per mode label.
    pub slopes: Vec<(String, f64)>,
}

impl BenchReport {
    pub fn slope(&self, label: &str) -> Option<f64> {
        self.slopes.iter().find(|(l, _)| l == label).map(|(_, s)| *s)
    }

    pub fn all_verified(&self) -> bool {
        self.records.iter().all(|r| r.verified)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "# peak_alloc_bytes counts heap bytes allocated by the timed operator only, not process memory\n\
             n,d,k,mode,seconds,eig_seconds,peak_alloc_bytes,checksum,ref_error,verified\n",
        );
        for r in &self.records {
            let eig = r.eig_seconds.map_or("".into(), |s| format!("{s:e}"));
            let alloc = r.peak_alloc_bytes.map_or("unavailable".into(), |b| b.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{:e},{},{},{:e},{:e},{}",
                r.n, r.d, r.k, r.mode, r.seconds, eig, alloc, r.checksum, r.ref_error, r.verified
            );
        }
        out
    }

    pub fn slopes_csv(&self) -> String {
        let mut out = String::from("mode,slope\n");
        for (m, s) in &self.slopes {
            let _ = writeln!(out, "{m},{s}");
        }
        out
    }
}

/// Position-weighted sum; equal outputs give equal checksums.
pub fn output_checksum(y: &DenseMatrix) -> f64 {
    let cols = y.cols();
    y.as_slice()
        .iter()
        .enumerate()
        .map(|(idx, v)| v * (1.0 + ((idx / cols) * 31 + (idx % cols) * 17) as f64 % 13.0 / 13.0))
        .sum()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn time_per_call(repeats: usize, mut op: impl FnMut() -> Result<DenseMatrix>) -> Result<f64> {
    let start = Instant::now();
    std::hint::black_box(op()?);
    let once = start.elapsed().as_secs_f64().max(1e-9);
    let iters = ((MIN_SAMPLE_SECONDS / once).ceil() as usize).max(1);
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        for _ in 0..iters {
            std::hint::black_box(op()?);
        }
        samples.push(start.elapsed().as_secs_f64() / iters as f64);
    }
    Ok(median(samples))
}

/// Per-filter composition `Σ_k U diag(g_k(λ)) Uᵀ X diag(α_k)`.
fn naive_mix(bank: &FilterBank, eig: &EigenSystem, x: &DenseMatrix) -> Result<DenseMatrix> {
    let mut y = DenseMatrix::zeros(x.rows(), x.cols());
    for (k, f) in bank.filters.iter().enumerate() {
        let h: Vec<f64> = eig.lambda().iter().map(|&l| f.eval_unchecked(l)).collect();
        y.add_assign(&apply_filter_exact(eig, &h, x)?.scale_columns(bank.alpha.row(k)));
    }
    Ok(y)
}

/// Column-wise bound `Σ_k ε_k |α_kj| ‖X_j‖₂` on the Chebyshev error, with
/// `ε_k` the sampled sup error of filter `k`'s fit. The sampled sup can
/// undershoot the true one slightly, hence the 1.5 factor at the call site.
fn chebyshev_bound(bank: &FilterBank, order: usize, x: &DenseMatrix) -> Result<Vec<f64>> {
    let mut bound = vec![0.0; x.cols()];
    for (k, f) in bank.filters.iter().enumerate() {
        let fit = chebyshev_fit(|l| f.eval_unchecked(l), order)?;
        for (j, b) in bound.iter_mut().enumerate() {
            let norm = x.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            *b += fit.max_error * bank.alpha.get(k, j).abs() * norm;
        }
    }
    Ok(bound)
}

fn naive_attention(x: &DenseMatrix, wq: &DenseMatrix, wk: &DenseMatrix, wv: &DenseMatrix) -> DenseMatrix {
    let (n, d) = x.shape();
    let (q, k, v) = (x.matmul(wq), x.matmul(wk), x.matmul(wv));
    let mut y = DenseMatrix::zeros(n, d);
    for i in 0..n {
        let s: Vec<f64> = (0..n)
            .map(|t| (0..d).map(|c| q.get(i, c) * k.get(t, c)).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = e.iter().sum();
        for c in 0..d {
            y.set(i, c, (0..n).map(|t| e[t] * v.get(t, c)).sum::<f64>() / z);
        }
    }
    y
}

struct Instance {
    lap: NormalizedLaplacian,
    eig: EigenSystem,
    eig_seconds: f64,
    bank: FilterBank,
    x: DenseMatrix,
    wq: DenseMatrix,
    wk: DenseMatrix,
    wv: DenseMatrix,
}

fn instance(n: usize, cfg: &BenchConfig) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lap = normalized_laplacian(&symmetrize(&build_chain_graph(n)?))?;
    let start = Instant::now();
    let eig = eigendecompose(&lap, DEFAULT_TOL)?;
    let eig_seconds = start.elapsed().as_secs_f64();
    let mut bank = FilterBank::init(cfg.k, cfg.d, DEFAULT_HIDDEN, &mut rng)?;
    bank.alpha = DenseMatrix::from_fn(cfg.k, cfg.d, |_, _| rng.gen_range(-1.0..=1.0));
    let x = DenseMatrix::from_fn(n, cfg.d, |_, _| rng.gen_range(-1.0..=1.0));
    let r = 1.0 / (cfg.d as f64).sqrt();
    let mut w = || DenseMatrix::from_fn(cfg.d, cfg.d, |_, _| rng.gen_range(-r..=r));
    let (wq, wk, wv) = (w(), w(), w());
    Ok(Instance {
        lap,
        eig,
        eig_seconds,
        bank,
        x,
        wq,
        wk,
        wv,
    })
}

fn run_mode(inst: &Instance, mode: BenchMode) -> Result<DenseMatrix> {
    match mode {
        BenchMode::Mix(m @ MixMode::Chebyshev(_)) => wavelet_mix(&inst.bank, None, &inst.x, m, Some(&inst.lap)),
        BenchMode::Mix(m) => wavelet_mix(&inst.bank, Some(&inst.eig), &inst.x, m, None),
        BenchMode::Attention => attention_baseline_forward(&inst.x, &inst.wq, &inst.wk, &inst.wv),
    }
}

/// Output check against the mode's reference. Returns `(error, tolerance)`,
/// both relative to the reference's largest entry.
fn verify(inst: &Instance, mode: BenchMode, y: &DenseMatrix) -> Result<(f64, f64)> {
    let rel = |r: &DenseMatrix| y.max_abs_diff(r) / r.max_abs().max(f64::MIN_POSITIVE);
    Ok(match mode {
        BenchMode::Mix(MixMode::Exact) => (rel(&naive_mix(&inst.bank, &inst.eig, &inst.x)?), ROUNDOFF_TOL),
        BenchMode::Mix(MixMode::Truncated(m)) => {
            let t = truncate(&inst.eig, m)?;
            (rel(&naive_mix(&inst.bank, &t, &inst.x)?), ROUNDOFF_TOL)
        }
        BenchMode::Mix(MixMode::Chebyshev(p)) => {
            // A column's 2-norm bound also bounds each of its entries.
            let exact = naive_mix(&inst.bank, &inst.eig, &inst.x)?;
            let bound = chebyshev_bound(&inst.bank, p, &inst.x)?;
            let scale = exact.max_abs().max(f64::MIN_POSITIVE);
            let worst = bound.iter().cloned().fold(0.0, f64::max);
            (rel(&exact), 1.5 * worst / scale + ROUNDOFF_TOL)
        }
        BenchMode::Attention => (
            rel(&naive_attention(&inst.x, &inst.wq, &inst.wk, &inst.wv)),
            ROUNDOFF_TOL,
        ),
    })
}

/// Times every mode at every `n` on chain graphs. Each record is checked
/// against a reference before its time is kept.
pub fn bench_scaling(cfg: &BenchConfig, probe: &dyn AllocProbe) -> Result<BenchReport> {
    cfg.validate()?;
    let mut records = Vec::new();
    for &n in &cfg.ns {
        let inst = instance(n, cfg)?;
        for &mode in &cfg.modes {
            probe.reset();
            let y = run_mode(&inst, mode)?;
            let peak_alloc_bytes = probe.peak_bytes();
            let (ref_error, ref_tolerance) = verify(&inst, mode, &y)?;
            let seconds = time_per_call(cfg.repeats, || run_mode(&inst, mode))?;
            let spectral = matches!(mode, BenchMode::Mix(MixMode::Exact | MixMode::Truncated(_)));
            records.push(BenchRecord {
                n,
                d: cfg.d,
                k: cfg.k,
                mode: mode.label(),
                seconds,
                eig_seconds: spectral.then_some(inst.eig_seconds),
                peak_alloc_bytes,
                checksum: output_checksum(&y),
                ref_error,
                ref_tolerance,
                verified: ref_error <= ref_tolerance,
            });
        }
    }
    let slopes = if cfg.ns.len() >= 2 {
        cfg.modes
            .iter()
            .map(|m| {
                let label = m.label();
                let pts: Vec<(f64, f64)> = records
                    .iter()
                    .filter(|r| r.mode == label)
                    .map(|r| (r.n as f64, r.seconds))
                    .collect();
                (label, loglog_slope(&pts))
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(BenchReport { records, slopes })
}
