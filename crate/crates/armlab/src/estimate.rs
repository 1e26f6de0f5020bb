//! Monte Carlo estimation, exponent extraction, and the sequence-fit and
//! stability diagnostics built on top of the arm detectors.

use std::sync::Arc;

use rayon::prelude::*;

use crate::arms::{ArmEventSpec, Family};
use crate::error::ArmlabError;
use crate::lattice::DiscDomain;
use crate::percolation::{Configuration, RngStream};

/// Samples per parallel work unit; the estimate is a pure function of
/// `(seed, sample index)`, so the chunking never shows in the numbers.
const CHUNK: u64 = 4096;

#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub p_hat: f64,
    pub n_samples: u64,
    pub stderr: f64,
    pub seed: u64,
}

impl Estimate {
    pub fn from_counts(hits: u64, n: u64, seed: u64) -> Estimate {
        let p = hits as f64 / n as f64;
        Estimate {
            p_hat: p,
            n_samples: n,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            seed,
        }
    }

    /// Relative standard error (guarded for p_hat = 0).
    pub fn rel_err(&self) -> f64 {
        if self.p_hat > 0.0 {
            self.stderr / self.p_hat
        } else {
            f64::INFINITY
        }
    }
}

/// The smallest natural ambient domain for an event: its own region for the
/// half-plane families, the annulus for P/A/X, and the full disk for Y/Z
/// (whose cluster connections live in B_R, not just the annulus).
pub fn default_ambient_spec(spec: &ArmEventSpec) -> String {
    match spec.family {
        Family::B | Family::H | Family::P | Family::A | Family::X => spec.region_spec(),
        Family::Y | Family::Z => format!("disk:{}", spec.big_r),
    }
}

/// Monte Carlo frequency of an arm event over `N` independent critical
/// configurations of `ambient`. Sample `i` is drawn from the counter stream
/// `(seed, i)`, so the result is bit-for-bit reproducible for any thread
/// count.
pub fn mc_estimate_on(
    spec: &ArmEventSpec,
    ambient: &Arc<DiscDomain>,
    n_samples: u64,
    seed: u64,
) -> Result<Estimate, ArmlabError> {
    if n_samples == 0 {
        return Err(ArmlabError::Invalid("mc_estimate needs N >= 1".into()));
    }
    let compiled = spec.compile(ambient)?;
    let chunks = n_samples.div_ceil(CHUNK);
    let hits: Result<u64, ArmlabError> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n_samples);
            let mut cfg = Configuration::all_blue(Arc::clone(ambient));
            let mut hits = 0u64;
            for i in lo..hi {
                let mut rng = RngStream::new(seed, i);
                cfg.resample(&mut rng);
                if compiled.detect(&cfg)? {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .sum();
    Ok(Estimate::from_counts(hits?, n_samples, seed))
}

/// `mc_estimate_on` with the default ambient domain for the event.
pub fn mc_estimate(
    spec: &ArmEventSpec,
    n_samples: u64,
    seed: u64,
) -> Result<Estimate, ArmlabError> {
    let ambient = Arc::new(DiscDomain::parse(&default_ambient_spec(spec))?);
    mc_estimate_on(spec, &ambient, n_samples, seed)
}

/// CSV row for an estimate, schema `event,j,r,R,N,p_hat,stderr,seed`.
pub fn csv_row(spec: &ArmEventSpec, est: &Estimate) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        spec.spec_string(),
        spec.j,
        spec.r,
        spec.big_r,
        est.n_samples,
        est.p_hat,
        est.stderr,
        est.seed
    )
}

pub const CSV_HEADER: &str = "event,j,r,R,N,p_hat,stderr,seed";

// ---------------------------------------------------------------------------
// Weighted log-log slope fit
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct SlopeFit {
    pub slope: f64,
    pub slope_err: f64,
    pub intercept: f64,
    /// Points dropped because p_hat was nonpositive.
    pub dropped: usize,
}

/// Weighted least squares of `log p` against `log n`; weights come from the
/// delta-method variance of `log p`, `(stderr/p)^2`. Exact inputs (stderr 0)
/// get a tiny floor weight so they dominate without dividing by zero.
pub fn slope_fit(points: &[(f64, f64, f64)]) -> Result<SlopeFit, ArmlabError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut dropped = 0;
    for &(n, p, se) in points {
        if p <= 0.0 || n <= 0.0 {
            dropped += 1;
            continue;
        }
        let rel = (se / p).max(1e-9);
        xs.push(n.ln());
        ys.push(p.ln());
        ws.push(1.0 / (rel * rel));
    }
    if xs.len() < 3 {
        return Err(ArmlabError::Invalid(format!(
            "slope_fit needs >= 3 positive points, got {}",
            xs.len()
        )));
    }
    let sw: f64 = ws.iter().sum();
    let mx: f64 = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my: f64 = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(x, w)| w * (x - mx) * (x - mx))
        .sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter())
        .zip(&ws)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    if sxx <= 0.0 {
        return Err(ArmlabError::Invalid("slope_fit needs spread in n".into()));
    }
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        slope_err: (1.0 / sxx).sqrt(),
        intercept: my - slope * mx,
        dropped,
    })
}

// ---------------------------------------------------------------------------
// Sequence fit (power law with decaying relative error)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SequenceFit {
    /// Fitted model a_n = C n^alpha (1 + eps_n).
    pub c: f64,
    pub alpha: f64,
    /// Decay exponent of |eps_n| ~ n^(-c_rate); NaN when residuals vanish.
    pub c_rate: f64,
    /// Successive ratios b_k = a_{k+1}/a_k.
    pub b_seq: Vec<f64>,
    /// The per-step limit C(m) = m^alpha and prefactor B(m) = a_k / C(m)^k.
    pub c_of_m: f64,
    pub b_of_m: f64,
    /// Relative residuals of the fitted model at each grid point.
    pub residuals: Vec<f64>,
}

/// Geometric-tail acceleration (Aitken) on the last three terms of a
/// sequence expected to converge geometrically; falls back to the last term
/// when the increments do not look geometric.
fn accelerate(seq: &[f64]) -> f64 {
    let k = seq.len();
    if k < 3 {
        return seq[k - 1];
    }
    let (s1, s2, s3) = (seq[k - 3], seq[k - 2], seq[k - 1]);
    let (d1, d2) = (s2 - s1, s3 - s2);
    if d1.abs() < 1e-14 * s2.abs().max(1e-300) {
        return s3;
    }
    let rho = d2 / d1;
    if !(rho.is_finite() && rho.abs() < 0.99) {
        return s3;
    }
    s3 + d2 * rho / (1.0 - rho)
}

/// Fit `a_n = C n^alpha (1 + O(n^{-c}))` from values on the geometric grid
/// `n = n0 * m^k`, following the constructive route: the ratios
/// `b_k = a_{k+1}/a_k` converge geometrically to `C(m) = m^alpha`, the
/// compensated sequence `a_k / C(m)^k` converges to the prefactor.
pub fn fit_sequence(values: &[f64], n0: f64, m: f64) -> Result<SequenceFit, ArmlabError> {
    if !(m > 1.1 && m < 10.0) {
        return Err(ArmlabError::Invalid(format!(
            "fit_sequence needs m in (1.1, 10), got {m}"
        )));
    }
    if values.len() < 4 {
        return Err(ArmlabError::Invalid(
            "fit_sequence needs at least 4 grid points".into(),
        ));
    }
    if values.iter().any(|&a| !(a > 0.0)) {
        return Err(ArmlabError::Invalid(
            "fit_sequence needs positive values".into(),
        ));
    }
    let b_seq: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
    // Oscillation / divergence diagnostic: a geometrically converging ratio
    // sequence has increments of constant sign (rho > 0) or strictly
    // alternating sign (rho < 0). Anything else is a slow oscillation the
    // power-law model cannot represent.
    let scale = b_seq.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let incs: Vec<f64> = b_seq
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| d.abs() > 1e-9 * scale)
        .collect();
    if incs.len() >= 2 {
        let constant = incs.windows(2).all(|w| w[0].signum() == w[1].signum());
        let alternating = incs.windows(2).all(|w| w[0].signum() == -w[1].signum());
        let last_pair = &incs[incs.len() - 2..];
        let shrinking = last_pair[1].abs() <= last_pair[0].abs() * 1.05;
        if !(constant || alternating) || !shrinking {
            return Err(ArmlabError::Invalid(format!(
                "ratio sequence does not converge geometrically; b_k = {b_seq:?}"
            )));
        }
    }
    let c_of_m = accelerate(&b_seq);
    if !(c_of_m > 0.0) {
        return Err(ArmlabError::Invalid(
            "accelerated ratio limit is nonpositive".into(),
        ));
    }
    let alpha = c_of_m.ln() / m.ln();
    let compensated: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(k, &a)| a / c_of_m.powi(k as i32))
        .collect();
    let b_of_m = accelerate(&compensated);
    let c = b_of_m / n0.powf(alpha);
    let residuals: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let n = n0 * m.powi(k as i32);
            a / (c * n.powf(alpha)) - 1.0
        })
        .collect();
    // Error-decay exponent from the log-residual slope, using the points
    // where the residual is resolvable.
    let pts: Vec<(f64, f64, f64)> = residuals
        .iter()
        .enumerate()
        .filter(|(_, &e)| e.abs() > 1e-12)
        .map(|(k, &e)| (n0 * m.powi(k as i32), e.abs(), 0.0))
        .collect();
    let c_rate = if pts.len() >= 3 {
        -slope_fit(&pts)?.slope
    } else {
        f64::NAN
    };
    Ok(SequenceFit {
        c,
        alpha,
        c_rate,
        b_seq,
        c_of_m,
        b_of_m,
        residuals,
    })
}

// ---------------------------------------------------------------------------
// Ratio stabilization
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct RatioReport {
    pub ns: Vec<u64>,
    pub ratio_left: Vec<f64>,
    pub ratio_right: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub pass: bool,
}

/// Relative error of a ratio of two independent estimates.
fn ratio_rel_err(a: &Estimate, b: &Estimate) -> f64 {
    (a.rel_err().powi(2) + b.rel_err().powi(2)).sqrt()
}

/// Core of the stabilization check from triples of estimates at scales
/// (n, mn, m^2 n): z-score of ratio_right - ratio_left by the delta method.
pub fn ratio_z(p_n: &Estimate, p_mn: &Estimate, p_m2n: &Estimate) -> (f64, f64, f64) {
    let left = p_mn.p_hat / p_n.p_hat;
    let right = p_m2n.p_hat / p_mn.p_hat;
    let se_left = left * ratio_rel_err(p_mn, p_n);
    let se_right = right * ratio_rel_err(p_m2n, p_mn);
    let se = (se_left * se_left + se_right * se_right).sqrt();
    let z = if se > 0.0 { (right - left) / se } else { 0.0 };
    (left, right, z)
}

/// Monte Carlo ratio-stabilization test: for each n on the grid, compare
/// p(r, mn)/p(r, n) with p(r, m^2 n)/p(r, mn). Pass = every |z| <= 4.
pub fn ratio_stability(
    family: Family,
    j: usize,
    r: u64,
    m: u64,
    n_grid: &[u64],
    n_samples: u64,
    seed: u64,
) -> Result<RatioReport, ArmlabError> {
    if m < 2 {
        return Err(ArmlabError::Invalid("ratio_stability needs m >= 2".into()));
    }
    let mut scales: Vec<u64> = Vec::new();
    for &n in n_grid {
        for s in [n, m * n, m * m * n] {
            if !scales.contains(&s) {
                scales.push(s);
            }
        }
    }
    let mut ests = std::collections::HashMap::new();
    for (i, &s) in scales.iter().enumerate() {
        let spec = ArmEventSpec::parse(&format!("{}:{j}:{r}:{s}", family.letter()))?;
        ests.insert(s, mc_estimate(&spec, n_samples, seed.wrapping_add(i as u64))?);
    }
    let mut report = RatioReport {
        ns: n_grid.to_vec(),
        ratio_left: Vec::new(),
        ratio_right: Vec::new(),
        z_scores: Vec::new(),
        pass: true,
    };
    for &n in n_grid {
        let (l, rr, z) = ratio_z(&ests[&n], &ests[&(m * n)], &ests[&(m * m * n)]);
        report.ratio_left.push(l);
        report.ratio_right.push(rr);
        report.z_scores.push(z);
        if z.abs() > 4.0 {
            report.pass = false;
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Quasi-multiplicativity and near-monotonicity
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct QuasiMult {
    pub ratio: f64,
    pub stderr: f64,
}

/// p(r,R) / (p(r,u) p(u,R)) with a delta-method standard error.
pub fn quasi_mult(
    family: Family,
    j: usize,
    r: u64,
    u: u64,
    big_r: u64,
    n_samples: u64,
    seed: u64,
) -> Result<QuasiMult, ArmlabError> {
    if !(r < u && u < big_r) {
        return Err(ArmlabError::Invalid("quasi_mult needs r < u < R".into()));
    }
    let f = family.letter();
    let full = mc_estimate(&ArmEventSpec::parse(&format!("{f}:{j}:{r}:{big_r}"))?, n_samples, seed)?;
    let lo = mc_estimate(&ArmEventSpec::parse(&format!("{f}:{j}:{r}:{u}"))?, n_samples, seed ^ 0x51)?;
    let hi = mc_estimate(&ArmEventSpec::parse(&format!("{f}:{j}:{u}:{big_r}"))?, n_samples, seed ^ 0x52)?;
    if lo.p_hat == 0.0 || hi.p_hat == 0.0 {
        return Err(ArmlabError::Invalid("quasi_mult denominator vanished".into()));
    }
    let ratio = full.p_hat / (lo.p_hat * hi.p_hat);
    let rel = (full.rel_err().powi(2) + lo.rel_err().powi(2) + hi.rel_err().powi(2)).sqrt();
    Ok(QuasiMult {
        ratio,
        stderr: ratio * rel,
    })
}

#[derive(Clone, Debug)]
pub struct NearMono {
    pub ts: Vec<u64>,
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Near-monotonicity probe: p(t)/p(n) over t in [n, (1+eps) n] should stay
/// near 1. The pass threshold allows 4 combined standard errors plus an
/// eps-proportional slack for the genuine power-law decay over the window.
pub fn near_monotonicity_test(
    family: Family,
    j: usize,
    r: u64,
    n: u64,
    eps: f64,
    n_samples: u64,
    seed: u64,
) -> Result<NearMono, ArmlabError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(ArmlabError::Invalid("near_monotonicity needs eps in (0,1)".into()));
    }
    let t_hi = ((1.0 + eps) * n as f64).ceil() as u64;
    let t_mid = ((1.0 + eps / 2.0) * n as f64).round() as u64;
    let mut ts = vec![n, t_mid, t_hi];
    ts.dedup();
    let base_spec = ArmEventSpec::parse(&format!("{}:{j}:{r}:{n}", family.letter()))?;
    let base = mc_estimate(&base_spec, n_samples, seed)?;
    let mut ratios = Vec::new();
    let mut worst_se = 0.0f64;
    for (i, &t) in ts.iter().enumerate() {
        let est = if t == n {
            base
        } else {
            let spec = ArmEventSpec::parse(&format!("{}:{j}:{r}:{t}", family.letter()))?;
            mc_estimate(&spec, n_samples, seed.wrapping_add(1 + i as u64))?
        };
        ratios.push(est.p_hat / base.p_hat);
        worst_se = worst_se.max(ratio_rel_err(&est, &base));
    }
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let threshold = 1.0 - 4.0 * worst_se - eps;
    Ok(NearMono {
        ts,
        ratios,
        min_ratio,
        threshold,
        pass: min_ratio >= threshold,
    })
}
