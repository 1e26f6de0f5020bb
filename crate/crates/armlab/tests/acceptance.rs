//! End-to-end acceptance suite: one test and one printed pass/fail line per
//! criterion. Monte Carlo sample sizes are tuned for a single-core box; the
//! fixed seeds make every run reproducible bit-for-bit.

use std::sync::Arc;

use armlab::arms::{ArmEventSpec, Family};
use armlab::cli::{equivalence_half, equivalence_plane};
use armlab::coupling::{
    good_set_law, layered_coupling_experiment, LayerEngine, LayerSetting, LayerSpec,
};
use armlab::estimate::{
    fit_sequence, mc_estimate, near_monotonicity_test, ratio_stability, ratio_z, slope_fit,
    Estimate,
};
use armlab::lattice::{DiscDomain, Radius};
use armlab::percolation::{exact_probability, Configuration, Prob, RngStream};

fn report(criterion: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion} ({name}): {} [{detail}]",
        if ok { "pass" } else { "fail" }
    );
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn dom(spec: &str) -> Arc<DiscDomain> {
    Arc::new(DiscDomain::parse(spec).unwrap())
}

/// Exact probability of an event through the fast detector.
fn exact_fast(ambient: &Arc<DiscDomain>, spec: &str) -> Prob {
    let ev = ArmEventSpec::parse(spec).unwrap().compile(ambient).unwrap();
    exact_probability(ambient, |c| ev.detect(c).unwrap()).unwrap()
}

/// Exact probability of an event through the peeling oracle.
fn exact_oracle(ambient: &Arc<DiscDomain>, spec: &str) -> Prob {
    let ev = ArmEventSpec::parse(spec).unwrap().compile(ambient).unwrap();
    exact_probability(ambient, |c| ev.detect_oracle(c).unwrap()).unwrap()
}

#[test]
fn criterion_01_oracle_equivalence_on_micro_domains() {
    let mut checked = 0usize;
    let mut bad = Vec::new();
    for big_r in 1..=3i64 {
        for kind in ["half", "disk"] {
            let ambient = dom(&format!("{kind}:{big_r}"));
            if ambient.len() > 20 {
                continue; // the matrix only promises micro domains
            }
            let specs: Vec<String> = if kind == "half" {
                if big_r < 2 {
                    vec![]
                } else {
                    (1..=2)
                        .flat_map(|j| {
                            vec![format!("B:{j}:1:{big_r}"), format!("H:{j}:1:{big_r}")]
                        })
                        .collect()
                }
            } else if big_r < 2 {
                vec![]
            } else {
                vec![format!("P:2:1:{big_r}"), format!("A:2:1:{big_r}")]
            };
            for s in specs {
                let fast = exact_fast(&ambient, &s);
                let slow = exact_oracle(&ambient, &s);
                checked += 1;
                if fast != slow {
                    bad.push(format!("{s} on {kind}:{big_r}: {fast} vs {slow}"));
                }
            }
        }
    }
    report(
        1,
        "oracle equivalence",
        checked >= 8 && bad.is_empty(),
        &format!("{checked} exact comparisons, mismatches: {bad:?}"),
    );
}

/// Weighted log-log slope of p(event) over an outer-radius grid.
fn event_slope(family: Family, j: usize, r: u64, grid: &[u64], n: u64, seed: u64) -> (f64, f64) {
    let pts: Vec<(f64, f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(i, &big_r)| {
            let spec =
                ArmEventSpec::parse(&format!("{}:{j}:{r}:{big_r}", family.letter())).unwrap();
            let est = mc_estimate(&spec, n, seed.wrapping_add(i as u64)).unwrap();
            (big_r as f64, est.p_hat, est.stderr)
        })
        .collect();
    let fit = slope_fit(&pts).unwrap();
    (fit.slope, fit.slope_err)
}

#[test]
fn criterion_02_half_plane_exponents() {
    let (s1, e1) = event_slope(Family::B, 1, 2, &[16, 32, 64, 128, 256, 512], 10_000, 20);
    let (s2, e2) = event_slope(Family::B, 2, 4, &[16, 32, 64, 128, 256, 512], 10_000, 21);
    let (s3, e3) = event_slope(Family::B, 3, 8, &[32, 64, 128, 256], 100_000, 22);
    let ok1 = (s1 + 1.0 / 3.0).abs() <= 0.05;
    let ok2 = (s2 + 1.0).abs() <= 0.07;
    let ok3 = (s3 + 2.0).abs() <= 0.2;
    report(
        2,
        "half-plane exponents",
        ok1 && ok2 && ok3,
        &format!(
            "b1 slope {s1:.4}+-{e1:.4} (want -1/3 +- 0.05), \
             b2 {s2:.4}+-{e2:.4} (want -1 +- 0.07), \
             b3 {s3:.4}+-{e3:.4} (want -2 +- 0.2)"
        ),
    );
}

#[test]
fn criterion_03_planar_two_arm_exponent() {
    let (s, e) = event_slope(Family::P, 2, 2, &[16, 32, 64, 128], 4_000, 30);
    report(
        3,
        "planar 2-arm exponent",
        (s + 0.25).abs() <= 0.04,
        &format!("p2 slope {s:.4}+-{e:.4} (want -1/4 +- 0.04)"),
    );
}

#[test]
fn criterion_04_hitting_sequence_equivalence() {
    let n = 10_000u64;
    let mut detail = String::new();
    let mut all = true;
    for big_r in [16i64, 32] {
        for j in 1..=3usize {
            let agree = equivalence_half(j, 2, big_r, n, 40 + j as u64).unwrap();
            all &= agree == n;
            detail.push_str(&format!("half j={j} R={big_r}: {agree}/{n}; "));
        }
        for j in [2usize, 4] {
            let agree = equivalence_plane(j, 2, big_r, n, 50 + j as u64).unwrap();
            all &= agree == n;
            detail.push_str(&format!("plane j={j} R={big_r}: {agree}/{n}; "));
        }
    }
    report(4, "hitting-sequence equivalence", all, detail.trim_end());
}

#[test]
fn criterion_05_good_set_law_structure() {
    let domain = dom("semiann:3/4:3");
    let engine = LayerEngine::new(
        LayerSpec::new(2, Radius::parse("3/4").unwrap(), LayerSetting::Half).unwrap(),
    )
    .unwrap();
    let event = ArmEventSpec::parse("B:2:3/4:3").unwrap();
    let law = good_set_law(&domain, &event, &engine).unwrap();
    let total: Prob = law.iter().map(|(_, p)| *p).sum();
    let normalized = total == Prob::new(1, 1);
    // Spread of P[S | event] * 2^|S| over realizable nonempty sets.
    let weighted: Vec<f64> = law
        .iter()
        .filter(|(s, _)| !s.is_empty())
        .map(|(s, p)| {
            (*p.numer() as f64 / *p.denom() as f64) * (s.size() as f64).exp2()
        })
        .collect();
    let spread_max = weighted.iter().cloned().fold(0.0f64, f64::max);
    let spread_min = weighted.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = spread_max / spread_min;
    // Empty-mass complement identity, exactly: the empty atom carries the
    // conditional mass of event configurations where the good event fails.
    let compiled = event.compile(&domain).unwrap();
    let p_event = exact_probability(&domain, |c| compiled.detect(c).unwrap()).unwrap();
    let p_both = exact_probability(&domain, |c| {
        compiled.detect(c).unwrap() && engine.good_event(c).unwrap()
    })
    .unwrap();
    let empty: Prob = law
        .iter()
        .filter(|(s, _)| s.is_empty())
        .map(|(_, p)| *p)
        .sum();
    let identity = empty == (p_event - p_both) / p_event;
    report(
        5,
        "good-set law structure",
        normalized && identity && !weighted.is_empty() && spread.is_finite(),
        &format!(
            "{} atoms, spread of P[S|event]*2^|S| = {spread:.3} \
             (max {spread_max:.3e}, min {spread_min:.3e}), empty mass {empty}",
            law.len()
        ),
    );
}

#[test]
fn criterion_06_layered_coupling_positivity_and_decay() {
    let (r, n) = (4i64, 10_000u64);
    let mut pts = Vec::new();
    let mut min_overlap = f64::INFINITY;
    let mut detail = String::new();
    for (i, big_r) in [32i64, 64, 128].into_iter().enumerate() {
        let rep =
            layered_coupling_experiment(2, r, big_r, 2, LayerSetting::Half, n, 60 + i as u64)
                .unwrap();
        for row in &rep.rows {
            min_overlap = min_overlap.min(row.overlap);
        }
        detail.push_str(&format!(
            "R={big_r}: fail {:.3e}+-{:.1e}; ",
            rep.failure_bound, rep.failure_stderr
        ));
        // Floor the stderr so an exactly resolved layer cannot blow up the
        // weighted regression.
        let se = rep.failure_stderr.max(0.05 * rep.failure_bound);
        pts.push((r as f64 / big_r as f64, rep.failure_bound, se));
    }
    let fit = slope_fit(&pts).unwrap();
    let delta = fit.slope;
    let significant = delta > 0.0 && delta / fit.slope_err > 1.96;
    report(
        6,
        "coupling positivity and decay",
        min_overlap >= 0.05 && significant,
        &format!(
            "{detail}min overlap {min_overlap:.3}, delta_hat {delta:.2}+-{:.2}",
            fit.slope_err
        ),
    );
}

#[test]
fn criterion_07_ratio_stabilization() {
    let rep = ratio_stability(Family::B, 1, 2, 2, &[16, 32, 64], 50_000, 70).unwrap();
    // Test power: a synthetic sequence whose ratios jump must fail loudly.
    let fake = |p: f64| Estimate::from_counts((p * 1e6) as u64, 1_000_000, 0);
    let (_, _, z_bad) = ratio_z(&fake(0.5), &fake(0.25), &fake(0.2));
    report(
        7,
        "ratio stabilization",
        rep.pass && z_bad.abs() > 4.0,
        &format!("z-scores {:?}, adversarial z {z_bad:.1}", rep.z_scores),
    );
}

#[test]
fn criterion_08_sequence_fit() {
    // Exact power law a_n = 2.5 n^{-2/3} on n = 8 * 2^k: recovered to
    // machine accuracy.
    let exact: Vec<f64> = (0..7)
        .map(|k| {
            let n = 8.0 * 2.0f64.powi(k);
            2.5 * n.powf(-2.0 / 3.0)
        })
        .collect();
    let fit = fit_sequence(&exact, 8.0, 2.0).unwrap();
    let exact_ok =
        (fit.alpha + 2.0 / 3.0).abs() <= 1e-12 && ((fit.c - 2.5) / 2.5).abs() <= 1e-12;
    // Noisy synthetic a_n = 3 n^{-1} (1 + n^{-1/2}).
    let noisy: Vec<f64> = (0..10)
        .map(|k| {
            let n = 4.0 * 2.0f64.powi(k);
            3.0 * n.powi(-1) * (1.0 + n.powf(-0.5))
        })
        .collect();
    let nfit = fit_sequence(&noisy, 4.0, 2.0).unwrap();
    let noisy_ok = (nfit.alpha + 1.0).abs() <= 1e-2 && (nfit.c - 3.0).abs() <= 0.05;
    report(
        8,
        "sequence fit",
        exact_ok && noisy_ok,
        &format!(
            "exact alpha {:.2e} off, C {:.2e} rel off; noisy alpha {:.4}, C {:.4}",
            fit.alpha + 2.0 / 3.0,
            (fit.c - 2.5) / 2.5,
            nfit.alpha,
            nfit.c
        ),
    );
}

#[test]
fn criterion_09_color_switching() {
    // Exact equality on micro domains for both alternating orders of B_2.
    let mut exact_ok = true;
    for big_r in [2i64, 3] {
        let ambient = dom(&format!("half:{big_r}"));
        let p_rb = exact_fast(&ambient, &format!("B:2:1:{big_r}:rb"));
        let p_br = exact_fast(&ambient, &format!("B:2:1:{big_r}:br"));
        exact_ok &= p_rb == p_br;
    }
    // MC agreement at n = 64 within 4 combined standard errors.
    let n = 20_000u64;
    let rb = mc_estimate(&ArmEventSpec::parse("B:2:2:64:rb").unwrap(), n, 90).unwrap();
    let br = mc_estimate(&ArmEventSpec::parse("B:2:2:64:br").unwrap(), n, 91).unwrap();
    let se = (rb.stderr.powi(2) + br.stderr.powi(2)).sqrt();
    let z = (rb.p_hat - br.p_hat) / se;
    report(
        9,
        "color switching",
        exact_ok && z.abs() <= 4.0,
        &format!(
            "exact equal on micro: {exact_ok}; MC rb {:.4} vs br {:.4}, z {z:.2}",
            rb.p_hat, br.p_hat
        ),
    );
}

#[test]
fn criterion_10_statistical_inequalities() {
    // FKG, exactly on a micro domain: nested red one-arm events, both
    // increasing in red.
    let ambient = dom("half:2");
    let a = ArmEventSpec::parse("B:1:1:2:r").unwrap().compile(&ambient).unwrap();
    let b = ArmEventSpec::parse("B:1:1/2:2:r").unwrap().compile(&ambient).unwrap();
    let p_a = exact_probability(&ambient, |c| a.detect(c).unwrap()).unwrap();
    let p_b = exact_probability(&ambient, |c| b.detect(c).unwrap()).unwrap();
    let p_ab = exact_probability(&ambient, |c| {
        a.detect(c).unwrap() && b.detect(c).unwrap()
    })
    .unwrap();
    let fkg_exact = p_ab >= p_a * p_b;
    // FKG, Monte Carlo at n = 64: nested red arm events are increasing and
    // positively correlated; the empirical inequality must hold within 4
    // (conservative, covariance-free) standard errors.
    let half = dom("half:64");
    let a64 = ArmEventSpec::parse("B:1:2:64:r").unwrap().compile(&half).unwrap();
    let b64 = ArmEventSpec::parse("B:1:8:64:r").unwrap().compile(&half).unwrap();
    let n = 20_000u64;
    let (mut ka, mut kb, mut kab) = (0u64, 0u64, 0u64);
    let mut cfg = Configuration::all_blue(Arc::clone(&half));
    for i in 0..n {
        let mut rng = RngStream::new(100, i);
        cfg.resample(&mut rng);
        let (ha, hb) = (a64.detect(&cfg).unwrap(), b64.detect(&cfg).unwrap());
        ka += ha as u64;
        kb += hb as u64;
        kab += (ha && hb) as u64;
    }
    let nf = n as f64;
    let (pa, pb, pab) = (ka as f64 / nf, kb as f64 / nf, kab as f64 / nf);
    let se = ((pab * (1.0 - pab) / nf)
        + (pb * (pa * (1.0 - pa) / nf).sqrt()).powi(2)
        + (pa * (pb * (1.0 - pb) / nf).sqrt()).powi(2))
    .sqrt();
    let fkg_mc = pab - pa * pb >= -4.0 * se;
    // Near-monotonicity at the operation's own 4-sigma bar.
    let nm = near_monotonicity_test(Family::B, 1, 2, 32, 0.25, 20_000, 110).unwrap();
    // BK-Reimer, exactly on micro domains: two disjoint crossings (one red,
    // one blue) are at most as likely as independent ones.
    let mut bk = true;
    let mut bk_detail = String::new();
    for big_r in [2i64, 3] {
        let amb = dom(&format!("half:{big_r}"));
        let p_r = exact_fast(&amb, &format!("B:1:1:{big_r}:r"));
        let p_bl = exact_fast(&amb, &format!("B:1:1:{big_r}:b"));
        let p_rb = exact_fast(&amb, &format!("B:2:1:{big_r}:rb"));
        bk &= p_rb <= p_r * p_bl;
        bk_detail = format!("{p_rb} <= {}", p_r * p_bl);
    }
    report(
        10,
        "statistical inequality suite",
        fkg_exact && fkg_mc && nm.pass && bk,
        &format!(
            "FKG exact {p_ab} >= {}; FKG MC gap {:.4} (4se {:.4}); \
             near-mono min ratio {:.3} vs threshold {:.3}; BK {bk_detail}",
            p_a * p_b,
            pab - pa * pb,
            4.0 * se,
            nm.min_ratio,
            nm.threshold,
        ),
    );
}
