use interrupt_engine::analysis::special::{beta_inc, chi2_sf, f_sf, gamma_p, kolmogorov_sf};
use interrupt_engine::analysis::*;
use interrupt_engine::sim::TrialLog;
use proptest::prelude::*;
use serde_json::Value;

const PVALUE_TOL: f64 = 1e-6;

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn pvalues_match_reference() {
    let v: Value = serde_json::from_str(&fixture("pvalues.json")).unwrap();
    let num = |c: &Value, k: &str| c[k].as_f64().unwrap();
    let mut worst: f64 = 0.0;
    let mut check = |got: f64, want: f64| {
        assert!((got - want).abs() < PVALUE_TOL, "got {got}, want {want}");
        worst = worst.max((got - want).abs());
    };
    for c in v["f_sf"].as_array().unwrap() {
        check(f_sf(num(c, "f"), num(c, "df1"), num(c, "df2")), num(c, "p"));
    }
    for c in v["chi2_sf"].as_array().unwrap() {
        check(chi2_sf(num(c, "x"), num(c, "df")), num(c, "p"));
    }
    for c in v["kolmogorov_sf"].as_array().unwrap() {
        check(kolmogorov_sf(num(c, "lambda")), num(c, "p"));
    }
    for c in v["beta_inc"].as_array().unwrap() {
        check(beta_inc(num(c, "a"), num(c, "b"), num(c, "x")), num(c, "value"));
    }
    for c in v["gamma_p"].as_array().unwrap() {
        check(gamma_p(num(c, "a"), num(c, "x")), num(c, "value"));
    }
    assert!(worst < 1e-10, "worst deviation {worst}");
}

#[test]
fn kruskal_wallis_fixture() {
    let kw = kruskal_wallis(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
    // 12/42 · (2·4 + 0 + 2·4)
    assert!((kw.h - 12.0 / 42.0 * 16.0).abs() < 1e-12);
    assert_eq!(kw.df, 2.0);
    assert!((kw.p - (-kw.h / 2.0).exp()).abs() < 1e-12);
    let same = kruskal_wallis(&[&[3.0, 3.0, 3.0], &[3.0, 3.0]]).unwrap();
    assert_eq!((same.h, same.p), (0.0, 1.0));
}

#[test]
fn kruskal_wallis_ties() {
    // Ranks: 1, 2.5, 2.5 | 4, 5.5, 5.5. N = 6, ties 2 × (8 - 2) = 12.
    let kw = kruskal_wallis(&[&[1.0, 2.0, 2.0], &[3.0, 4.0, 4.0]]).unwrap();
    let rbar = [6.0 / 3.0, 15.0 / 3.0];
    let h0 = 12.0 / 42.0 * (3.0 * (rbar[0] - 3.5f64).powi(2) + 3.0 * (rbar[1] - 3.5f64).powi(2));
    let h = h0 / (1.0 - 12.0 / 210.0);
    assert!((kw.h - h).abs() < 1e-12, "{} vs {h}", kw.h);
}

#[test]
fn cronbach_fixture() {
    // Rater variances 5/3, 19/12, 11/12; total variance 34/3; α = 129/136.
    let m = vec![vec![1.0, 2.0, 2.0], vec![2.0, 3.0, 3.0], vec![3.0, 3.0, 4.0], vec![4.0, 5.0, 4.0]];
    assert!((cronbach_alpha(&m).unwrap() - 129.0 / 136.0).abs() < 1e-12);
    let identical: Vec<Vec<f64>> = [0.0, 1.0, 1.0, 0.0, 1.0].iter().map(|&x| vec![x, x]).collect();
    assert!((cronbach_alpha(&identical).unwrap() - 1.0).abs() < 1e-12);
    assert!(cronbach_alpha(&[vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
}

#[test]
fn f1_fixtures() {
    let actual = [1u8, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0];
    let predicted = [1u8, 1, 1, 1, 1, 1, 1, 1, 0, 0, 1, 1, 0];
    assert!((f1_score(&predicted, &actual).unwrap() - 0.8).abs() < 1e-12);
    assert_eq!(f1_score(&[0, 0, 0], &[1, 0, 1]).unwrap(), 0.0);
    assert_eq!(f1_score(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
    assert!(f1_score(&[1], &[1, 0]).is_err());
}

#[test]
fn hand_computed_metrics() {
    let log = TrialLog::from_json(&fixture("metrics_log.json")).unwrap();
    let m = compute_metrics(&log).unwrap();
    assert_eq!(m.approaches, 4);
    assert_eq!(m.pct_interruptions_during_build, 0.25);
    assert_eq!(m.wait_busy, [10.0]);
    assert_eq!(m.wait_idle, [5.0, 7.0, 5.0]);
    assert_eq!((m.interruptions_encountered, m.interruptions_ignored), (4, 2));
    assert_eq!(m.lags, [42.0, 10.0]);
    assert_eq!(m.durations, [120.0, 62.0, 30.0, 120.0]);
    assert!(m.busy_lags.is_empty());
    assert_eq!(m.busy_durations, [120.0]);
    assert_eq!((m.main_builds_completed, m.robot_builds_completed, m.tasks_completed), (1, 2, 3));
    assert_eq!(m.idle_time, 250.0);
}

#[test]
fn malformed_logs_are_rejected() {
    let good = TrialLog::from_json(&fixture("metrics_log.json")).unwrap();
    let mut swapped = good.clone();
    swapped.events.swap(0, 1);
    swapped.events[0].t = 500.0;
    assert!(matches!(compute_metrics(&swapped), Err(MetricsError::EventOrder(_))));
    let mut gap = good.clone();
    gap.timeline[1].start += 1.0;
    assert!(matches!(compute_metrics(&gap), Err(MetricsError::Timeline(_))));
    let mut late = good.clone();
    late.entries[2].decision_t = Some(170.0);
    assert!(matches!(compute_metrics(&late), Err(MetricsError::Entry { entry: 2, .. })));
    let mut v: Value = serde_json::from_str(&fixture("metrics_log.json")).unwrap();
    v["format_version"] = 99.into();
    assert!(TrialLog::from_json(&v.to_string()).is_err());
}

#[test]
fn empty_interruptions() {
    let mut log = TrialLog::from_json(&fixture("metrics_log.json")).unwrap();
    log.entries.retain(|e| e.warmup);
    let m = compute_metrics(&log).unwrap();
    assert_eq!(m.interruptions_encountered, 0);
    assert!(m.lags.is_empty() && m.durations.is_empty());
    assert_eq!(m.pct_interruptions_during_build, 0.0);
}

#[test]
fn report_tables() {
    let log = TrialLog::from_json(&fixture("metrics_log.json")).unwrap();
    let m = compute_metrics(&log).unwrap();
    let r = build_report(&[m]);
    let lag = r.summary_row("rnd", "lag").unwrap();
    assert_eq!((lag.n, lag.mean, lag.median), (2, 26.0, 26.0));
    let dir = tempfile::tempdir().unwrap();
    r.write(dir.path()).unwrap();
    for f in ["summary.csv", "tests.csv", "observations.csv", "report.txt"] {
        assert!(dir.path().join(f).exists());
    }
    let obs = std::fs::read_to_string(dir.path().join("observations.csv")).unwrap();
    assert!(obs.contains("rnd,fixture-1,wait_idle,7\n"));
}

fn groups() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-100.0..100.0f64, 2..8), 2..5)
}

proptest! {
    #[test]
    fn anova_shift_and_scale_invariant(g in groups(), shift in -50.0..50.0f64, scale in 0.1..10.0f64) {
        let refs: Vec<&[f64]> = g.iter().map(Vec::as_slice).collect();
        let Ok(a) = one_way_anova(&refs) else { return Ok(()) };
        let moved: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| x * scale + shift).collect()).collect();
        let refs: Vec<&[f64]> = moved.iter().map(Vec::as_slice).collect();
        let b = one_way_anova(&refs).unwrap();
        prop_assert!((a.f - b.f).abs() <= 1e-9 * a.f.abs().max(1.0));
    }

    #[test]
    fn kruskal_wallis_monotone_invariant(g in groups()) {
        let refs: Vec<&[f64]> = g.iter().map(Vec::as_slice).collect();
        let Ok(a) = kruskal_wallis(&refs) else { return Ok(()) };
        let moved: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| (x / 40.0).exp() + x).collect()).collect();
        let refs: Vec<&[f64]> = moved.iter().map(Vec::as_slice).collect();
        let b = kruskal_wallis(&refs).unwrap();
        prop_assert!((a.h - b.h).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&a.p));
    }

    #[test]
    fn f1_bounded(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..50)) {
        let (p, a): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let f = f1_score(&p, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }
}
