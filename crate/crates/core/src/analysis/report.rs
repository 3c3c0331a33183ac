//! Per-condition summaries and omnibus tests, as CSV and a text table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::TrialMetrics;
use super::stats::{describe, kruskal_wallis, one_way_anova};

/// Reported metrics, in table order. Per-trial metrics contribute one value
/// per trial; the others pool every observation.
pub const METRICS: [&str; 12] = [
    "pct_interruptions_during_build",
    "wait_busy",
    "wait_idle",
    "lag",
    "duration",
    "busy_lag",
    "busy_duration",
    "idle_time",
    "interruptions_encountered",
    "interruptions_ignored",
    "tasks_completed",
    "approaches",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub condition: String,
    pub trial_id: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub metric: String,
    /// `anova` or `kruskal_wallis`.
    pub test: String,
    /// None when the test does not apply (too few conditions or samples).
    pub statistic: Option<f64>,
    pub df: Option<(f64, Option<f64>)>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub observations: Vec<Observation>,
    pub summary: Vec<SummaryRow>,
    pub tests: Vec<TestRow>,
}

fn observations_of(m: &TrialMetrics) -> Vec<(&'static str, f64)> {
    let mut out = vec![("pct_interruptions_during_build", m.pct_interruptions_during_build)];
    let pooled: [(&'static str, &Vec<f64>); 6] = [
        ("wait_busy", &m.wait_busy),
        ("wait_idle", &m.wait_idle),
        ("lag", &m.lags),
        ("duration", &m.durations),
        ("busy_lag", &m.busy_lags),
        ("busy_duration", &m.busy_durations),
    ];
    for (name, values) in pooled {
        out.extend(values.iter().map(|v| (name, *v)));
    }
    out.extend([
        ("idle_time", m.idle_time),
        ("interruptions_encountered", m.interruptions_encountered as f64),
        ("interruptions_ignored", m.interruptions_ignored as f64),
        ("tasks_completed", m.tasks_completed as f64),
        ("approaches", m.approaches as f64),
    ]);
    out
}

pub fn build_report(metrics: &[TrialMetrics]) -> Report {
    let observations = metrics
        .iter()
        .flat_map(|m| {
            observations_of(m).into_iter().map(|(metric, value)| Observation {
                condition: m.condition.name().to_string(),
                trial_id: m.trial_id.clone(),
                metric: metric.to_string(),
                value,
            })
        })
        .collect();
    Report::from_observations(observations)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        v.to_string()
    }
}

impl Report {
    /// Summaries and tests over long-format observations. Conditions appear
    /// in first-seen order; metrics in [`METRICS`] order, then the rest.
    pub fn from_observations(observations: Vec<Observation>) -> Self {
        let mut conditions: Vec<String> = Vec::new();
        let mut metrics: Vec<String> = METRICS.iter().map(|s| s.to_string()).collect();
        let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for o in &observations {
            if !conditions.contains(&o.condition) {
                conditions.push(o.condition.clone());
            }
            if !metrics.contains(&o.metric) {
                metrics.push(o.metric.clone());
            }
            groups.entry((o.metric.clone(), o.condition.clone())).or_default().push(o.value);
        }
        let mut summary = Vec::new();
        let mut tests = Vec::new();
        for metric in &metrics {
            let by_condition: Vec<&[f64]> = conditions
                .iter()
                .filter_map(|c| groups.get(&(metric.clone(), c.clone())).map(Vec::as_slice))
                .collect();
            if by_condition.is_empty() {
                continue;
            }
            for c in &conditions {
                if let Some(v) = groups.get(&(metric.clone(), c.clone())) {
                    let d = describe(v);
                    summary.push(SummaryRow {
                        condition: c.clone(),
                        metric: metric.clone(),
                        mean: d.mean,
                        sd: d.sd,
                        median: d.median,
                        n: d.n,
                    });
                }
            }
            let anova = one_way_anova(&by_condition).ok();
            tests.push(TestRow {
                metric: metric.clone(),
                test: "anova".into(),
                statistic: anova.map(|a| a.f),
                df: anova.map(|a| (a.df1, Some(a.df2))),
                p: anova.map(|a| a.p),
            });
            let kw = kruskal_wallis(&by_condition).ok().filter(|_| by_condition.iter().all(|g| g.len() >= 2));
            tests.push(TestRow {
                metric: metric.clone(),
                test: "kruskal_wallis".into(),
                statistic: kw.map(|k| k.h),
                df: kw.map(|k| (k.df, None)),
                p: kw.map(|k| k.p),
            });
        }
        Self { observations, summary, tests }
    }

    pub fn summary_row(&self, condition: &str, metric: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.condition == condition && r.metric == metric)
    }

    pub fn test_row(&self, metric: &str, test: &str) -> Option<&TestRow> {
        self.tests.iter().find(|r| r.metric == metric && r.test == test)
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("condition,metric,mean,sd,median,n\n");
        for r in &self.summary {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.condition, r.metric, fmt_num(r.mean), fmt_num(r.sd), fmt_num(r.median), r.n);
        }
        s
    }

    /// `df` is `df1;df2` for ANOVA and `df` for Kruskal–Wallis.
    pub fn tests_csv(&self) -> String {
        let mut s = String::from("metric,test,statistic,df,p\n");
        for r in &self.tests {
            let df = match r.df {
                Some((a, Some(b))) => format!("{a};{b}"),
                Some((a, None)) => a.to_string(),
                None => "NA".into(),
            };
            let _ = writeln!(s, "{},{},{},{},{}", r.metric, r.test, fmt_opt(r.statistic), df, fmt_opt(r.p));
        }
        s
    }

    pub fn observations_csv(&self) -> String {
        let mut s = String::from("condition,trial_id,metric,value\n");
        for o in &self.observations {
            let _ = writeln!(s, "{},{},{},{}", o.condition, o.trial_id, o.metric, fmt_num(o.value));
        }
        s
    }

    pub fn text_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<32} {:<6} {:>12} {:>12} {:>12} {:>6}", "metric", "cond", "mean", "sd", "median", "n");
        for r in &self.summary {
            let _ = writeln!(
                s,
                "{:<32} {:<6} {:>12.4} {:>12.4} {:>12.4} {:>6}",
                r.metric, r.condition, r.mean, r.sd, r.median, r.n
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<32} {:<16} {:>12} {:>12}", "metric", "test", "statistic", "p");
        for r in &self.tests {
            let stat = r.statistic.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            let p = r.p.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
            let _ = writeln!(s, "{:<32} {:<16} {:>12} {:>12}", r.metric, r.test, stat, p);
        }
        s
    }

    /// Writes `summary.csv`, `tests.csv`, `observations.csv` and
    /// `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("tests.csv"), self.tests_csv())?;
        std::fs::write(dir.join("observations.csv"), self.observations_csv())?;
        std::fs::write(dir.join("report.txt"), self.text_table())
    }
}
