use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{
    denoised_users, error_rates, mean, paired_t_test, per_user_means, relative_change, EvalError, Metric, RankRecord,
    Tier, ORIGINAL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    /// Users with at least one accepted run of that method.
    Denoised,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Denoised => "denoised",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub subset: Subset,
    pub metric: Metric,
    pub cutoff: usize,
    pub users: usize,
    pub mean: f64,
    /// Original-profile mean over the same users.
    pub original_mean: f64,
    pub relative_change: Option<f64>,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
    pub tier: Tier,
    pub formatting_pct: f64,
    pub hallucination_pct: f64,
    pub denoised_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cutoffs: Vec<usize>,
    pub rows: Vec<ReportRow>,
}

/// One row per method x subset x metric x cutoff. `original` fixes the user
/// set; every method must cover it.
pub fn build_report(
    original: &[RankRecord],
    methods: &[(String, Vec<RankRecord>)],
    cutoffs: &[usize],
) -> Result<MetricsReport, EvalError> {
    let users: Vec<usize> = original.iter().map(|r| r.user).collect();
    let mut rows = Vec::new();
    for metric in Metric::ALL {
        for &k in cutoffs {
            let base = per_user_means(original, &users, metric, k)?;
            let m = mean(&base);
            rows.push(ReportRow {
                method: ORIGINAL.to_string(),
                subset: Subset::All,
                metric,
                cutoff: k,
                users: users.len(),
                mean: m,
                original_mean: m,
                relative_change: relative_change(m, m),
                t: None,
                p_value: None,
                tier: Tier::None,
                formatting_pct: 0.0,
                hallucination_pct: 0.0,
                denoised_pct: 0.0,
            });
        }
    }

    for subset in [Subset::All, Subset::Denoised] {
        for (name, records) in methods {
            let rates = error_rates(records);
            let denoised = denoised_users(records);
            let denoised_pct = if users.is_empty() {
                0.0
            } else {
                100.0 * denoised.len() as f64 / users.len() as f64
            };
            let group = match subset {
                Subset::All => users.clone(),
                Subset::Denoised => denoised,
            };
            for metric in Metric::ALL {
                for &k in cutoffs {
                    let a = per_user_means(records, &group, metric, k).map_err(|e| match e {
                        EvalError::MissingUser { user, .. } => EvalError::MissingUser {
                            method: name.clone(),
                            user,
                        },
                        e => e,
                    })?;
                    let b = per_user_means(original, &group, metric, k)?;
                    let test = if group.len() >= 2 { Some(paired_t_test(&a, &b)?) } else { None };
                    let (ma, mb) = (mean(&a), mean(&b));
                    rows.push(ReportRow {
                        method: name.clone(),
                        subset,
                        metric,
                        cutoff: k,
                        users: group.len(),
                        mean: ma,
                        original_mean: mb,
                        relative_change: if group.is_empty() { None } else { relative_change(ma, mb) },
                        t: test.map(|t| t.t),
                        p_value: test.map(|t| t.p),
                        tier: test.map_or(Tier::None, |t| t.tier),
                        formatting_pct: rates.formatting_pct,
                        hallucination_pct: rates.hallucination_pct,
                        denoised_pct,
                    });
                }
            }
        }
    }
    Ok(MetricsReport {
        cutoffs: cutoffs.to_vec(),
        rows,
    })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.digits$}"))
}

impl MetricsReport {
    pub fn find(&self, method: &str, subset: Subset, metric: Metric, cutoff: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.subset == subset && r.metric == metric && r.cutoff == cutoff)
    }

    fn methods(&self, subset: Subset) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in self.rows.iter().filter(|r| r.subset == subset) {
            if !out.contains(&r.method.as_str()) {
                out.push(&r.method);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "subset",
            "metric",
            "cutoff",
            "users",
            "mean",
            "original_mean",
            "relative_change_pct",
            "t",
            "p_value",
            "significance",
            "formatting_pct",
            "hallucination_pct",
            "denoised_pct",
        ])
        .unwrap();
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.subset.as_str().to_string(),
                r.metric.label().to_string(),
                r.cutoff.to_string(),
                r.users.to_string(),
                format!("{:.6}", r.mean),
                format!("{:.6}", r.original_mean),
                opt(r.relative_change, 4),
                opt(r.t, 4),
                opt(r.p_value, 6),
                r.tier.marker().to_string(),
                format!("{:.2}", r.formatting_pct),
                format!("{:.2}", r.hallucination_pct),
                format!("{:.2}", r.denoised_pct),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Markdown table: absolute values for the original profiles, relative
    /// change with significance markers for every method.
    pub fn to_markdown(&self, subset: Subset) -> String {
        let mut out = String::new();
        let mut header = vec!["Method".to_string()];
        if subset == Subset::Denoised {
            header.push("Users".into());
        }
        for m in Metric::ALL {
            for k in &self.cutoffs {
                header.push(format!("{}@{k}", m.label()));
            }
        }
        header.extend(["Format %".into(), "Halluc. %".into(), "Denoised %".into()]);
        writeln!(out, "| {} |", header.join(" | ")).unwrap();
        writeln!(out, "|{}|", vec!["---"; header.len()].join("|")).unwrap();
        for method in self.methods(subset) {
            let mut cells = vec![method.to_string()];
            let first = self.rows.iter().find(|r| r.method == method && r.subset == subset).unwrap();
            if subset == Subset::Denoised {
                cells.push(first.users.to_string());
            }
            for m in Metric::ALL {
                for &k in &self.cutoffs {
                    let r = self.find(method, subset, m, k).unwrap();
                    cells.push(if method == ORIGINAL {
                        format!("{:.4}", r.mean)
                    } else {
                        match r.relative_change {
                            Some(c) => format!("{c:+.2}%{}", r.tier.marker()),
                            None => "NA".into(),
                        }
                    });
                }
            }
            if method == ORIGINAL {
                cells.extend(["".into(), "".into(), "".into()]);
            } else {
                cells.push(format!("{:.1}", first.formatting_pct));
                cells.push(format!("{:.1}", first.hallucination_pct));
                cells.push(format!("{:.1}", first.denoised_pct));
            }
            writeln!(out, "| {} |", cells.join(" | ")).unwrap();
        }
        out.push_str("\n* p < 0.05, † p < 0.01, ‡ p < 0.001 (paired t-test against original profiles)\n");
        out
    }
}
