//! Per-trial tables and their aggregate summaries.

use std::fmt::Write as _;

/// Agreement window, in standard errors of the mean.
pub const AGREEMENT_SIGMAS: f64 = 4.0;

/// Aligned plain-text table.
pub fn aligned(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let text: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", text.join("  ").trim_end());
    };
    line(headers.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

/// Model prediction for one column: mean and per-trial variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Analytic {
    pub mean: f64,
    pub variance: f64,
}

impl Analytic {
    pub fn exact(mean: f64) -> Self {
        Self { mean, variance: 0.0 }
    }

    pub fn bernoulli(p: f64) -> Self {
        Self { mean: p, variance: p * (1.0 - p) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSummary {
    pub name: &'static str,
    pub mean: f64,
    pub sd: f64,
    pub analytic: Option<Analytic>,
    pub trials: usize,
}

impl ColumnSummary {
    /// Half-width of the agreement window around the analytic mean.
    pub fn window(&self) -> Option<f64> {
        self.analytic
            .map(|a| AGREEMENT_SIGMAS * (a.variance / self.trials.max(1) as f64).sqrt())
    }

    pub fn agrees(&self) -> Option<bool> {
        let a = self.analytic?;
        let w = self.window()?;
        Some((self.mean - a.mean).abs() <= w.max(1e-9))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
    pub analytic: Vec<(&'static str, Analytic)>,
}

impl TrialTable {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), ..Self::default() }
    }

    pub fn compare(&mut self, column: &'static str, analytic: Analytic) {
        assert!(self.columns.contains(&column), "unknown column {column}");
        self.analytic.push((column, analytic));
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let i = self.columns.iter().position(|c| *c == name).expect("known column");
        self.rows.iter().map(|r| r[i]).collect()
    }

    pub fn summaries(&self) -> Vec<ColumnSummary> {
        self.columns
            .iter()
            .map(|&name| {
                let xs = self.column(name);
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n.max(1.0);
                let var = if xs.len() > 1 {
                    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                ColumnSummary {
                    name,
                    mean,
                    sd: var.sqrt(),
                    analytic: self.analytic.iter().find(|(c, _)| *c == name).map(|(_, a)| *a),
                    trials: xs.len(),
                }
            })
            .collect()
    }

    /// True unless some compared column falls outside its window.
    pub fn all_agree(&self) -> bool {
        self.summaries().iter().all(|s| s.agrees().unwrap_or(true))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("trial,{}\n", self.columns.join(","));
        for (t, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{t},{}", cells.join(","));
        }
        out
    }

    /// Aligned summary followed by `summary.<column>.<stat>=<value>` lines.
    pub fn summary_text(&self) -> String {
        let summaries = self.summaries();
        let rows: Vec<Vec<String>> = summaries
            .iter()
            .map(|s| {
                let ci = 1.96 * s.sd / (s.trials.max(1) as f64).sqrt();
                vec![
                    s.name.to_string(),
                    format!("{:.4}", s.mean),
                    format!("{:.4}", s.sd),
                    format!("[{:.4}, {:.4}]", s.mean - ci, s.mean + ci),
                    s.analytic.map_or("-".into(), |a| format!("{:.4}", a.mean)),
                    s.window().map_or("-".into(), |w| format!("{w:.4}")),
                    match s.agrees() {
                        Some(true) => "yes".into(),
                        Some(false) => "NO".into(),
                        None => "-".into(),
                    },
                ]
            })
            .collect();
        let mut out = aligned(&["column", "mean", "sd", "ci95", "analytic", "window", "agree"], &rows);
        out.push('\n');
        for s in &summaries {
            let _ = writeln!(out, "summary.{}.mean={}", s.name, s.mean);
            let _ = writeln!(out, "summary.{}.sd={}", s.name, s.sd);
            if let (Some(a), Some(ok)) = (s.analytic, s.agrees()) {
                let _ = writeln!(out, "summary.{}.analytic={}", s.name, a.mean);
                let _ = writeln!(out, "summary.{}.agree={ok}", s.name);
            }
        }
        out
    }
}
