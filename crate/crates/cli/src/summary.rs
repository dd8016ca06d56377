//! Summary statistics over a benchmark CSV: per-observable geometric
//! means (zeros excluded, following the logarithmic-histogram convention),
//! percentiles, and log-log slope fits with confidence intervals.

use std::collections::BTreeMap;

use crate::csv::ParsedRow;

/// Ordinary least squares on `(ln x, ln y)`: returns `(slope, stderr)`.
/// Requires at least three points and positive data.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    if xs.iter().chain(ys.iter()).any(|v| !(*v > 0.0)) {
        return None;
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let dof = (xs.len() - 2).max(1) as f64;
    let stderr = (ss_res / dof / sxx).sqrt();
    Some((slope, stderr))
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

/// Geometric mean with zeros excluded; returns the mean and how many
/// zeros were dropped.
fn geometric_mean(values: &[f64]) -> (f64, usize) {
    let pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    let zeros = values.len() - pos.len();
    if pos.is_empty() {
        return (0.0, zeros);
    }
    let mean = (pos.iter().map(|v| v.ln()).sum::<f64>() / pos.len() as f64).exp();
    (mean, zeros)
}

struct Column {
    opt: Vec<f64>,
    raw: Vec<f64>,
}

/// Renders the text summary table. Errors on empty input rather than
/// producing an empty table.
pub fn summarize(rows: &[ParsedRow]) -> Result<String, String> {
    if rows.is_empty() {
        return Err("no data rows to summarize".to_string());
    }
    let mut by_m: BTreeMap<String, Column> = BTreeMap::new();
    for row in rows {
        let col = by_m
            .entry(row.m.clone())
            .or_insert_with(|| Column { opt: Vec::new(), raw: Vec::new() });
        if let Some(v) = row.r_opt {
            col.opt.push(v);
        }
        if let Some(v) = row.r_raw {
            col.raw.push(v);
        }
    }

    let mut out = String::new();
    out.push_str(&format!("{} attempts, {} observables\n", count_attempts(rows), by_m.len()));
    out.push_str(
        "observable        n    geo-mean(opt)  median(opt)      p90(opt)  geo-mean(raw)  zeros\n",
    );
    for (m, col) in &by_m {
        let mut sorted = col.opt.clone();
        sorted.sort_by(f64::total_cmp);
        let (gm_opt, zeros) = geometric_mean(&col.opt);
        let (gm_raw, _) = geometric_mean(&col.raw);
        out.push_str(&format!(
            "{m:<12} {:>6}  {gm_opt:>13.4e} {:>12.4e} {:>13.4e}  {gm_raw:>13.4e}  {zeros:>5}\n",
            col.opt.len(),
            percentile(&sorted, 0.5),
            percentile(&sorted, 0.9),
        ));
    }

    // per-observable slope of the mean error against N_S, when the file
    // carries a sweep
    let mut n_values: Vec<usize> = rows.iter().map(|r| r.n_samples).collect();
    n_values.sort_unstable();
    n_values.dedup();
    if n_values.len() >= 3 {
        out.push_str("\nlog-log slopes of mean error vs n_samples (95% CI):\n");
        for m in by_m.keys() {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for &n in &n_values {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.n_samples == n && &r.m == m)
                    .filter_map(|r| r.r_opt)
                    .collect();
                if !vals.is_empty() {
                    xs.push(n as f64);
                    ys.push(vals.iter().sum::<f64>() / vals.len() as f64);
                }
            }
            if let Some((slope, stderr)) = loglog_slope(&xs, &ys) {
                out.push_str(&format!(
                    "{m:<12} slope {slope:+.4} +/- {:.4}\n",
                    2.0 * stderr
                ));
            }
        }
    }
    Ok(out)
}

fn count_attempts(rows: &[ParsedRow]) -> usize {
    let mut ids: Vec<usize> = rows.iter().map(|r| r.attempt).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_recovers_exact_power_law() {
        let xs: Vec<f64> = (1..=8).map(|k| 10f64.powi(k)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.7 * x.powf(-0.5)).collect();
        let (slope, stderr) = loglog_slope(&xs, &ys).unwrap();
        assert!((slope + 0.5).abs() < 1e-6, "slope {slope}");
        assert!(stderr < 1e-6);
    }

    #[test]
    fn geometric_mean_excludes_zeros() {
        let (gm, zeros) = geometric_mean(&[1.0, 0.0, 100.0]);
        assert_eq!(zeros, 1);
        assert!((gm - 10.0).abs() < 1e-12);
    }

    #[test]
    fn summarize_rejects_empty() {
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn single_attempt_percentiles_are_the_value() {
        let row = crate::csv::ParsedRow {
            scenario: "static".into(),
            n_samples: 10,
            dt: 1.0,
            param: None,
            attempt: 0,
            m: "1".into(),
            r_opt: Some(0.25),
            r_raw: Some(1.0),
            iterations: None,
            distance: None,
        };
        let text = summarize(&[row]).unwrap();
        assert!(text.contains("2.5000e-1"), "{text}");
    }
}
