//! Output documents: JSON summaries and tidy CSV tables.
//!
//! Every CSV starts with a `#` line carrying the settings that produced it,
//! and every JSON document has a `provenance` object with the same content.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::clustering::{ClusteringResult, LabelDistribution};
use crate::error::{Error, Result};
use crate::evaluation::SummaryTable;
use crate::factor_count::{FactorCountReport, Ratio};
use crate::loadings::LoadingMatrix;
use crate::panel::TimeSeriesPanel;
use crate::simulation::{Example1Params, MonteCarloSummary};

pub type Settings = BTreeMap<String, String>;

/// Real numbers are written with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn base_settings(command: &str) -> Settings {
    let mut s = Settings::new();
    s.insert("tool".into(), env!("CARGO_PKG_NAME").into());
    s.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    s.insert("command".into(), command.into());
    s
}

fn provenance_line(settings: &Settings) -> String {
    let body: Vec<String> = settings
        .iter()
        .map(|(k, v)| format!("{k}={}", v.replace(['\n', ' '], "_")))
        .collect();
    format!("# {}\n", body.join(" "))
}

/// Write `header` and `rows` as CSV under `dir/name`, after the provenance line.
pub fn write_csv(
    dir: &Path,
    name: &str,
    settings: &Settings,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<PathBuf> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(provenance_line(settings).as_bytes())
        .map_err(|e| io_err(&path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    provenance: &'a Settings,
    #[serde(flatten)]
    body: T,
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, settings: &Settings, body: T) -> Result<PathBuf> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(&Document {
        provenance: settings,
        body,
    })
    .map_err(|e| Error::InvalidParameter(format!("serializing {name}: {e}")))?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn loading_rows(panel: &TimeSeriesPanel, loading: &LoadingMatrix) -> (Vec<String>, Vec<Vec<String>>) {
    let m = loading.matrix();
    let mut header = vec!["series_id".to_string()];
    header.extend((1..=m.ncols()).map(|j| format!("factor_{j}")));
    let rows = (0..m.nrows())
        .map(|i| {
            let mut row = vec![panel.series_name(i)];
            row.extend(m.row(i).iter().map(|v| fmt_real(*v)));
            row
        })
        .collect();
    (header, rows)
}

fn matrix_rows(names: &[String], m: &DMatrix<f64>) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["series_id".to_string()];
    header.extend(names.iter().cloned());
    let rows = (0..m.nrows())
        .map(|i| {
            let mut row = vec![names[i].clone()];
            row.extend(m.row(i).iter().map(|v| fmt_real(*v)));
            row
        })
        .collect();
    (header, rows)
}

fn ratio_cell(r: Option<&Ratio>) -> String {
    match r {
        Some(Ratio::Value(v)) => fmt_real(*v),
        Some(Ratio::RankEdge) => "rank_edge".into(),
        Some(Ratio::Truncated) => "truncated".into(),
        None => String::new(),
    }
}

/// Ratio sequences of both methods side by side.
pub fn write_ratio_table(
    dir: &Path,
    settings: &Settings,
    cumulative: &FactorCountReport,
    baseline: Option<&FactorCountReport>,
) -> Result<PathBuf> {
    let header: Vec<String> = ["j", "cumulative_ratio", "single_matrix_ratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = (0..cumulative.ratios.len())
        .map(|i| {
            vec![
                (i + 1).to_string(),
                ratio_cell(cumulative.ratios.get(i)),
                ratio_cell(baseline.and_then(|b| b.ratios.get(i))),
            ]
        })
        .collect::<Vec<_>>();
    write_csv(dir, "ratios.csv", settings, &header, &rows)
}

#[derive(Serialize)]
struct FactorCountDoc<'a> {
    cumulative: &'a FactorCountReport,
    single_matrix: Option<&'a FactorCountReport>,
}

pub fn write_factor_count_outputs(
    dir: &Path,
    settings: &Settings,
    cumulative: &FactorCountReport,
    baseline: Option<&FactorCountReport>,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    Ok(vec![
        write_json(
            dir,
            "factor_counts.json",
            settings,
            FactorCountDoc {
                cumulative,
                single_matrix: baseline,
            },
        )?,
        write_ratio_table(dir, settings, cumulative, baseline)?,
    ])
}

pub fn cluster_settings(mut settings: Settings, result: &ClusteringResult) -> Settings {
    let p = &result.provenance;
    settings.insert("k0".into(), p.k0.to_string());
    settings.insert("j0".into(), p.j0.to_string());
    settings.insert("r0".into(), p.r0.to_string());
    settings.insert("r".into(), p.r.to_string());
    settings.insert("counts_source".into(), format!("{:?}", p.counts_source).to_lowercase());
    settings.insert("omega_rule".into(), p.omega_choice.clone());
    settings.insert("omega".into(), fmt_real(p.omega));
    settings.insert("d_hat".into(), p.d_hat.to_string());
    settings.insert("d".into(), p.d_used.to_string());
    settings.insert("d_source".into(), format!("{:?}", p.d_source).to_lowercase());
    settings.insert("elbow_theta".into(), p.elbow_theta.to_string());
    settings.insert("kmeans_restarts".into(), p.kmeans.restarts.to_string());
    settings.insert("kmeans_max_iter".into(), p.kmeans.max_iter.to_string());
    settings.insert("seed".into(), p.kmeans.seed.to_string());
    settings
}

#[derive(Serialize)]
struct SeriesAssignment {
    series_id: String,
    /// `null` for the no-cluster set.
    cluster: Option<usize>,
    weak_row_norm: f64,
}

#[derive(Serialize)]
struct ClusterDoc<'a> {
    tuning: &'a crate::clustering::Provenance,
    p: usize,
    n: usize,
    no_cluster: Vec<String>,
    d_hat: usize,
    d: usize,
    wcss_curve: &'a [f64],
    strong_degenerate_cut: bool,
    weak_degenerate_cut: bool,
    series: Vec<SeriesAssignment>,
    factor_counts: Option<&'a FactorCountReport>,
}

/// Clustering document, loadings, assignments, similarity, WCSS curve and,
/// when given, the label-by-cluster distribution.
pub fn write_cluster_outputs(
    dir: &Path,
    settings: &Settings,
    panel: &TimeSeriesPanel,
    result: &ClusteringResult,
    labels: Option<&LabelDistribution>,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let p = panel.p();
    let full = result.full_assignments(p);
    let norms = result.weak.row_norms();
    let doc = ClusterDoc {
        tuning: &result.provenance,
        p,
        n: panel.n(),
        no_cluster: result.no_cluster_indices.iter().map(|&i| panel.series_name(i)).collect(),
        d_hat: result.d_hat,
        d: result.d_used,
        wcss_curve: &result.wcss_curve,
        strong_degenerate_cut: result.strong.degenerate_cut(),
        weak_degenerate_cut: result.weak.degenerate_cut(),
        series: (0..p)
            .map(|i| SeriesAssignment {
                series_id: panel.series_name(i),
                cluster: full[i],
                weak_row_norm: norms[i],
            })
            .collect(),
        factor_counts: result.factor_report.as_ref(),
    };
    let mut written = vec![write_json(dir, "clustering.json", settings, doc)?];

    let header: Vec<String> = ["series_id", "cluster", "weak_row_norm"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = (0..p)
        .map(|i| {
            vec![
                panel.series_name(i),
                full[i].map_or_else(|| "none".to_string(), |c| c.to_string()),
                fmt_real(norms[i]),
            ]
        })
        .collect();
    written.push(write_csv(dir, "assignments.csv", settings, &header, &rows)?);

    let (h, rows) = loading_rows(panel, &result.strong);
    written.push(write_csv(dir, "strong_loadings.csv", settings, &h, &rows)?);
    let (h, rows) = loading_rows(panel, &result.weak);
    written.push(write_csv(dir, "weak_loadings.csv", settings, &h, &rows)?);

    let names: Vec<String> = result.retained_indices.iter().map(|&i| panel.series_name(i)).collect();
    let (h, rows) = matrix_rows(&names, &result.similarity);
    written.push(write_csv(dir, "similarity.csv", settings, &h, &rows)?);

    let h = vec!["d".to_string(), "wcss".to_string()];
    let rows: Vec<Vec<String>> = result
        .wcss_curve
        .iter()
        .enumerate()
        .map(|(i, w)| vec![(i + 1).to_string(), fmt_real(*w)])
        .collect();
    written.push(write_csv(dir, "wcss_curve.csv", settings, &h, &rows)?);

    if let Some(report) = &result.factor_report {
        written.push(write_ratio_table(dir, settings, report, None)?);
    }
    if let Some(dist) = labels {
        written.push(write_label_distribution(dir, settings, dist)?);
    }
    Ok(written)
}

/// Row-normalized `n_ij / n_i` matrix: one row per label, one column per cluster.
pub fn write_label_distribution(dir: &Path, settings: &Settings, dist: &LabelDistribution) -> Result<PathBuf> {
    let d = dist.fractions.first().map_or(0, Vec::len);
    let mut header = vec!["label".to_string()];
    header.extend((0..d).map(|c| format!("cluster_{c}")));
    header.push("n_series".into());
    let rows: Vec<Vec<String>> = dist
        .labels
        .iter()
        .zip(dist.fractions.iter().zip(&dist.counts))
        .map(|(label, (fr, counts))| {
            let mut row = vec![label.clone()];
            row.extend(fr.iter().map(|v| fmt_real(*v)));
            row.push(counts.iter().sum::<usize>().to_string());
            row
        })
        .collect();
    write_csv(dir, "label_distribution.csv", settings, &header, &rows)
}

pub fn simulation_settings(mut settings: Settings, summary: &MonteCarloSummary) -> Settings {
    let c = &summary.config;
    for line in summary.spec.to_kv_string().lines() {
        if let Some((k, v)) = line.split_once('=') {
            settings.insert(format!("scenario.{}", k.trim()), v.trim().to_string());
        }
    }
    settings.insert("reps".into(), c.reps.to_string());
    settings.insert("master_seed".into(), c.master_seed.to_string());
    settings.insert("jobs".into(), c.jobs.to_string());
    settings.insert("counts".into(), format!("{:?}", c.counts).to_lowercase());
    settings.insert("stages".into(), format!("{:?}", c.stages).to_lowercase());
    settings.insert("demoted".into(), c.demoted.to_string());
    settings.insert("k0".into(), c.pipeline.k0.to_string());
    settings.insert(
        "j0".into(),
        c.pipeline.j0.map_or_else(|| "default".to_string(), |j| j.to_string()),
    );
    settings.insert("omega_rule".into(), c.pipeline.omega.to_string());
    settings.insert(
        "d".into(),
        c.pipeline.d.map_or_else(|| "elbow".to_string(), |d| d.to_string()),
    );
    settings.insert("kmeans_restarts".into(), c.pipeline.kmeans.restarts.to_string());
    settings.insert("seeding".into(), "chacha8(master_seed)+stream(replication)".into());
    settings.insert("redraw".into(), "all_random_elements_per_replication".into());
    settings
}

fn stat_cells(table: &SummaryTable, metric: &str) -> [String; 3] {
    match table.get(metric) {
        Some(r) => [fmt_real(r.mean), fmt_real(r.sd), r.n_reps.to_string()],
        None => [String::new(), String::new(), "0".into()],
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Summary table plus per-stage tables, failures and provenance.
pub fn write_simulation_outputs(dir: &Path, settings: &Settings, summary: &MonteCarloSummary) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let t = &summary.table;
    let mut written = Vec::new();

    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| vec![r.metric.clone(), fmt_real(r.mean), fmt_real(r.sd), r.n_reps.to_string()])
        .collect();
    written.push(write_csv(dir, "summary.csv", settings, &strings(&["metric", "mean", "sd", "n_reps"]), &rows)?);

    let count_rows: Vec<Vec<String>> = [
        ("cumulative_ratio", "r0_correct", "r0_plus_r_correct"),
        ("single_matrix", "baseline_r0_correct", "baseline_r0_plus_r_correct"),
    ]
    .iter()
    .map(|(method, a, b)| {
        let [ma, _, n] = stat_cells(t, a);
        let [mb, _, _] = stat_cells(t, b);
        vec![method.to_string(), ma, mb, n]
    })
    .collect();
    written.push(write_csv(
        dir,
        "factor_count_table.csv",
        settings,
        &strings(&["method", "freq_r0_correct", "freq_r0_plus_r_correct", "n_reps"]),
        &count_rows,
    )?);

    if t.get("strong_subspace_frobenius").is_some() {
        let rows: Vec<Vec<String>> = [
            ("strong", "strong_subspace_frobenius", "strong_subspace_operator"),
            ("weak", "weak_subspace_frobenius", "weak_subspace_operator"),
        ]
        .iter()
        .map(|(which, f, o)| {
            let [fm, fs, n] = stat_cells(t, f);
            let [om, os, _] = stat_cells(t, o);
            vec![which.to_string(), fm, fs, om, os, n]
        })
        .collect();
        written.push(write_csv(
            dir,
            "subspace_error_table.csv",
            settings,
            &strings(&["loading", "frobenius_mean", "frobenius_sd", "operator_mean", "operator_sd", "n_reps"]),
            &rows,
        )?);

        let rows: Vec<Vec<String>> = ["p1", "p2", "p3"]
            .iter()
            .map(|rule| {
                let [e1m, e1s, n] = stat_cells(t, &format!("e1_omega_{rule}"));
                let [e2m, e2s, _] = stat_cells(t, &format!("e2_omega_{rule}"));
                vec![rule.to_string(), e1m, e1s, e2m, e2s, n]
            })
            .collect();
        written.push(write_csv(
            dir,
            "detection_error_table.csv",
            settings,
            &strings(&["omega_rule", "e1_mean", "e1_sd", "e2_mean", "e2_sd", "n_reps"]),
            &rows,
        )?);

        let [tm, ts, n] = stat_cells(t, "tau");
        let [rm, rs, _] = stat_cells(t, "tau_rate");
        let [dm, _, _] = stat_cells(t, "d_hat_correct");
        written.push(write_csv(
            dir,
            "clustering_table.csv",
            settings,
            &strings(&["tau_mean", "tau_sd", "tau_rate_mean", "tau_rate_sd", "freq_d_hat_correct", "n_reps"]),
            &[vec![tm, ts, rm, rs, dm, n]],
        )?);
    }

    let rows: Vec<Vec<String>> = summary
        .failures
        .iter()
        .map(|f| vec![f.replication.to_string(), f.code.clone(), f.message.clone()])
        .collect();
    written.push(write_csv(dir, "failures.csv", settings, &strings(&["replication", "code", "message"]), &rows)?);

    #[derive(Serialize)]
    struct SimDoc<'a> {
        spec: &'a crate::simulation::ScenarioSpec,
        config: &'a crate::simulation::MonteCarloConfig,
        successful_replications: usize,
        failed_replications: usize,
    }
    written.push(write_json(
        dir,
        "provenance.json",
        settings,
        SimDoc {
            spec: &summary.spec,
            config: &summary.config,
            successful_replications: summary.replications.len(),
            failed_replications: summary.failures.len(),
        },
    )?);
    Ok(written)
}

/// One row of population eigen-structure for the three-factor construction.
#[derive(Debug, Clone, Serialize)]
pub struct Example1Row {
    pub params: Example1Params,
    pub eigenvalues: [f64; 3],
    pub lambda3_closed_form: f64,
}

pub fn write_example1_outputs(
    dir: &Path,
    settings: &Settings,
    rows: &[Example1Row],
    slope: f64,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let header = strings(&["p", "lambda1", "lambda2", "lambda3", "lambda2_over_lambda3", "lambda3_closed_form"]);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let [l1, l2, l3] = r.eigenvalues;
            vec![
                r.params.p.to_string(),
                fmt_real(l1),
                fmt_real(l2),
                fmt_real(l3),
                fmt_real(l2 / l3),
                fmt_real(r.lambda3_closed_form),
            ]
        })
        .collect();
    let mut written = vec![write_csv(dir, "example1_eigenvalues.csv", settings, &header, &table)?];
    #[derive(Serialize)]
    struct Doc<'a> {
        rows: &'a [Example1Row],
        log_log_slope_lambda2_over_lambda3: f64,
    }
    written.push(write_json(
        dir,
        "example1.json",
        settings,
        Doc {
            rows,
            log_log_slope_lambda2_over_lambda3: slope,
        },
    )?);
    Ok(written)
}

/// A panel as CSV with one time point per line.
pub fn write_panel(dir: &Path, name: &str, settings: &Settings, panel: &TimeSeriesPanel) -> Result<PathBuf> {
    let header: Vec<String> = (0..panel.p()).map(|i| panel.series_name(i)).collect();
    let v = panel.values();
    let rows: Vec<Vec<String>> = (0..panel.n())
        .map(|t| (0..panel.p()).map(|i| fmt_real(v[(i, t)])).collect())
        .collect();
    write_csv(dir, name, settings, &header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_keep_seventeen_digits() {
        let s = fmt_real(0.1);
        let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert!(mantissa.len() >= 15);
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        let third = 1.0 / 3.0;
        assert_eq!(fmt_real(third).parse::<f64>().unwrap(), third);
    }

    #[test]
    fn csv_starts_with_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = base_settings("test");
        s.insert("seed".into(), "7".into());
        let path = write_csv(dir.path(), "t.csv", &s, &strings(&["a", "b"]), &[strings(&["1", "2"])]).unwrap();
        let text = fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        let first = lines.next().unwrap();
        assert!(first.starts_with("# ") && first.contains("seed=7") && first.contains("command=test"));
        assert_eq!(lines.next(), Some("a,b"));
    }
}
