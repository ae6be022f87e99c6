use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use factorclust::clustering::{cluster_pipeline, PipelineConfig};
use factorclust::simulation::{generate_scenario, ScenarioSpec};
use factorclust_ffi::*;

fn last_error() -> String {
    let p = fc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_spec() -> ScenarioSpec {
    ScenarioSpec { n: 200, d: 3, p1: 8, p_extra: 8, r0: 1, r_per_cluster: 1, seed: 4, ..ScenarioSpec::scenario_one(8) }
}

fn row_major(panel: &factorclust::TimeSeriesPanel) -> Vec<f64> {
    let v = panel.values();
    (0..panel.p()).flat_map(|i| (0..panel.n()).map(move |t| v[(i, t)])).collect()
}

#[test]
fn pipeline_through_handles_matches_library() {
    let (panel, _) = generate_scenario(&small_spec()).unwrap();
    let data = row_major(&panel);
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(fc_panel_new(data.as_ptr(), panel.p(), panel.n(), &mut h), FcStatus::Ok);
        assert_eq!((fc_panel_p(h), fc_panel_n(h)), (panel.p(), panel.n()));

        let mut counts = ptr::null_mut();
        let status = fc_factor_count(h, 5, 0, &mut counts);
        assert!(!counts.is_null());
        let len = fc_factor_counts_len(counts);
        let mut ratios = vec![0.0; len];
        assert_eq!(fc_factor_counts_ratios(counts, ratios.as_mut_ptr(), len), FcStatus::Ok);
        assert!(len > 0 && ratios[0] > 0.0);
        if status == FcStatus::Ok {
            let (mut r0, mut r) = (0usize, 0usize);
            assert_eq!(fc_factor_counts_selected(counts, &mut r0, &mut r), FcStatus::Ok);
            assert!(r0 >= 1 && r >= 1);
        }
        fc_factor_counts_free(counts);

        let mut opts = fc_cluster_options_default();
        opts.r0 = 1;
        opts.r = 3;
        opts.seed = 9;
        let mut c = ptr::null_mut();
        assert_eq!(fc_cluster(h, &opts, &mut c), FcStatus::Ok, "{}", last_error());
        let direct = cluster_pipeline(
            &panel,
            &PipelineConfig {
                counts: Some((1, 3)),
                kmeans: factorclust::clustering::KMeansConfig { seed: 9, ..Default::default() },
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(fc_clustering_r0(c), 1);
        assert_eq!(fc_clustering_r(c), 3);
        assert_eq!(fc_clustering_d(c), direct.d_used);
        assert_eq!(fc_clustering_d_hat(c), direct.d_hat);
        assert_eq!(fc_clustering_omega(c), direct.provenance.omega);
        let p = panel.p();
        let mut assign = vec![0i64; p];
        assert_eq!(fc_clustering_assignments(c, assign.as_mut_ptr(), p), FcStatus::Ok);
        let expected: Vec<i64> = direct.full_assignments(p).iter().map(|a| a.map_or(-1, |v| v as i64)).collect();
        assert_eq!(assign, expected);
        let mut weak = vec![0.0; p * 3];
        assert_eq!(fc_clustering_weak_loadings(c, weak.as_mut_ptr(), weak.len()), FcStatus::Ok);
        assert_eq!(weak[3 * 2 + 1], direct.weak.matrix()[(2, 1)]);
        let mut short = vec![0.0; 2];
        assert_eq!(fc_clustering_strong_loadings(c, short.as_mut_ptr(), 2), FcStatus::BufferTooSmall);
        assert!(last_error().starts_with("E_BUFFER"));
        fc_clustering_free(c);
        fc_panel_free(h);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(fc_panel_new(ptr::null(), 2, 2, &mut h), FcStatus::NullPointer);
        assert!(last_error().contains("data"));
        let one = [1.0];
        assert_eq!(fc_panel_new(one.as_ptr(), 1, 1, &mut h), FcStatus::PanelSize);
        assert!(last_error().starts_with("E_PANEL_SIZE"));
        let bad = [1.0, f64::NAN, 2.0, 3.0];
        assert_eq!(fc_panel_new(bad.as_ptr(), 2, 2, &mut h), FcStatus::Parse);
        let path = CString::new("/nonexistent/panel.csv").unwrap();
        assert_eq!(fc_panel_load_csv(path.as_ptr(), 0, &mut h), FcStatus::Io);
        assert!(last_error().contains("/nonexistent/panel.csv"));
        assert!(h.is_null());
        let mut c = ptr::null_mut();
        assert_eq!(fc_cluster(ptr::null(), ptr::null(), &mut c), FcStatus::NullPointer);
        fc_panel_free(ptr::null_mut());
        fc_clustering_free(ptr::null_mut());
        fc_factor_counts_free(ptr::null_mut());
        assert_eq!(fc_panel_p(ptr::null()), 0);
    }
}

#[test]
fn mismatched_count_override_is_rejected() {
    let (panel, _) = generate_scenario(&small_spec()).unwrap();
    let data = row_major(&panel);
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(fc_panel_new(data.as_ptr(), panel.p(), panel.n(), &mut h), FcStatus::Ok);
        let mut opts = fc_cluster_options_default();
        opts.r0 = 1;
        let mut c = ptr::null_mut();
        assert_eq!(fc_cluster(h, &opts, &mut c), FcStatus::Param);
        opts.r = 3;
        opts.omega_rule = 7;
        assert_eq!(fc_cluster(h, &opts, &mut c), FcStatus::Param);
        assert!(c.is_null());
        fc_panel_free(h);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(fc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/factorclust.h")).unwrap();
    for name in [
        "fc_panel_new",
        "fc_panel_load_csv",
        "fc_panel_free",
        "fc_factor_count",
        "fc_factor_counts_ratios",
        "fc_cluster",
        "fc_cluster_options_default",
        "fc_clustering_assignments",
        "fc_clustering_free",
        "fc_last_error_message",
        "FC_STATUS_OK",
        "typedef struct FcPanel FcPanel",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <stdlib.h>
#include <math.h>
#include "factorclust.h"

int main(void) {
    size_t p = 12, n = 300;
    double *y = malloc(sizeof(double) * p * n);
    unsigned long long s = 88172645463325252ULL;
    for (size_t t = 0; t < n; t++) {
        double f = sin(0.3 * (double)t);
        double g = cos(0.7 * (double)t);
        for (size_t i = 0; i < p; i++) {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            double e = ((double)(s % 1000000) / 1000000.0 - 0.5) * 0.1;
            y[i * n + t] = (i < 6 ? f : g) + e;
        }
    }
    FcPanel *panel = NULL;
    if (fc_panel_new(y, p, n, &panel) != FC_STATUS_OK) { fprintf(stderr, "%s\n", fc_last_error_message()); return 1; }
    FcClusterOptions opts = fc_cluster_options_default();
    opts.r0 = 1; opts.r = 1;
    FcClustering *c = NULL;
    FcStatus st = fc_cluster(panel, &opts, &c);
    if (st != FC_STATUS_OK) { fprintf(stderr, "%s\n", fc_last_error_message()); return 2; }
    long long a[12];
    if (fc_clustering_assignments(c, (int64_t *)a, 12) != FC_STATUS_OK) return 3;
    printf("p=%zu d=%zu\n", fc_panel_p(panel), fc_clustering_d(c));
    fc_clustering_free(c);
    fc_panel_free(panel);
    if (fc_panel_new(NULL, 2, 2, &panel) != FC_STATUS_NULL_POINTER) return 4;
    printf("err=%s\n", fc_last_error_message());
    free(y);
    return 0;
}
"#;

#[test]
fn c_program_links_against_static_library() {
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = target_dir.join("libfactorclust_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping C link check: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("smoke");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new(&cc)
        .arg("-std=c99")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "cc failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "C program failed: {stdout} {}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("p=12"));
    assert!(stdout.contains("err=E_NULL"));
}
