use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use relmap_ffi::*;

fn last_error() -> String {
    let p = relmap_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_config() -> *mut RelmapConfig {
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(relmap_config_default(&mut cfg), RelmapStatus::Ok);
        for (k, v) in [("grid.rows", "4"), ("grid.cols", "4"), ("workload.n_tasks", "20"), ("experiment.episodes", "3")] {
            let (k, v) = (CString::new(k).unwrap(), CString::new(v).unwrap());
            assert_eq!(relmap_config_set(cfg, k.as_ptr(), v.as_ptr()), RelmapStatus::Ok, "{}", last_error());
        }
    }
    cfg
}

#[test]
fn cycles_to_failure_matches_reference_value() {
    let p = relmap_tc_params_tabulated();
    let (mut n, mut damaging) = (0.0, false);
    let s = unsafe { relmap_cycles_to_failure(10.0, 350.0, &p, &mut n, &mut damaging) };
    assert_eq!(s, RelmapStatus::Ok);
    assert!(damaging);
    assert!((n - 6_359.060_544_884_302).abs() / n < 1e-9);

    let s = unsafe { relmap_cycles_to_failure(0.5, 350.0, &p, &mut n, &mut damaging) };
    assert_eq!(s, RelmapStatus::Ok);
    assert!(!damaging && n.is_infinite());
}

#[test]
fn bad_arguments_report_status_and_message() {
    let mut p = relmap_tc_params_tabulated();
    let mut n = 0.0;
    assert_eq!(unsafe { relmap_cycles_to_failure(10.0, 350.0, ptr::null(), &mut n, ptr::null_mut()) }, RelmapStatus::NullPointer);
    assert!(last_error().contains("params"));
    p.b = -1.0;
    assert_eq!(unsafe { relmap_cycles_to_failure(10.0, 350.0, &p, &mut n, ptr::null_mut()) }, RelmapStatus::InvalidArgument);
    assert!(last_error().contains('b'));

    let cfg = small_config();
    let (k, v) = (CString::new("grid.rows").unwrap(), CString::new("0").unwrap());
    assert_eq!(unsafe { relmap_config_set(cfg, k.as_ptr(), v.as_ptr()) }, RelmapStatus::Config);
    let k = CString::new("no.such.key").unwrap();
    assert_ne!(unsafe { relmap_config_set(cfg, k.as_ptr(), v.as_ptr()) }, RelmapStatus::Ok);
    unsafe { relmap_config_free(cfg) };

    let mut parsed = ptr::null_mut();
    let text = CString::new("[grid]\nrows = \"x\"\n").unwrap();
    assert_eq!(unsafe { relmap_config_parse(text.as_ptr(), &mut parsed) }, RelmapStatus::Parse);
    assert!(parsed.is_null());
}

#[test]
fn pack_bins_labels_dense_groups_and_noise() {
    let temps = [320.0, 320.5, 321.0, 340.0, 340.4, 340.8, 360.0];
    let mut labels = [0i64; 7];
    let mut bins = 0usize;
    let s = unsafe { relmap_pack_bins(temps.as_ptr(), temps.len(), 1.0, 2, labels.as_mut_ptr(), &mut bins) };
    assert_eq!(s, RelmapStatus::Ok, "{}", last_error());
    assert_eq!(bins, 2);
    assert_eq!(labels[..3], [labels[0]; 3]);
    assert_eq!(labels[3..6], [labels[3]; 3]);
    assert_ne!(labels[0], labels[3]);
    assert_eq!(labels[6], -1);
}

#[test]
fn simulate_and_read_report() {
    let cfg = small_config();
    let mut report = ptr::null_mut();
    let s = unsafe { relmap_simulate(cfg, 5, RelmapMapper::Rl, 3, &mut report) };
    assert_eq!(s, RelmapStatus::Ok, "{}", last_error());
    unsafe {
        assert_eq!(relmap_report_core_count(report), 16);
        let mut core = std::mem::zeroed::<RelmapCoreMttf>();
        assert_eq!(relmap_report_core_mttf(report, 3, &mut core), RelmapStatus::Ok);
        assert!(core.nbti > 0.0 && core.combined_finite > 0.0);
        assert_eq!(relmap_report_core_mttf(report, 16, &mut core), RelmapStatus::InvalidArgument);

        let mut sys = std::mem::zeroed::<RelmapSystemMttf>();
        assert_eq!(relmap_report_system_mttf(report, &mut sys), RelmapStatus::Ok);
        assert!(sys.combined.is_finite() && sys.combined > 0.0);

        let (mut d, mut c) = (0, 0);
        assert_eq!(relmap_report_task_counts(report, &mut d, &mut c), RelmapStatus::Ok);
        assert_eq!((d, c), (20, 20));

        let mut temps = vec![0.0; 16];
        assert_eq!(relmap_report_final_temps(report, temps.as_mut_ptr(), 15), RelmapStatus::InvalidArgument);
        assert_eq!(relmap_report_final_temps(report, temps.as_mut_ptr(), 16), RelmapStatus::Ok);
        let spread = temps.iter().cloned().fold(f64::MIN, f64::max) - temps.iter().cloned().fold(f64::MAX, f64::min);
        assert!((spread - relmap_report_final_spread(report)).abs() < 1e-12);

        let mut needed = 0;
        assert_eq!(relmap_report_decisions_csv(report, ptr::null_mut(), 0, &mut needed), RelmapStatus::InvalidArgument);
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(relmap_report_decisions_csv(report, buf.as_mut_ptr(), needed, &mut needed), RelmapStatus::Ok);
        let csv = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        assert!(csv.starts_with("task_id,"));
        assert_eq!(csv.lines().count(), 21);

        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(relmap_report_write(report, d.as_ptr()), RelmapStatus::Ok);
        assert!(dir.path().join("mttf_report.csv").exists());

        relmap_report_free(report);
        relmap_config_free(cfg);
    }
}

#[test]
fn compare_is_deterministic_across_calls() {
    let cfg = small_config();
    let mappers = [RelmapMapper::Rl, RelmapMapper::Random, RelmapMapper::TcGreedy];
    let seeds = [1u64, 2];
    let json = |cmp: *const RelmapComparison| unsafe {
        let mut needed = 0;
        relmap_comparison_to_json(cmp, ptr::null_mut(), 0, &mut needed);
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(relmap_comparison_to_json(cmp, buf.as_mut_ptr(), needed, ptr::null_mut()), RelmapStatus::Ok);
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    };
    unsafe {
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(relmap_compare(cfg, mappers.as_ptr(), 3, seeds.as_ptr(), 2, &mut a), RelmapStatus::Ok, "{}", last_error());
        assert_eq!(relmap_compare(cfg, mappers.as_ptr(), 3, seeds.as_ptr(), 2, &mut b), RelmapStatus::Ok);
        assert_eq!(json(a), json(b));
        let mut v = 0.0;
        assert_eq!(relmap_comparison_mttf(a, 1, RelmapMechanism::Combined, &mut v), RelmapStatus::Ok);
        assert!(v > 0.0);
        assert_eq!(relmap_comparison_final_spread(a, 3, &mut v), RelmapStatus::InvalidArgument);
        assert_eq!(relmap_compare(cfg, mappers.as_ptr(), 1, seeds.as_ptr(), 2, &mut b), RelmapStatus::InvalidArgument);
        relmap_comparison_free(a);
        relmap_comparison_free(b);
        relmap_config_free(cfg);
    }
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/relmap.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> =
        src.lines().filter_map(|l| l.split("extern \"C\" fn ").nth(1)).map(|rest| rest.split('(').next().unwrap()).collect();
    assert!(exports.len() >= 20);
    for f in &exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    for ty in ["typedef struct RelmapConfig RelmapConfig;", "typedef struct RelmapReport RelmapReport;", "RELMAP_STATUS_PANIC = 7"] {
        assert!(header.contains(ty), "{ty}");
    }

    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("use.c");
    std::fs::write(
        &c,
        "#include \"relmap.h\"\n\
         int main(void) {\n\
           RelmapTcParams p = relmap_tc_params_tabulated();\n\
           double n; bool d;\n\
           RelmapConfig *cfg = NULL;\n\
           if (relmap_config_default(&cfg) != RELMAP_STATUS_OK) return 1;\n\
           relmap_config_free(cfg);\n\
           return relmap_cycles_to_failure(10.0, 350.0, &p, &n, &d) == RELMAP_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&c)
        .output()
        .expect("a C compiler on PATH");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
