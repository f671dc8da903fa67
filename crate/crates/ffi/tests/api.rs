use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use packing_sim_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    ps_string_free(p);
    s
}

unsafe fn last_error() -> String {
    CStr::from_ptr(ps_last_error()).to_str().unwrap().to_owned()
}

#[test]
fn space_handle_roundtrip() {
    unsafe {
        let mut space = ptr::null_mut();
        let json = c(r#"{"B": [3], "b": [[1], [2]]}"#);
        assert_eq!(ps_space_from_json(json.as_ptr(), &mut space), PsStatus::Ok);
        let (mut n, mut types) = (0usize, 0usize);
        assert_eq!(ps_space_len(space, &mut n), PsStatus::Ok);
        assert_eq!(ps_space_num_types(space, &mut types), PsStatus::Ok);
        assert_eq!((n, types), (5, 2));
        let mut k = [0u32; 2];
        assert_eq!(ps_space_config(space, 0, k.as_mut_ptr(), 2), PsStatus::Ok);
        assert_eq!(k.iter().sum::<u32>(), 1);
        assert_eq!(ps_space_config(space, 9, k.as_mut_ptr(), 2), PsStatus::IndexOutOfRange);
        assert_eq!(ps_space_config(space, 0, k.as_mut_ptr(), 1), PsStatus::BufferTooSmall);
        assert!(last_error().contains("need 2"));

        let (lambda, mu) = ([0.5, 0.25], [1.0, 1.0]);
        let mut x = [0.0; 5];
        let mut f = 0.0;
        let st = ps_solve_xstar(space, lambda.as_ptr(), mu.as_ptr(), 2, 1.0, x.as_mut_ptr(), 5, &mut f);
        assert_eq!(st, PsStatus::Ok);
        assert!(f > 0.0 && x.iter().all(|v| *v >= 0.0));
        ps_space_free(space);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut space = ptr::null_mut();
        assert_eq!(ps_space_from_json(ptr::null(), &mut space), PsStatus::NullPointer);
        let bad = c("{not json");
        assert_eq!(ps_space_from_json(bad.as_ptr(), &mut space), PsStatus::InvalidJson);
        let missing_unit = c(r#"{"configs": [[2]]}"#);
        assert_eq!(ps_space_from_json(missing_unit.as_ptr(), &mut space), PsStatus::InvalidInput);
        assert!(!last_error().is_empty());
        assert!(space.is_null());
        let mut out = ptr::null_mut();
        assert_eq!(ps_solve_json(bad.as_ptr(), &mut out), PsStatus::InvalidJson);
        ps_string_free(ptr::null_mut());
        ps_space_free(ptr::null_mut());
        ps_sim_free(ptr::null_mut());
    }
}

#[test]
fn solve_json_matches_closed_form() {
    unsafe {
        let json = c(r#"{"space": {"configs": [[1], [2]]}, "demand": {"lambda": [1], "mu": [1]}}"#);
        let mut out = ptr::null_mut();
        assert_eq!(ps_solve_json(json.as_ptr(), &mut out), PsStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        let x: Vec<f64> = serde_json::from_value(v["xstar"].clone()).unwrap();
        assert!((x[0] - 0.2).abs() < 1e-9 && (x[1] - 0.4).abs() < 1e-9);
    }
}

#[test]
fn simulation_is_deterministic() {
    unsafe {
        let json = c(r#"{"space": {"configs": [[1], [2]]}, "demand": {"lambda": [1], "mu": [1]},
                        "r": 100, "mode": "open", "discipline": "greedy-dm", "horizon": 20, "burn_in": 5}"#);
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut sim = ptr::null_mut();
            assert_eq!(ps_sim_from_json(json.as_ptr(), &mut sim), PsStatus::Ok);
            let mut out = ptr::null_mut();
            assert_eq!(ps_sim_summary_json(sim, &mut out), PsStatus::InvalidInput);
            assert_eq!(ps_sim_set_seed(sim, 5), PsStatus::Ok);
            assert_eq!(ps_sim_run(sim), PsStatus::Ok);
            assert_eq!(ps_sim_summary_json(sim, &mut out), PsStatus::Ok);
            runs.push(take(out));
            let mut count = 0;
            assert_eq!(ps_sim_snapshot_count(sim, &mut count), PsStatus::Ok);
            assert!(count > 0);
            let (mut t, mut x) = (0.0, [0.0; 2]);
            assert_eq!(ps_sim_snapshot_x(sim, count - 1, &mut t, x.as_mut_ptr(), 2), PsStatus::Ok);
            assert!(t >= 5.0 && (x[0] + 2.0 * x[1]) > 0.0);
            ps_sim_free(sim);
        }
        assert_eq!(runs[0], runs[1]);
        let v: serde_json::Value = serde_json::from_str(&runs[0]).unwrap();
        assert!(v["l2_to_xstar"].as_f64().is_some());
    }
}

#[test]
fn invalid_simulation_config_is_rejected() {
    unsafe {
        let json = c(r#"{"space": {"configs": [[1]]}, "demand": {"lambda": [1], "mu": [1]},
                        "r": 10, "mode": "closed", "discipline": "greedy-dm"}"#);
        let mut sim = ptr::null_mut();
        assert_eq!(ps_sim_from_json(json.as_ptr(), &mut sim), PsStatus::InvalidInput);
        assert!(sim.is_null());
    }
}

#[test]
fn experiment_json() {
    unsafe {
        let json = c(r#"{"base": {"space": {"configs": [[1], [2]]}, "demand": {"lambda": [1], "mu": [1]},
                        "r": 10, "mode": "closed", "discipline": "greedy-d", "horizon": 10, "burn_in": 2},
                        "r_grid": [20, 40], "replications": 2}"#);
        let mut out = ptr::null_mut();
        assert_eq!(ps_experiment_run_json(json.as_ptr(), &mut out), PsStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["cells"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ps_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn find_static_lib() -> Option<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target");
    ["debug", "release"]
        .iter()
        .flat_map(|p| [root.join(p), root.join(p).join("deps")])
        .map(|d| d.join("libpacking_sim_ffi.a"))
        .find(|p| p.exists())
}

#[test]
fn header_compiles_and_links_from_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/packing_sim.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["ps_space_from_json", "ps_sim_run", "ps_last_error", "PS_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let (Some(lib), Ok(_)) = (find_static_lib(), Command::new("cc").arg("--version").output()) else {
        eprintln!("skipping C link check: no static library or C compiler");
        return;
    };
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("x*=(0.200,0.400)"));
}
