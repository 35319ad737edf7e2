use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use modfilter_ffi::*;

const VACUUM: &str = r#"{
    "system": {"space": [{"label": "atom", "dim": 2}], "L": [{"op": "sigma_minus"}]},
    "grid": {"t_end": 2.0, "dt": 0.01},
    "observables": [{"name": "pe", "op": {"product": ["sigma_plus", "sigma_minus"]}}]
}"#;

fn parse(json: &str) -> (MfStatus, *mut MfScenario) {
    let c = CString::new(json).unwrap();
    let mut s = ptr::null_mut();
    let status = unsafe { mf_scenario_parse(c.as_ptr(), ptr::null(), &mut s) };
    (status, s)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mf_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn run_and_read_back() {
    let (status, s) = parse(VACUUM);
    assert_eq!(status, MfStatus::Ok);
    unsafe {
        assert_eq!(mf_scenario_override(s, f64::NAN, 1.0, f64::NAN), MfStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(mf_run(s, &mut r), MfStatus::Ok);
        assert_eq!(mf_result_exit_code(r), 0);
        let rows = mf_result_rows(r);
        assert_eq!(rows, 101);
        assert_eq!(mf_result_observables(r), 1);
        let mut t = vec![0.0; rows];
        let (mut re, mut im) = (vec![0.0; rows], vec![0.0; rows]);
        assert_eq!(mf_result_times(r, t.as_mut_ptr(), rows), MfStatus::Ok);
        assert_eq!(mf_result_observable(r, 0, false, re.as_mut_ptr(), im.as_mut_ptr(), rows), MfStatus::Ok);
        for i in 0..rows {
            assert!((re[i] - (-t[i]).exp()).abs() < 1e-8);
            assert_eq!(im[i], 0.0);
        }
        assert_eq!(mf_result_times(r, t.as_mut_ptr(), rows - 1), MfStatus::OutOfRange);
        assert_eq!(mf_result_observable(r, 0, true, re.as_mut_ptr(), im.as_mut_ptr(), rows), MfStatus::OutOfRange);
        let mut dev = 0.0;
        assert_eq!(mf_result_max_deviation(r, &mut dev), MfStatus::OutOfRange);

        let report = mf_result_report_json(r);
        let text = CStr::from_ptr(report).to_str().unwrap().to_owned();
        mf_string_free(report);
        assert!(modfilter::scenario::validate_report(&text).is_ok());
        let csv = mf_result_csv(r);
        assert!(CStr::from_ptr(csv).to_str().unwrap().starts_with("t,re(pe),im(pe)\n"));
        mf_string_free(csv);

        mf_result_free(r);
        mf_scenario_free(s);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let (status, s) = parse(r#"{"grid": {"t_end": 1.0, "dt": 0.1}, "extra": 0}"#);
    assert_eq!(status, MfStatus::Parse);
    assert!(s.is_null());
    assert!(!last_error().is_empty());

    let (status, s) = parse(VACUUM);
    assert_eq!(status, MfStatus::Ok);
    unsafe {
        assert_eq!(mf_scenario_override(s, 0.3, f64::NAN, f64::NAN), MfStatus::Parse);
        assert!(last_error().contains("dt"), "{}", last_error());
        mf_scenario_free(s);

        let path = CString::new("/nonexistent/scenario.json").unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(mf_scenario_load(path.as_ptr(), &mut s), MfStatus::Io);
        assert_eq!(mf_scenario_load(ptr::null(), &mut s), MfStatus::NullPointer);
        assert_eq!(mf_run(ptr::null(), &mut ptr::null_mut()), MfStatus::NullPointer);
        assert_eq!(mf_result_exit_code(ptr::null()), -1);
        mf_result_free(ptr::null_mut());
        mf_string_free(ptr::null_mut());
    }
}

#[test]
fn loads_corpus_scenario() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/sampled_pulse_replicate.json");
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(mf_scenario_load(c.as_ptr(), &mut s), MfStatus::Ok, "{}", last_error());
        let json = mf_scenario_to_json(s);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("sampled"));
        mf_string_free(json);
        mf_scenario_free(s);
    }
    let version = unsafe { CStr::from_ptr(mf_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = target_dir();
    if !lib_dir.join("libmodfilter_ffi.so").exists() && !lib_dir.join("libmodfilter_ffi.dylib").exists() {
        eprintln!("shared library not built in {}; skipping", lib_dir.display());
        return;
    }
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("modfilter_c_smoke");
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror"])
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c_smoke.c"))
        .arg("-L")
        .arg(&lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lmodfilter_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C smoke test exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).contains("rows"));
}

fn which_cc() -> Result<String, ()> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match Command::new(&cc).arg("--version").output() {
        Ok(o) if o.status.success() => Ok(cc),
        _ => Err(()),
    }
}
