use std::path::Path;

use modfilter::hierarchy::{integrate_lindblad, InputFieldState};
use modfilter::scenario::{
    emit, load_scenario, parse_scenario, parse_scenario_in, run, validate_report, InputSpec, OutputPaths, RunMode,
    RunStatus,
};
use modfilter::{Error, C64};

const MINIMAL: &str = r#"{
    "system": {"space": [{"label": "atom", "dim": 2}], "L": [{"op": "sigma_minus"}]},
    "grid": {"t_end": 1.0, "dt": 0.1}
}"#;

fn corpus() -> Vec<std::path::PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

fn with_system(extra: &str) -> String {
    format!(
        r#"{{
        "system": {{"space": [{{"label": "atom", "dim": 2}}], "L": [{{"op": "sigma_minus", "coeff": 1.0}}]}},
        "initial_state": {{"basis": 0}},
        {extra}
    }}"#
    )
}

#[test]
fn minimal_document_defaults() {
    let s = parse_scenario(MINIMAL).unwrap();
    assert_eq!(s.spec.run_mode, RunMode::Hierarchy);
    assert_eq!(s.spec.input, InputSpec::Vacuum);
    assert_eq!(s.input, InputFieldState::Vacuum);
    assert_eq!(s.spec.grid.sample_every, 1);
    assert_eq!(s.spec.tolerances, Default::default());
}

#[test]
fn sigma_minus_shorthand_is_lowering() {
    let s = parse_scenario(MINIMAL).unwrap();
    let l = s.model.coupling_at(0.0);
    let want = [[0.0, 0.0], [1.0, 0.0]];
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(l[(i, j)], C64::from(want[i][j]));
        }
    }
}

#[test]
fn unknown_field_is_rejected_with_path() {
    let text = MINIMAL.replace(r#""dt": 0.1"#, r#""dt": 0.1, "stpes": 3"#);
    let err = parse_scenario(&text).unwrap_err();
    let Error::Scenario { path, message } = &err else { panic!("{err}") };
    assert_eq!(path, "grid.stpes");
    assert!(message.contains("stpes"), "{message}");

    let text = MINIMAL.replace(r#""grid""#, r#""colour": 1, "grid""#);
    assert!(parse_scenario(&text).is_err());
}

#[test]
fn malformed_pulse_norm_names_field() {
    let dir = tempfile::tempdir().unwrap();
    // Constant 0.5 on [0, 1]: squared norm 0.25 by any quadrature.
    let csv: String = (0..=100).map(|i| format!("{},0.5\n", i as f64 / 100.0)).collect();
    std::fs::write(dir.path().join("half.csv"), csv).unwrap();
    let text = with_system(
        r#""input": {"type": "fock", "n": 1, "xi": {"type": "sampled", "path": "half.csv"}},
           "grid": {"t_end": 1.0, "dt": 0.1}"#,
    );
    let err = parse_scenario_in(&text, dir.path()).unwrap_err();
    let Error::Scenario { path, message } = &err else { panic!("{err}") };
    assert_eq!(path, "input.xi");
    assert!(message.contains("norm 0.5"), "{message}");
}

#[test]
fn dimension_mismatch_is_reported() {
    let text = MINIMAL.replace(r#""op": "sigma_minus""#, r#""op": {"matrix": [[0, 0, 0], [1, 0, 0], [0, 0, 0]]}"#);
    let err = parse_scenario(&text).unwrap_err();
    let Error::Scenario { path, .. } = &err else { panic!("{err}") };
    assert_eq!(path, "system.L[0].op");

    let text = MINIMAL.replace(r#""op": "sigma_minus""#, r#""op": "a""#).replace("\"dim\": 2", "\"dim\": 3");
    assert!(parse_scenario(&text).is_ok());
    let text = MINIMAL.replace("\"dim\": 2", "\"dim\": 3");
    let err = parse_scenario(&text).unwrap_err();
    assert!(matches!(err, Error::Scenario { ref path, .. } if path == "system.L[0].op"), "{err}");
}

#[test]
fn multi_factor_names_need_labels() {
    let text = r#"{
        "system": {"space": [{"label": "a1", "dim": 2}, {"label": "a2", "dim": 2}], "L": [{"op": "sigma_minus"}]},
        "grid": {"t_end": 1.0, "dt": 0.1}
    }"#;
    assert!(parse_scenario(text).is_err());
    assert!(parse_scenario(&text.replace("\"sigma_minus\"", "\"sigma_minus:a2\"")).is_ok());
}

#[test]
fn parse_round_trip_is_lossless() {
    for path in corpus() {
        let s = load_scenario(&path).unwrap();
        let again = parse_scenario_in(&s.to_json(), &s.base_dir).unwrap();
        assert_eq!(again.spec, s.spec, "{}", path.display());
        assert_eq!(again.input, s.input);
    }
}

#[test]
fn vacuum_decay_matches_closed_form() {
    let text = with_system(
        r#""grid": {"t_end": 5.0, "dt": 0.01},
           "observables": [{"name": "pe", "op": {"product": ["sigma_plus", "sigma_minus"]}}]"#,
    );
    let r = run(&parse_scenario(&text).unwrap()).unwrap();
    for (t, v) in r.table.times.iter().zip(&r.table.values[0]) {
        assert!((v.re - (-t).exp()).abs() < 1e-6, "t={t}");
    }
    assert_eq!(r.status(), RunStatus::Pass);
}

#[test]
fn cascade_with_zero_coupling_is_plain_lindblad() {
    let text = with_system(
        r#""grid": {"t_end": 3.0, "dt": 0.01}, "run_mode": "cascade",
           "observables": [{"name": "sz", "op": "sigma_z"}, {"name": "sx", "op": "sigma_x"}]"#,
    );
    let s = parse_scenario(&text).unwrap();
    let r = run(&s).unwrap();
    let lind = integrate_lindblad(&s.model, &s.psi0.to_density().into_matrix(), &s.config).unwrap();
    for (k, (_, x)) in s.observables.iter().enumerate() {
        assert_eq!(r.table.values[k], lind.expectation(x));
    }
}

#[test]
fn replicate_single_photon_passes() {
    let text = with_system(
        r#""initial_state": {"basis": 1},
           "input": {"type": "fock", "n": 1, "xi": {"type": "exp_decay", "gamma": 1.0}},
           "grid": {"t_end": 10.0, "dt": 0.01}, "run_mode": "replicate",
           "observables": [{"name": "sz", "op": "sigma_z"}]"#,
    )
    .replace(r#""initial_state": {"basis": 0},"#, "");
    let r = run(&parse_scenario(&text).unwrap()).unwrap();
    let rep = r.report.replication.as_ref().unwrap();
    assert!(rep.max_deviation < 1e-5, "{rep:?}");
    assert_eq!(r.status(), RunStatus::Pass);
    assert!(r.cascade_table.is_some());
}

#[test]
fn csv_shape() {
    let none = with_system(r#""grid": {"t_end": 1.0, "dt": 0.1}"#);
    let csv = run(&parse_scenario(&none).unwrap()).unwrap().table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t");
    assert_eq!(lines.len(), 12);
    assert!(lines[1..].iter().all(|l| !l.contains(',')));

    let two = with_system(
        r#""grid": {"t_end": 1.0, "dt": 0.001},
           "observables": [{"name": "sz", "op": "sigma_z"}, {"name": "sx", "op": "sigma_x"}]"#,
    );
    let csv = run(&parse_scenario(&two).unwrap()).unwrap().table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,re(sz),im(sz),re(sx),im(sx)");
    assert_eq!(lines.len(), 1002);
    let mut prev = f64::NEG_INFINITY;
    for l in &lines[1..] {
        let cols: Vec<&str> = l.split(',').collect();
        assert_eq!(cols.len(), 5);
        let t: f64 = cols[0].parse().unwrap();
        assert!(t > prev);
        prev = t;
        // 17 significant digits.
        assert_eq!(cols[1].split('e').next().unwrap().trim_start_matches('-').replace('.', "").len(), 17);
    }
}

#[test]
fn report_round_trips_and_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/cat_replicate.json");
    let s = load_scenario(&path).unwrap().with_overrides(&Default::default()).unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let paths = OutputPaths::resolve(&s, "cat", Some(&dir.path().join(k.to_string())));
        let r = run(&s).unwrap();
        emit(&r, &paths).unwrap();
        let report = std::fs::read_to_string(&paths.report).unwrap();
        assert_eq!(validate_report(&report).unwrap(), r.report);
        outputs.push((std::fs::read(&paths.csv).unwrap(), report, std::fs::read(paths.cascade_csv()).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(validate_report(&outputs[0].1.replace("\"schema_version\": 1", "\"schema_version\": 9")).is_err());
}

#[test]
fn corpus_scenarios_pass() {
    for path in corpus() {
        let s = load_scenario(&path).unwrap();
        let r = run(&s).unwrap();
        assert_eq!(r.status(), RunStatus::Pass, "{}: {:?}", path.display(), r.report.audit);
    }
}
