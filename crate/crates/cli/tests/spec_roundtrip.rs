use std::collections::BTreeMap;
use std::path::PathBuf;

use condmeasure::random::{random_joint, random_model, random_net, ModelProfile, NetProfile, Profile};
use condmeasure_cli::spec::{weight, Model, ModelSpec};
use proptest::prelude::*;

fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn empty() -> Model {
    Model {
        spaces: BTreeMap::new(),
        joint: None,
        likelihood_model: None,
        net: None,
        experiment: None,
    }
}

/// spec → objects → spec → objects, then the text of the second spec
/// parses back to itself.
fn round_trip(model: &Model) {
    let spec = model.to_spec();
    let rebuilt = spec.build().unwrap();
    assert_eq!(rebuilt.joint, model.joint);
    assert_eq!(rebuilt.likelihood_model, model.likelihood_model);
    assert_eq!(rebuilt.net, model.net);
    assert_eq!(rebuilt.experiment, model.experiment);
    assert_eq!(rebuilt.to_spec(), spec);
    let text = spec.to_json();
    let reparsed = ModelSpec::parse(&text).unwrap();
    assert_eq!(reparsed, spec);
    assert_eq!(reparsed.build().unwrap().to_spec(), spec);
}

#[test]
fn shipped_models_round_trip() {
    let mut n = 0;
    for entry in std::fs::read_dir(models_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let model = ModelSpec::load(&path).unwrap().build().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            round_trip(&model);
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn fractions_stay_exact() {
    let text = r#"{"version":1,"spaces":{"u":{"intervals":[["-1/3","2/7"]]}},
        "joint":{"x":"u","y":"u","rects":[{"x":["-1/3","0.125"],"y":["0","2/7"],"value":"1"}],"normalize":true}}"#;
    let spec = ModelSpec::parse(text).unwrap();
    let back = spec.build().unwrap().to_spec();
    assert_eq!(back.spaces["u"].intervals, vec![["-1/3".to_string(), "2/7".to_string()]]);
    let r = &back.joint.as_ref().unwrap().rects[0];
    assert_eq!(r.x, ["-1/3".to_string(), "1/8".to_string()]);
    assert_eq!(r.y, ["0".to_string(), "2/7".to_string()]);
}

#[test]
fn weights_read_both_notations() {
    assert_eq!(weight("0.1", "w").unwrap(), 0.1);
    assert_eq!(weight("1/3", "w").unwrap(), 1.0 / 3.0);
    assert_eq!(weight("2.5e-3", "w").unwrap(), 0.0025);
    for bad in ["", "inf", "NaN", "1/0", "x", "1e999"] {
        assert!(weight(bad, "w").is_err(), "{bad}");
    }
}

fn schema_error(text: &str) -> String {
    let e = ModelSpec::parse(text).and_then(|s| s.build()).unwrap_err();
    assert_eq!(e.exit_code(), 1);
    format!("{}: {e}", e.code())
}

#[test]
fn malformed_files_are_rejected() {
    let unknown = schema_error(r#"{"version":1,"spaces":{"u":{"atoms":["a"],"colour":"red"}}}"#);
    assert!(unknown.starts_with("schema") && unknown.contains("colour"), "{unknown}");
    assert!(schema_error(r#"{"version":2}"#).contains("version 2"));
    assert!(schema_error(r#"{"spaces":{}}"#).contains("version"));
    assert!(schema_error(r#"{"version":1,"joint":{"x":"nowhere","y":"nowhere"}}"#).contains("nowhere"));
    let bad_fraction = schema_error(
        r#"{"version":1,"spaces":{"u":{"intervals":[["0","1/0"]]}}}"#,
    );
    assert!(bad_fraction.starts_with("schema"), "{bad_fraction}");
    let unnormalized = schema_error(
        r#"{"version":1,"spaces":{"u":{"intervals":[["0","1"]]}},
            "joint":{"x":"u","y":"u","rects":[{"x":["0","1"],"y":["0","1"],"value":"2"}]}}"#,
    );
    assert!(unnormalized.starts_with("invalid_model"), "{unnormalized}");
    let line = schema_error(
        r#"{"version":1,"spaces":{"u":{"intervals":[["0","1"]]}},
            "joint":{"x":"u","y":"u","curves":[{"line":{"kind":"spiral"},"density":[]}]}}"#,
    );
    assert!(line.contains("spiral"), "{line}");
}

#[test]
fn net_caps_are_enforced() {
    let text = r#"{"version":1,"spaces":{"c":{"atoms":["h","t"]}},"net":{"max_nodes":1,"nodes":[
        {"name":"a","space":"c","table":[["0.5","0.5"]]},
        {"name":"b","space":"c","table":[["0.5","0.5"]]}]}}"#;
    let e = ModelSpec::parse(text).unwrap().build().unwrap_err();
    assert_eq!((e.code(), e.exit_code()), ("cap", 1));
}

#[test]
fn parents_must_come_first() {
    let text = r#"{"version":1,"spaces":{"c":{"atoms":["h","t"]}},"net":{"nodes":[
        {"name":"a","space":"c","parents":["b"],"table":[["0.5","0.5"],["0.5","0.5"]]},
        {"name":"b","space":"c","table":[["0.5","0.5"]]}]}}"#;
    assert!(schema_error(text).contains("earlier node"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn random_joints_round_trip(seed in any::<u64>()) {
        let mut m = empty();
        m.joint = Some(random_joint(seed, Profile::ALL[(seed % 4) as usize]));
        round_trip(&m);
    }

    #[test]
    fn random_likelihood_models_round_trip(seed in any::<u64>()) {
        let mut m = empty();
        m.likelihood_model = Some(random_model(seed, ModelProfile::ALL[(seed % 3) as usize]));
        round_trip(&m);
    }

    #[test]
    fn random_nets_round_trip(seed in any::<u64>(), atoms_only in any::<bool>()) {
        let mut m = empty();
        m.net = Some(random_net(seed, &NetProfile { atoms_only, ..Default::default() }));
        round_trip(&m);
    }
}
