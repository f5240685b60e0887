use parabolic_obstacle_wasm::{curves_json, dini_json, sweep_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn wave_sweep_finds_one_regular_point_per_slice() {
    let out = parse(sweep_json("traveling-wave", r#"{"a":0.3}"#, 0.05, false).unwrap());
    let t = out["t"].as_array().unwrap();
    let x = out["x"].as_array().unwrap();
    assert_eq!(t.len(), 401);
    for (t, x) in t.iter().zip(x) {
        let (t, x) = (t.as_f64().unwrap(), x.as_f64().unwrap());
        assert!((x - 0.3 * t).abs() <= 0.05, "t {t} x {x}");
    }
    let regular = out["regular"].as_array().unwrap().iter().filter(|v| v.as_bool().unwrap()).count();
    assert!(regular > 200);
    assert!(out["lcp_residual"].is_null());
}

#[test]
fn solved_sweep_reports_the_lcp_residual() {
    let out = parse(sweep_json("half-space", "", 0.1, true).unwrap());
    assert!(out["lcp_residual"].as_f64().unwrap() <= 1e-8);
    assert!(!out["t"].as_array().unwrap().is_empty());
}

#[test]
fn half_space_curves_vanish() {
    let out = parse(curves_json("half-space", "", 0.05, 0.0, 0.0).unwrap());
    let radii = out["radii"].as_array().unwrap().len();
    assert!(radii > 5);
    for key in ["sigma", "n_reg", "m_reg"] {
        let v = out[key].as_array().unwrap();
        assert_eq!(v.len(), radii, "{key}");
        assert!(v.iter().all(|x| x.as_f64().unwrap() < 1e-6), "{key}: {v:?}");
    }
    assert_eq!(out["kappa"], 1.0);
}

#[test]
fn dini_of_a_power_is_its_closed_form() {
    let radii: Vec<f64> = (0..25).map(|k| 0.01 * 10f64.powf(k as f64 / 24.0 * 1.5)).collect();
    let values: Vec<String> = radii.iter().map(|r| format!("{}", r.sqrt())).collect();
    let radii: Vec<String> = radii.iter().map(|r| r.to_string()).collect();
    let out = parse(dini_json(&radii.join(","), &values.join(" ")).unwrap());
    let top: f64 = radii.last().unwrap().parse().unwrap();
    let exact = 2.0 * top.sqrt();
    assert!((out["value"].as_f64().unwrap() - exact).abs() < 1e-2 * exact, "{out}");
    assert_eq!(out["non_dini"], false);
}

#[test]
fn bad_inputs_are_reported() {
    assert!(sweep_json("traveling-wave", "", 0.001, false).unwrap_err().contains("h ="));
    assert!(sweep_json("nope", "", 0.05, false).is_err());
    assert!(sweep_json("traveling-wave", "{oops", 0.05, false).unwrap_err().starts_with("params"));
    assert!(curves_json("half-space", "", 0.05, 0.95, 0.0).is_err());
    assert!(dini_json("0.1 0.2", "1 x").unwrap_err().contains("`x`"));
    assert!(dini_json("0.2 0.1", "1 1").is_err());
}
