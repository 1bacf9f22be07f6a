use imitation_web::{compare_json, fracture_json, scenarios_json, solve_json, MAX_WORK};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).expect("valid json")
}

#[test]
fn scenarios_lists_every_builtin() {
    let v = parse(&scenarios_json());
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|n| n.as_str().unwrap()).collect();
    assert!(names.contains(&"exp1_basic"));
    assert!(names.contains(&"river"));
}

#[test]
fn solve_reports_grid_values_and_policy() {
    let v = parse(&solve_json("exp1_basic").unwrap());
    let w = v["grid"]["width"].as_u64().unwrap() as usize;
    let h = v["grid"]["height"].as_u64().unwrap() as usize;
    assert_eq!(v["values"].as_array().unwrap().len(), w * h);
    assert_eq!(v["policy"].as_array().unwrap().len(), w * h);
    assert_eq!(v["grid"]["rows"].as_array().unwrap().len(), h);
    assert!(v["goals_per_1000"].as_f64().unwrap() > 0.0);
}

#[test]
fn compare_is_deterministic_and_sized() {
    let a = compare_json("exp1_basic", 2, 3000, 7, true).unwrap();
    let b = compare_json("exp1_basic", 2, 3000, 7, true).unwrap();
    assert_eq!(a, b);
    let v = parse(&a);
    let stride = v["stride"].as_u64().unwrap() as usize;
    let len = v["observer"].as_array().unwrap().len();
    assert_eq!(len, 3000usize.div_ceil(stride));
    assert_eq!(v["control"].as_array().unwrap().len(), len);
}

#[test]
fn compare_rejects_bad_sizes() {
    assert!(compare_json("exp1_basic", 0, 100, 1, true).is_err());
    assert!(compare_json("exp1_basic", 2, MAX_WORK, 1, true).is_err());
    assert!(compare_json("no_such_map", 1, 100, 1, true).is_err());
}

#[test]
fn fracture_has_one_entry_per_mentor() {
    let v = parse(&fracture_json("fracture_b").unwrap());
    let mentors = v["mentors"].as_array().unwrap();
    assert_eq!(mentors.len(), 1);
    assert!((mentors[0]["phi"].as_f64().unwrap() - 1.7).abs() < 0.01);
}
