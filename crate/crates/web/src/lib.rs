//! Browser bindings for the gridworld simulator.
//!
//! Each export returns a JSON string. The plain `*_json` functions hold the
//! logic so they can be exercised natively.

use implicit_imitation::gridworld::{scenario, scenario_names, GridWorld};
use implicit_imitation::harness::{run_experiment, ExperimentConfig};
use implicit_imitation::metrics::{fracture, policy_goal_rate, solve_world};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Upper bound on `runs * steps` for one in-browser comparison.
pub const MAX_WORK: usize = 400_000;

fn grid(world: &GridWorld) -> Value {
    let map = &world.map;
    let rows: Vec<String> = (0..map.height())
        .map(|y| (0..map.width()).map(|x| map.cell(map.index(x, y)).symbol()).collect())
        .collect();
    json!({ "width": map.width(), "height": map.height(), "rows": rows })
}

pub fn scenarios_json() -> String {
    json!(scenario_names()).to_string()
}

/// Optimal values and greedy move labels for the observer's world.
pub fn solve_json(name: &str) -> Result<String, String> {
    let sc = scenario(name).map_err(|e| e.to_string())?;
    let world = &sc.observer;
    let (_, values, policy) = solve_world(world, sc.gamma()).map_err(|e| e.to_string())?;
    let n = world.state_count();
    let labels: Vec<&str> = (0..n).map(|s| world.actions.labels[policy.action(s)]).collect();
    let values: Vec<f64> = (0..n).map(|s| values.get(s)).collect();
    Ok(json!({
        "grid": grid(world),
        "values": values,
        "policy": labels,
        "start_value": values[world.start()],
        "goals_per_1000": policy_goal_rate(world, &policy, 1000.0),
    })
    .to_string())
}

/// Averaged goal-rate curves of observer and control agents.
pub fn compare_json(name: &str, runs: usize, steps: usize, seed: u64, imitation: bool) -> Result<String, String> {
    if runs == 0 || steps == 0 {
        return Err("runs and steps must be positive".into());
    }
    if runs.saturating_mul(steps) > MAX_WORK {
        return Err(format!("runs x steps is capped at {MAX_WORK} in the browser"));
    }
    let mut config = ExperimentConfig::for_scenario(name).map_err(|e| e.to_string())?;
    config.runs = runs;
    config.steps = steps;
    config.seed = seed;
    config.imitation = imitation;
    let result = run_experiment(&config).map_err(|e| e.to_string())?;
    let stride = (steps / 200).max(1);
    let pick = |v: &[f64]| -> Vec<f64> { v.iter().step_by(stride).copied().collect() };
    let s = &result.summary;
    Ok(json!({
        "stride": stride,
        "observer": pick(&result.obs_mean),
        "control": pick(&result.ctrl_mean),
        "delta": pick(&result.delta),
        "summary": {
            "optimal_rate": s.optimal_rate,
            "obs_convergence": s.obs_convergence.map(|i| i + 1),
            "ctrl_convergence": s.ctrl_convergence.map(|i| i + 1),
            "obs_final": s.obs_final,
            "ctrl_final": s.ctrl_final,
        },
    })
    .to_string())
}

/// Fracture of the observer's world against each mentor's.
pub fn fracture_json(name: &str) -> Result<String, String> {
    let sc = scenario(name).map_err(|e| e.to_string())?;
    let mentors = sc
        .mentors
        .iter()
        .map(|m| {
            let f = fracture(&sc.observer, &m.world, sc.gamma()).map_err(|e| e.to_string())?;
            Ok(json!({ "phi": f.phi, "disputed": f.disputed, "grid": grid(&m.world) }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!({ "observer": grid(&sc.observer), "mentors": mentors }).to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn scenarios() -> String {
    scenarios_json()
}

#[wasm_bindgen]
pub fn solve(name: &str) -> Result<String, JsValue> {
    js(solve_json(name))
}

#[wasm_bindgen]
pub fn compare(name: &str, runs: u32, steps: u32, seed: u32, imitation: bool) -> Result<String, JsValue> {
    js(compare_json(name, runs as usize, steps as usize, u64::from(seed), imitation))
}

#[wasm_bindgen(js_name = fracture)]
pub fn fracture_js(name: &str) -> Result<String, JsValue> {
    js(fracture_json(name))
}
