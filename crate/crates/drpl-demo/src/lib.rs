//! Browser demo for the robust policy-learning toolkit.
//!
//! Exposes three interactive views over `drpl`'s core math, each returning
//! a JSON payload the static page renders on a canvas:
//!
//! - `example1_sweep`: welfare of the two candidate rules as the ambiguity
//!   radius grows, with the target-composition slider `q`;
//! - `transport_map`: a discrete outcome distribution next to its
//!   worst-case transport as the radius grows;
//! - `kl_dual_curve`: the one-dimensional concave KL dual and its
//!   golden-section optimum against the Gaussian closed form.
//!
//! Build with `cargo build -p drpl-demo --target wasm32-unknown-unknown`
//! and run `wasm-bindgen` on the artifact (see `www/index.html`).

use serde::Serialize;
use wasm_bindgen::prelude::*;

use drpl::data::OutcomeSpace;
use drpl::mat::Mat;
use drpl::robust::{
    gaussian_kl_worst_case, kl_dual_objective, kl_worst_case_mean, robust_score,
    worst_case_transport, DiscreteConditional,
};
use drpl::sim::example1_scenario;

#[derive(Serialize)]
struct SweepPoint {
    delta: f64,
    g1_welfare: f64,
    g2_welfare: f64,
    winner: &'static str,
}

#[derive(Serialize)]
struct SweepPayload {
    q: f64,
    naive_g1: f64,
    naive_g2: f64,
    points: Vec<SweepPoint>,
    switch_delta: Option<f64>,
}

/// Welfare of the two candidate rules of the two-cell counterexample as a
/// function of the ambiguity radius.
fn example1_sweep_impl(q: f64, delta_max: f64, steps: usize) -> Result<SweepPayload, String> {
    let scenario = example1_scenario(q).map_err(|e| e.to_string())?;
    let class = scenario.policy_class.clone().expect("example1 carries its class");
    let (g1, g2) = (&class[0], &class[1]);
    let steps = steps.clamp(2, 2000);
    let mut points = Vec::with_capacity(steps + 1);
    let mut switch_delta = None;
    for i in 0..=steps {
        let delta = delta_max * i as f64 / steps as f64;
        let v1 = scenario.true_robust_welfare(g1, delta).map_err(|e| e.to_string())?;
        let v2 = scenario.true_robust_welfare(g2, delta).map_err(|e| e.to_string())?;
        let winner = if v1 >= v2 { "g1" } else { "g2" };
        if winner == "g2" && switch_delta.is_none() {
            switch_delta = Some(delta);
        }
        points.push(SweepPoint { delta, g1_welfare: v1, g2_welfare: v2, winner });
    }
    Ok(SweepPayload {
        q,
        naive_g1: scenario.true_robust_welfare(g1, 0.0).map_err(|e| e.to_string())?,
        naive_g2: scenario.true_robust_welfare(g2, 0.0).map_err(|e| e.to_string())?,
        points,
        switch_delta,
    })
}

#[derive(Serialize)]
struct TransportPayload {
    lower: Option<f64>,
    source_atoms: Vec<f64>,
    moved_atoms: Vec<f64>,
    weights: Vec<f64>,
    source_mean: f64,
    moved_mean: f64,
    closed_form: f64,
    transport_cost: f64,
}

/// Demo outcome distribution (earnings-like, skewed, in thousands).
const DEMO_ATOMS: [f64; 8] = [0.2, 0.7, 1.1, 1.6, 2.4, 3.1, 4.5, 7.0];
const DEMO_WEIGHTS: [f64; 8] = [0.10, 0.15, 0.18, 0.17, 0.15, 0.12, 0.08, 0.05];

fn transport_map_impl(delta: f64, lower_bounded: bool) -> Result<TransportPayload, String> {
    let ys = if lower_bounded { OutcomeSpace::nonnegative() } else { OutcomeSpace::unbounded() };
    let rows: Vec<Vec<f64>> = DEMO_ATOMS.iter().map(|&y| vec![y]).collect();
    let cond = DiscreteConditional::new(
        Mat::from_rows(&rows).map_err(|e| e.to_string())?,
        DEMO_WEIGHTS.to_vec(),
        &ys,
    )
    .map_err(|e| e.to_string())?;
    let mean = cond.coord_mean(1);
    let moved = worst_case_transport(&cond, 1, delta, &ys, mean).map_err(|e| e.to_string())?;
    let cost: f64 = (0..cond.n_atoms())
        .map(|i| DEMO_WEIGHTS[i] * (cond.atoms().get(i, 0) - moved.atoms().get(i, 0)).abs())
        .sum();
    Ok(TransportPayload {
        lower: lower_bounded.then_some(0.0),
        source_atoms: cond.coord_values(1),
        moved_atoms: moved.coord_values(1),
        weights: DEMO_WEIGHTS.to_vec(),
        source_mean: mean,
        moved_mean: moved.coord_mean(1),
        closed_form: robust_score(mean, delta, &ys),
        transport_cost: cost,
    })
}

#[derive(Serialize)]
struct DualPoint {
    lambda: f64,
    objective: f64,
}

#[derive(Serialize)]
struct DualPayload {
    delta: f64,
    points: Vec<DualPoint>,
    lambda_star: f64,
    dual_value: f64,
    gaussian_closed_form: f64,
    mean: f64,
}

/// KL dual objective for an equiprobable discretization of N(1, 1).
fn kl_dual_curve_impl(delta: f64, atoms: usize) -> Result<DualPayload, String> {
    let atoms = atoms.clamp(3, 4001);
    let (m, sd) = (1.0, 1.0);
    let values: Vec<f64> = (0..atoms)
        .map(|i| m + sd * normal_quantile((i as f64 + 0.5) / atoms as f64))
        .collect();
    let weights = vec![1.0 / atoms as f64; atoms];
    let solved = kl_worst_case_mean(&values, &weights, delta).map_err(|e| e.to_string())?;

    let range = values[atoms - 1] - values[0];
    let hi = (10.0 * range / delta.max(1e-3)).ln();
    let lo = (1e-4f64).ln();
    let points = (0..=200)
        .map(|i| {
            let lambda = (lo + (hi - lo) * i as f64 / 200.0).exp();
            DualPoint { lambda, objective: kl_dual_objective(&values, &weights, delta, lambda) }
        })
        .collect();
    Ok(DualPayload {
        delta,
        points,
        lambda_star: solved.lambda_star,
        dual_value: solved.value,
        gaussian_closed_form: gaussian_kl_worst_case(m, sd, delta),
        mean: m,
    })
}

/// Acklam's rational approximation of the standard normal quantile; ~1e-9
/// absolute error, plenty for plotting.
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

fn to_json<T: Serialize>(value: &Result<T, String>) -> Result<String, JsValue> {
    match value {
        Ok(v) => serde_json::to_string(v).map_err(|e| JsValue::from_str(&e.to_string())),
        Err(e) => Err(JsValue::from_str(e)),
    }
}

#[wasm_bindgen]
pub fn example1_sweep(q: f64, delta_max: f64, steps: usize) -> Result<String, JsValue> {
    to_json(&example1_sweep_impl(q, delta_max, steps))
}

#[wasm_bindgen]
pub fn transport_map(delta: f64, lower_bounded: bool) -> Result<String, JsValue> {
    to_json(&transport_map_impl(delta, lower_bounded))
}

#[wasm_bindgen]
pub fn kl_dual_curve(delta: f64, atoms: usize) -> Result<String, JsValue> {
    to_json(&kl_dual_curve_impl(delta, atoms))
}
