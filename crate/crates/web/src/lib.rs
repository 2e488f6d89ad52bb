//! Browser demo: analytic model spectra, draws from the correction prior and
//! a short posterior fit, all returned as JSON strings for the page script.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use vnpc_core::linalg::CMatrix;
use vnpc_core::prior::{eval_q, sample_atoms_series, BernsteinConfig, LevyConfig};
use vnpc_core::sampler::{run_chain, McmcConfig, Procedure};
use vnpc_core::summary::{squared_coherency, SummaryBundle};
use vnpc_core::timefreq::FrequencyGrid;
use vnpc_core::var::{var_spectral_density_on_grid, BuiltinModel, VarParams};
use vnpc_core::{Error, Result};

/// Spectral curves of a bivariate series on `[0, pi]`.
#[derive(Serialize)]
pub struct Curves {
    pub omegas: Vec<f64>,
    pub f11: Vec<f64>,
    pub f22: Vec<f64>,
    pub re_f12: Vec<f64>,
    pub im_f12: Vec<f64>,
    pub coherency: Vec<f64>,
}

impl Curves {
    fn from_matrices(omegas: Vec<f64>, mats: &[CMatrix]) -> Result<Self> {
        Ok(Self {
            omegas,
            f11: mats.iter().map(|m| m[(0, 0)].re).collect(),
            f22: mats.iter().map(|m| m[(1, 1)].re).collect(),
            re_f12: mats.iter().map(|m| m[(0, 1)].re).collect(),
            im_f12: mats.iter().map(|m| m[(0, 1)].im).collect(),
            coherency: mats
                .iter()
                .map(|m| squared_coherency(m, 0, 1))
                .collect::<Result<_>>()?,
        })
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

/// Spectral density of the bivariate VAR(1) `z_t = A z_{t-1} + e_t` with
/// `A = [[a11, a12], [a21, a22]]` and innovation covariance
/// `[[s11, s12], [s12, s22]]`, on the half grid of length `n`.
pub fn var1_curves(a: [f64; 4], s11: f64, s12: f64, s22: f64, n: usize) -> Result<String> {
    let params = VarParams::new(2, vec![a.to_vec()], vec![s11, s12, s12, s22])?;
    let radius = params.companion_spectral_radius();
    if radius >= 1.0 {
        return Err(Error::NonStationary { order: 1, radius });
    }
    let grid = FrequencyGrid::new(n)?;
    let mats: Vec<CMatrix> = var_spectral_density_on_grid(&params, &grid)?
        .into_iter()
        .map(|m| m.into_matrix())
        .collect();
    Ok(json(&Curves::from_matrices(grid.omegas(), &mats)?))
}

/// One draw of the correction field `Q` from its prior with `l` atoms and
/// Bernstein degree `k`.
pub fn prior_q_curves(k: usize, l: usize, seed: u64, n: usize) -> Result<String> {
    let levy = LevyConfig::new(1.0, 1.0)?;
    let bern = BernsteinConfig::new(k.max(1), 0.1, 0.9)?;
    let atoms = sample_atoms_series(&levy, l.max(1), 2, seed);
    let grid = FrequencyGrid::new(n)?;
    let mats: Vec<CMatrix> = (0..grid.half_len())
        .map(|j| eval_q(&atoms, k.max(1), grid.omega(j), &bern).into_matrix())
        .collect();
    Ok(json(&Curves::from_matrices(grid.omegas(), &mats)?))
}

#[derive(Serialize)]
struct FitResult {
    label: String,
    median: Curves,
    lower: Curves,
    upper: Curves,
    truth: Curves,
    l1: f64,
    l2: f64,
    covered: bool,
    xi: f64,
}

fn component_curves(
    omegas: &[f64],
    bundle: &SummaryBundle,
    values: &[f64],
    coherency: Vec<f64>,
) -> Curves {
    let col = |c| bundle.component(values, c).collect();
    Curves {
        omegas: omegas.to_vec(),
        f11: col(0),
        re_f12: col(1),
        im_f12: col(2),
        f22: col(3),
        coherency,
    }
}

/// Simulates `n` observations from a builtin model (`var2` or `vma1`), runs a
/// short chain and returns the posterior median, 90% uniform band and truth.
pub fn fit_builtin(
    model: &str,
    procedure: &str,
    order: usize,
    n: usize,
    iterations: usize,
    seed: u64,
) -> Result<String> {
    let model = BuiltinModel::parse(model)?;
    let procedure = match procedure {
        "vnp" => Procedure::Vnp,
        "var" => Procedure::Var {
            order: order.max(1),
        },
        _ => Procedure::Vnpc {
            order: order.max(1),
        },
    };
    let z = model.simulate(n, seed)?;
    let cfg = McmcConfig {
        iterations,
        burn_in: iterations / 2,
        thin: 1,
        seed,
        procedure,
        truncation: Some(15),
        ..McmcConfig::default()
    };
    let draws = run_chain(&z, &cfg)?;
    let mut bundle = SummaryBundle::new(&draws, 0.9)?;
    let truth: Vec<CMatrix> = model
        .spectral_density_on_grid(&draws.grid)?
        .into_iter()
        .map(|m| m.into_matrix())
        .collect();
    let cmp = bundle.compare_truth(&draws.grid, &truth)?.clone();
    let coh = bundle.coherency.first().cloned();
    let (cm, cl, cu) = coh.map_or((vec![], vec![], vec![]), |c| (c.median, c.lower, c.upper));
    let omegas = bundle.omegas.clone();
    let result = FitResult {
        label: procedure.label(),
        median: component_curves(&omegas, &bundle, &bundle.median, cm),
        lower: component_curves(&omegas, &bundle, &bundle.region.lower, cl),
        upper: component_curves(&omegas, &bundle, &bundle.region.upper, cu),
        truth: Curves::from_matrices(omegas.clone(), &truth)?,
        l1: cmp.l1,
        l2: cmp.l2,
        covered: cmp.covered,
        xi: bundle.region.xi,
    };
    Ok(json(&result))
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = var1Curves)]
#[allow(clippy::too_many_arguments)]
pub fn var1_curves_js(
    a11: f64,
    a12: f64,
    a21: f64,
    a22: f64,
    s11: f64,
    s12: f64,
    s22: f64,
    n: usize,
) -> std::result::Result<String, JsError> {
    js(var1_curves([a11, a12, a21, a22], s11, s12, s22, n))
}

#[wasm_bindgen(js_name = priorQCurves)]
pub fn prior_q_curves_js(
    k: usize,
    l: usize,
    seed: u32,
    n: usize,
) -> std::result::Result<String, JsError> {
    js(prior_q_curves(k, l, seed as u64, n))
}

#[wasm_bindgen(js_name = fitBuiltin)]
pub fn fit_builtin_js(
    model: &str,
    procedure: &str,
    order: usize,
    n: usize,
    iterations: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(fit_builtin(
        model,
        procedure,
        order,
        n,
        iterations,
        seed as u64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn var1_white_noise_is_flat() {
        let v: serde_json::Value =
            serde_json::from_str(&var1_curves([0.0; 4], 2.0, 0.0, 1.0, 16).unwrap()).unwrap();
        let f11 = v["f11"].as_array().unwrap();
        assert_eq!(f11.len(), 9);
        for x in f11 {
            assert!((x.as_f64().unwrap() - 2.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn prior_draw_is_positive_on_the_diagonal() {
        let v: serde_json::Value =
            serde_json::from_str(&prior_q_curves(8, 10, 3, 32).unwrap()).unwrap();
        assert!(v["f11"]
            .as_array()
            .unwrap()
            .iter()
            .all(|x| x.as_f64().unwrap() >= 0.0));
        assert!(v["coherency"]
            .as_array()
            .unwrap()
            .iter()
            .all(|x| (0.0..=1.0 + 1e-9).contains(&x.as_f64().unwrap())));
    }

    #[test]
    fn short_fit_returns_bands_around_median() {
        let v: serde_json::Value =
            serde_json::from_str(&fit_builtin("vma1", "vnpc", 1, 64, 200, 1).unwrap()).unwrap();
        let med = v["median"]["f22"].as_array().unwrap();
        let lo = v["lower"]["f22"].as_array().unwrap();
        let hi = v["upper"]["f22"].as_array().unwrap();
        for ((m, l), h) in med.iter().zip(lo).zip(hi) {
            assert!(l.as_f64() <= m.as_f64() && m.as_f64() <= h.as_f64());
        }
        assert!(v["l1"].as_f64().unwrap() > 0.0);
        assert!(var1_curves([1.2, 0.0, 0.0, 0.0], 1.0, 0.0, 1.0, 16).is_err());
        assert!(fit_builtin("arma", "vnp", 0, 64, 200, 1).is_err());
    }
}
