use nalgebra::DVector;
use pigroups::algorithms::{algorithm1, algorithm2, AlgorithmConfig};
use pigroups::dimension::{build_dimension_matrix, check_dimensionless, log_groups, nondim_output, PiBasis};
use pigroups::experiment::{Experiment, FnExperiment};
use pigroups::pipeflow::{
    friction_factor, pipe_quantity_system, poiseuille, regime_box, reynolds_range, FrictionModel, PipeFlow,
    PipeState, RegimeName,
};
use pigroups::quadrature::{latin_hypercube, Points, QuadratureSpec, RegimeBox};
use pigroups::report::{result_value, to_json_string};
use pigroups::subspace::{sign_aligned_column_diff, subspace_distance};
use pigroups::surrogate::fit_polynomial;
use pigroups::QuantitySystem;

const LAMINAR_POINT: [f64; 5] = [0.12, 5e-6, 0.65, 5e-5, 0.0275];

fn pipe() -> (QuantitySystem, PiBasis) {
    let system = pipe_quantity_system();
    let basis = PiBasis::for_system(&system).unwrap();
    (system, basis)
}

fn small_config() -> AlgorithmConfig {
    AlgorithmConfig { quadrature: QuadratureSpec::Tensor { points: 5 }, ..Default::default() }
}

#[test]
fn laminar_pi_is_half_the_friction_factor() {
    let (_, basis) = pipe();
    let piecewise = PipeFlow::new(FrictionModel::Piecewise { re_critical: 3000.0 });
    let dp = piecewise.evaluate(&LAMINAR_POINT).unwrap();
    let pi = nondim_output(dp, &LAMINAR_POINT, basis.w()).unwrap();
    let re = PipeState::from_point(&LAMINAR_POINT).unwrap().reynolds();
    assert!((pi / (poiseuille(re) / 2.0) - 1.0).abs() < 1e-12);
}

#[test]
fn log_groups_match_products_of_powers() {
    let (_, basis) = pipe();
    let gamma = log_groups(&LAMINAR_POINT, basis.basis()).unwrap();
    for j in 0..2 {
        let product: f64 = LAMINAR_POINT.iter().zip(basis.basis().column(j).iter()).map(|(q, e)| q.powf(*e)).product();
        assert!((gamma[j].exp() / product - 1.0).abs() < 1e-12);
    }
}

#[test]
fn laminar_box_corners_straddle_the_default_critical_reynolds_number() {
    let (lo, hi) = reynolds_range(&regime_box(RegimeName::Laminar));
    assert!(lo < 3000.0);
    // the upper corner reaches Re = 0.14 * 0.03 * 0.8 / 1e-6
    assert!((hi - 3360.0).abs() < 1e-9);
    let b = regime_box(RegimeName::Laminar);
    let mid: Vec<f64> = (0..5).map(|i| 0.5 * (b.bounds(i).0 + b.bounds(i).1)).collect();
    let s = PipeState::from_point(&mid).unwrap();
    assert_eq!(friction_factor(s.reynolds(), s.relative_roughness(), 3000.0).unwrap(), poiseuille(s.reynolds()));
}

#[test]
fn turbulent_groups_are_dimensionless() {
    let (system, basis) = pipe();
    let d = build_dimension_matrix(&system).unwrap();
    let r = algorithm2(&PipeFlow::default(), &system, &basis, &regime_box(RegimeName::Turbulent), &small_config()).unwrap();
    for j in 0..2 {
        assert!(check_dimensionless(&d, &r.z.column(j).into_owned()).unwrap() < 1e-10);
    }
    assert!(r.metadata.unique);
    for (nu, c) in r.sensitivity.iter().zip(r.c.diagonal().iter()) {
        assert_eq!(nu, c);
    }
}

fn turbulent_samples(count: usize, seed: u64) -> (Points, Vec<f64>, Vec<f64>, Points) {
    let (_, basis) = pipe();
    let pipe = PipeFlow::default();
    let design = latin_hypercube(&regime_box(RegimeName::Turbulent), count, seed).unwrap();
    let dp = pipe.evaluate_batch(&design).unwrap();
    let pis: Vec<f64> = design.rows().zip(&dp).map(|(q, v)| nondim_output(*v, q, basis.w()).unwrap()).collect();
    let gammas: Vec<f64> = design.rows().flat_map(|q| log_groups(q, basis.basis()).unwrap().iter().copied().collect::<Vec<_>>()).collect();
    (design, dp, pis, Points::new(2, gammas).unwrap())
}

fn std_dev(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn turbulent_surrogate_quality() {
    let (_, _, pis, gammas) = turbulent_samples(1000, 7);
    let s = fit_polynomial(&gammas, &pis, 2).unwrap();
    assert!(s.training_rmse() < 0.05 * std_dev(&pis));
    let (_, _, fresh_pis, fresh_gammas) = turbulent_samples(200, 8);
    assert!(s.rmse(&fresh_gammas, &fresh_pis).unwrap() < 0.05 * std_dev(&fresh_pis));

    let g = gammas.row(17);
    let grad = s.grad(g).unwrap();
    let h = 1e-6;
    for i in 0..2 {
        let mut a = g.to_vec();
        let mut b = g.to_vec();
        a[i] += h;
        b[i] -= h;
        let fd = (s.eval(&a).unwrap() - s.eval(&b).unwrap()) / (2.0 * h);
        assert!((fd - grad[i]).abs() < 1e-6 * grad[i].abs().max(1e-12));
    }
}

#[test]
fn semi_empirical_prediction_of_pressure_loss() {
    let (system, basis) = pipe();
    let config = AlgorithmConfig { quadrature: QuadratureSpec::Tensor { points: 3 }, ..Default::default() };
    let out = algorithm1(&PipeFlow::default(), &system, &basis, &regime_box(RegimeName::Turbulent), &config).unwrap();
    let (design, dp, _, _) = turbulent_samples(200, 99);
    let mut errors: Vec<f64> =
        design.rows().zip(&dp).map(|(q, truth)| (out.model.predict(q).unwrap() / truth - 1.0).abs()).collect();
    errors.sort_by(f64::total_cmp);
    assert!(errors[100] < 0.10, "median relative error {}", errors[100]);
}

#[test]
fn response_surface_and_finite_differences_agree_on_turbulent_flow() {
    let (system, basis) = pipe();
    let pipe = PipeFlow::default();
    let region = regime_box(RegimeName::Turbulent);
    let config = AlgorithmConfig::default();
    let fd = algorithm2(&pipe, &system, &basis, &region, &config).unwrap();
    let rs = algorithm1(&pipe, &system, &basis, &region, &config).unwrap();
    assert!(subspace_distance(&fd.u, &rs.result.u, 1).unwrap() < 0.02);
}

fn quadratic_experiment(basis: &PiBasis) -> impl Experiment {
    let w = basis.w().clone();
    let wm = basis.basis().clone();
    FnExperiment(move |q: &[f64]| {
        let x = DVector::from_iterator(5, q.iter().map(|v| v.ln()));
        let g = log_groups(q, &wm).unwrap();
        w.dot(&x).exp() * (1.0 + 0.5 * g[0] + 0.2 * g[1] + 0.1 * g[0] * g[0] + 0.05 * g[0] * g[1])
    })
}

#[test]
fn algorithms_agree_on_quadratic_groups() {
    let (system, basis) = pipe();
    let region = RegimeBox::new(&[(0.5, 2.0); 5]).unwrap();
    let exp = quadratic_experiment(&basis);
    let config = AlgorithmConfig { design: 60, ..small_config() };
    let fd = algorithm2(&exp, &system, &basis, &region, &config).unwrap();
    let rs = algorithm1(&exp, &system, &basis, &region, &config).unwrap();
    assert!(subspace_distance(&fd.u, &rs.result.u, 1).unwrap() < 1e-4);
}

#[test]
fn scaling_the_output_scales_eigenvalues_quadratically() {
    let (system, basis) = pipe();
    let region = RegimeBox::new(&[(0.5, 2.0); 5]).unwrap();
    let base = quadratic_experiment(&basis);
    let scaled = FnExperiment(|q: &[f64]| 7.0 * base.evaluate(q).unwrap());
    let a = algorithm2(&base, &system, &basis, &region, &small_config()).unwrap();
    let b = algorithm2(&scaled, &system, &basis, &region, &small_config()).unwrap();
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((y / (49.0 * x) - 1.0).abs() < 1e-8);
    }
    assert!(sign_aligned_column_diff(&a.u, &b.u).iter().all(|d| *d < 1e-10));
}

#[test]
fn results_are_reproducible_across_thread_counts() {
    let (system, basis) = pipe();
    let region = regime_box(RegimeName::Turbulent);
    let config = AlgorithmConfig { quadrature: QuadratureSpec::MonteCarlo { samples: 20_000 }, ..Default::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let r = algorithm2(&PipeFlow::default(), &system, &basis, &region, &config).unwrap();
            to_json_string(&result_value(&r)).unwrap()
        })
    };
    let one = run(1);
    assert_eq!(one, run(1));
    assert_eq!(one, run(3));
}

#[test]
fn system_documents_round_trip() {
    let text = r#"{
        "base_units": ["kg", "m", "s"],
        "independents": [
            {"name": "fluid density", "symbol": "rho", "unit": "kg/m^3"},
            {"name": "fluid viscosity", "symbol": "mu", "unit": "kg*m^-1*s^-1"},
            {"name": "pipe diameter", "symbol": "D", "unit": "m"},
            {"name": "pipe roughness", "symbol": "eps", "dims": [0, 1, 0]},
            {"name": "bulk velocity", "symbol": "V", "unit": "m/s"}
        ],
        "dependent": {"name": "pressure loss per length", "symbol": "dpdx", "unit": "kg*m^-2*s^-2"},
        "output_exponents": [1, 0, -1, 0, 2]
    }"#;
    let system = QuantitySystem::from_json(text).unwrap();
    assert_eq!(system, pipe_quantity_system());
    let again = QuantitySystem::from_json(&system.to_json_value().to_string()).unwrap();
    assert_eq!(again, system);
}
