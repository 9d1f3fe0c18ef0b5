//! Posterior predictive trajectories after a fit: whole trajectories of new
//! subjects from baseline covariates and a first visit, continuations of
//! truncated training subjects, and the predictive law of the
//! autoregression matrix at chosen covariate values.
//!
//! `cargo run --release --example predict_trajectories [n_iter]`

use lsbvar::gibbs::{fit, Model, PriorKind, SamplerConfig};
use lsbvar::model::{Dims, ModelHyperparams};
use lsbvar::postprocess::{predict_ins, predict_oos, predictive_phi, predictive_quantiles, squared_error};
use lsbvar::simulation::{make_ins_split, make_oos_split, scenario_components, Scenario, ScenarioSpec};
use nalgebra::{DVector, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lsbvar::Result<()> {
    let n_iter: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut spec = ScenarioSpec::new(Scenario::I);
    spec.n_subjects = 150;
    let (train, test) = make_oos_split(&spec, 5, &mut rng)?;
    let split = make_ins_split(&train.dataset, 20, 5, &mut rng)?;

    let hyper = ModelHyperparams::simulation_defaults(Dims { k: 3, p: 1, q: 2 }, 25);
    let model = Model::new(&split.dataset, &hyper, PriorKind::Lsb)?;
    let config = SamplerConfig { n_iter, burn_in: n_iter / 2, thin: 5, seed: 21, ..Default::default() };
    let samples = fit(&model, &config)?.samples;

    let s = test.dataset.subject(0);
    let y_1 = s.responses.row(0).transpose();
    let oos = predict_oos(&samples, &s.base_covariates, &y_1, &s.tv_covariates, s.horizon(), &mut rng)?;
    println!("new subject {} (z = {:.2}): first response, 95% band", s.id, s.base_covariates.transpose());
    for row in predictive_quantiles(&oos.draws, &[0.025, 0.5, 0.975]).iter().filter(|r| r.response == 1) {
        let truth = s.responses[(row.time - 1, 0)];
        println!("  t = {:>2}: median {:>7.3} in [{:>7.3}, {:>7.3}], observed {truth:>7.3}", row.time, row.values[1], row.values[0], row.values[2]);
    }

    let tail = &split.tails[0];
    let ins = predict_ins(&samples, &split.dataset, tail.subject, split.t_cut, &tail.tv_covariates, &mut rng)?;
    let (sse, n) = squared_error(&ins.median, &tail.responses, &tail.observed)?;
    println!("truncated subject {}: {}-step continuation MSE {:.3}", split.dataset.subject(tail.subject).id, tail.responses.nrows(), sse / n as f64);

    let targets = scenario_components();
    for z in [[-3.0, 0.0], [3.0, 0.0], [0.0, 0.0]] {
        let draws = predictive_phi(&samples, &DVector::from_row_slice(&z), &mut rng)?;
        let near = |m: &DMatrix<f64>| draws.iter().filter(|d| (*d - m).norm() < 0.5).count() as f64 / draws.len() as f64;
        println!("z = {z:?}: share of Phi draws near component 1 {:.2}, near component 2 {:.2}", near(&targets[0]), near(&targets[1]));
    }
    Ok(())
}
