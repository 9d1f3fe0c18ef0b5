//! Data-driven centring of the atom prior and the error-covariance prior
//! from a least-squares VAR(1) fit.
//!
//! `cargo run --example elicit_hyperparameters`

use lsbvar::model::{Dims, ModelHyperparams};
use lsbvar::priors::{elicit_hyperparams, ElicitationTargets};
use lsbvar::simulation::{generate_scenario, Scenario, ScenarioSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lsbvar::Result<()> {
    let sim = generate_scenario(&ScenarioSpec::new(Scenario::I), &mut ChaCha8Rng::seed_from_u64(3))?;
    let targets = ElicitationTargets::default();
    let e = elicit_hyperparams(&sim.dataset, &targets)?;
    println!("pooled least-squares autoregression{:.3}", e.phi_hat);
    println!("residual covariance{:.3}", e.sigma_hat);
    println!("V_0 prior: tau_0 = {:.3}, scale diagonal {:.3}", e.tau_0, e.v_00.diagonal().transpose());
    println!("Sigma^-1 prior: nu = {:.3}", e.nu);

    let mut hyper = ModelHyperparams::simulation_defaults(Dims { k: 3, p: 1, q: 2 }, 25);
    e.apply(&mut hyper);
    let sigma_mean = hyper.sigma_iw_scale()? / (hyper.nu - 4.0);
    println!("implied prior mean of Sigma{:.3}", sigma_mean);
    Ok(())
}
