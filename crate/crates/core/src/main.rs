use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use lsbvar::experiment::{
    self, predict_holdout, predict_test_set, purpose_rng, read_fit_config, read_holdout, read_truth,
    write_quantiles, FitDir, FitExtras, Purpose,
};
use lsbvar::gibbs::PriorKind;
use lsbvar::model::{read_long_csv, standardize_covariates, Dims, HyperConfig, LongitudinalDataset, ModelHyperparams};
use lsbvar::postprocess::{predictive_phi, summarize_mse};
use lsbvar::priors::{elicit_hyperparams, median_clusters, prior_check_grid, write_prior_check_csv, ElicitationTargets};
use lsbvar::simulation::{make_oos_split, write_truth_csv, Scenario, ScenarioSpec};
use lsbvar::{Error, Result};

#[derive(Parser)]
#[command(name = "lsbvar", version, about = "Clustering multivariate longitudinal trajectories with covariate-dependent mixtures of VAR(1) models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Lsb,
    Dp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Oos,
    Ins,
    Phi,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one of the three benchmark scenarios.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        scenario: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_subjects: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Also write an independent test set of this many subjects.
        #[arg(long, default_value_t = 0)]
        test_size: usize,
        #[arg(long)]
        zero_second_component: bool,
    },
    /// Run the Gibbs sampler and write a fit directory.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// TOML with optional [sampler] and [hyper] sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        prior: Option<PriorArg>,
        /// Concentration of the Dirichlet-process comparator.
        #[arg(long, default_value_t = 1.0)]
        dp_mass: f64,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_iter: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        /// Reference partition, `subject_id,component`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Subjects for whole-trajectory prediction.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Held-out later visits of fitted subjects.
        #[arg(long)]
        holdout: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue an interrupted fit directory from its checkpoints.
        #[arg(long)]
        resume: bool,
    },
    /// Predictive draws from a fit directory.
    Predict {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// oos: subjects to predict from their first visit (default: the run's test.csv).
        #[arg(long)]
        data: Option<PathBuf>,
        /// ins: held-out visits (default: the run's holdout.csv).
        #[arg(long)]
        holdout: Option<PathBuf>,
        /// phi: baseline covariates of the new subject, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        z: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition estimate, cluster counts, WAIC and prediction errors of a fit directory.
    Postprocess {
        #[arg(long)]
        run: PathBuf,
    },
    /// Prior distribution of the number of clusters over a grid of alpha variances.
    PriorCheck {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sigma_alpha_grid: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        h: usize,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Baseline columns (1-based) to standardise first.
        #[arg(long, value_delimiter = ',')]
        standardize: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Data-driven atom and error-covariance hyperparameters, printed as a [hyper] section.
    Elicit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 25)]
        h: usize,
        #[arg(long, default_value_t = 1.0)]
        v0_mean_scale: f64,
        #[arg(long, default_value_t = 1.5)]
        v0_diag_var: f64,
        #[arg(long, default_value_t = 10.0)]
        sigma_diag_var: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a whole experiment from one config file, optionally comparing priors.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_data(path: &Path) -> Result<LongitudinalDataset> {
    let v = read_long_csv(fs::File::open(path)?)?;
    for d in &v.dropped {
        eprintln!("dropped subject {}: {}", d.id, d.reason);
    }
    Ok(v.dataset)
}

fn dims(ds: &LongitudinalDataset) -> Dims {
    Dims { k: ds.resp_dim(), p: ds.tv_cov_dim(), q: ds.base_cov_dim() }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, seed, out, n_subjects, horizon, test_size, zero_second_component } => {
            let mut spec = ScenarioSpec::new(Scenario::from_number(scenario).expect("range-checked"));
            spec.n_subjects = n_subjects.unwrap_or(spec.n_subjects);
            spec.horizon = horizon.unwrap_or(spec.horizon);
            if zero_second_component {
                spec = spec.with_zero_second_component();
            }
            let mut rng = purpose_rng(seed, Purpose::Simulate, 0);
            let (train, test) = make_oos_split(&spec, test_size, &mut rng)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("data.csv"), train.dataset.to_csv_string())?;
            write_truth_csv(fs::File::create(out.join("truth.csv"))?, &train)?;
            if test_size > 0 {
                fs::write(out.join("test.csv"), test.dataset.to_csv_string())?;
                write_truth_csv(fs::File::create(out.join("test_truth.csv"))?, &test)?;
            }
            println!("wrote {} subjects to {}", train.dataset.n_subjects(), out.display());
        }
        Command::Fit {
            data, config, prior, dp_mass, chains, seed, n_iter, burn_in, thin, truth, test, holdout, out, resume,
        } => {
            if resume {
                let m = experiment::resume_dir(&out)?;
                println!("resumed {} ({:.1} s)", out.display(), m.elapsed_secs);
                return Ok(());
            }
            let (mut sampler, hyper_cfg) = match &config {
                Some(p) => read_fit_config(&fs::read_to_string(p)?)?,
                None => Default::default(),
            };
            if let Some(p) = prior {
                sampler.prior = match p {
                    PriorArg::Lsb => PriorKind::Lsb,
                    PriorArg::Dp => PriorKind::Dp { mass: dp_mass },
                };
            }
            sampler.n_chains = chains.unwrap_or(sampler.n_chains);
            sampler.seed = seed.unwrap_or(sampler.seed);
            sampler.n_iter = n_iter.unwrap_or(sampler.n_iter);
            sampler.burn_in = burn_in.unwrap_or(sampler.burn_in);
            sampler.thin = thin.unwrap_or(sampler.thin);
            sampler.validate()?;
            let ds = load_data(&data)?;
            let hyper = hyper_cfg.resolve(dims(&ds))?;
            let extras = FitExtras {
                truth: truth.map(|p| read_truth(&p, &ds)).transpose()?,
                test: test.map(|p| load_data(&p)).transpose()?,
                holdout: holdout.map(|p| read_holdout(&p, &ds)).transpose()?.unwrap_or_default(),
            };
            let m = experiment::fit_to_dir(&out, &ds, &hyper, &sampler, &extras)?;
            println!("fit written to {} ({:.1} s)", out.display(), m.elapsed_secs);
        }
        Command::Predict { run, mode, data, holdout, z, out } => {
            let fit = FitDir::open(&run)?;
            let seed = fit.sampler.seed;
            match mode {
                Mode::Oos => {
                    let test = match data {
                        Some(p) => load_data(&p)?,
                        None => fit.test.clone().ok_or_else(|| Error::Prediction("no --data and no test.csv in the run".into()))?,
                    };
                    let preds = predict_test_set(fit.samples(), &test, seed)?;
                    write_quantiles(&out, &preds)?;
                    let mse: Vec<f64> = preds.iter().filter_map(|p| p.mse).collect();
                    print_json(&summarize_mse(&mse))?;
                }
                Mode::Ins => {
                    let tails = match holdout {
                        Some(p) => read_holdout(&p, &fit.data)?,
                        None => fit.holdout.clone(),
                    };
                    let preds = predict_holdout(fit.samples(), &fit.data, &tails, seed)?;
                    write_quantiles(&out, &preds)?;
                    let mse: Vec<f64> = preds.iter().filter_map(|p| p.mse).collect();
                    print_json(&summarize_mse(&mse))?;
                }
                Mode::Phi => {
                    let mut rng = purpose_rng(seed, Purpose::PredictPhi, 0);
                    let draws = predictive_phi(fit.samples(), &DVector::from_vec(z), &mut rng)?;
                    let k = fit.data.resp_dim();
                    let mut w = csv::Writer::from_path(&out)?;
                    let mut head = vec!["draw".to_string()];
                    head.extend((0..k * k).map(|e| format!("phi_{}_{}", e / k + 1, e % k + 1)));
                    w.write_record(&head)?;
                    for (d, phi) in draws.iter().enumerate() {
                        let mut row = vec![d.to_string()];
                        row.extend((0..k * k).map(|e| phi[(e / k, e % k)].to_string()));
                        w.write_record(&row)?;
                    }
                    w.flush()?;
                }
            }
        }
        Command::Postprocess { run } => print_json(&experiment::postprocess_dir(&run)?)?,
        Command::PriorCheck { data, sigma_alpha_grid, h, draws, seed, standardize, out } => {
            let mut ds = load_data(&data)?;
            if !standardize.is_empty() {
                let cols: Vec<usize> = standardize.iter().map(|c| c.saturating_sub(1)).collect();
                ds = standardize_covariates(&ds, &cols)?.0;
            }
            let results = prior_check_grid(&ds.baseline_matrix(), h, &sigma_alpha_grid, draws, seed)?;
            write_prior_check_csv(fs::File::create(&out)?, &results)?;
            for (s, d) in &results {
                println!("sigma_alpha_sq = {s}: median clusters {}", median_clusters(d));
            }
        }
        Command::Elicit { data, h, v0_mean_scale, v0_diag_var, sigma_diag_var, lambda, out } => {
            let ds = load_data(&data)?;
            let targets = ElicitationTargets { v0_mean_scale, v0_diag_var, sigma_diag_var, lambda };
            let e = elicit_hyperparams(&ds, &targets)?;
            let mut hyper = ModelHyperparams::simulation_defaults(dims(&ds), h);
            e.apply(&mut hyper);
            #[derive(Serialize)]
            struct Section {
                hyper: HyperConfig,
            }
            let text = toml::to_string(&Section { hyper: hyper.to_config() }).map_err(|e| Error::Config(e.to_string()))?;
            match out {
                Some(p) => fs::write(p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Run { config, out } => {
            let outcome = experiment::run_experiment(&config, &out)?;
            if outcome.reports.reports.len() > 1 {
                for row in outcome.reports.table() {
                    println!("{}", row.join("\t"));
                }
            } else {
                print_json(&outcome.reports)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Sampler { dump: Some(p), .. } = &e {
                eprintln!("state dump: {}", p.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
