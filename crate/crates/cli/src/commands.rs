use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cfsearch_core::bundle::{train_bundle, ModelBundle, TrainConfig};
use cfsearch_core::causality::{causality_matrix, export_heatmap, mask_path};
use cfsearch_core::evaluate::{evaluate_learners, Learner};
use cfsearch_core::ga::{run_search, GaConfig};
use cfsearch_core::learners::{validate_levels, QuantileOptions, DEFAULT_LEVELS};
use cfsearch_core::scenario::{planted_goal, FitnessWeights, GoalSpec};
use cfsearch_core::series::MultivariateSeries;
use cfsearch_core::split::walk_forward_splits;
use cfsearch_core::synth::{benchmark, generate_var, VarSystemSpec};
use cfsearch_server::{AppState, Loaded};

use crate::cli::{CausalityArgs, EvaluateArgs, LagArgs, SearchArgs, ServeArgs, SynthArgs, TrainArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid flags or configuration values.
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] cfsearch_core::Error),
    #[error("{0}")]
    Io(String),
}

pub enum Outcome {
    Done,
    NotConverged,
}

type CmdResult = Result<Outcome, CliError>;

fn config_err(e: cfsearch_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn synth(a: SynthArgs) -> CmdResult {
    let spec: VarSystemSpec = match (&a.bench, &a.spec) {
        (Some(name), _) => benchmark(name).map_err(config_err)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(CliError::Config("one of --bench or --spec is required".into())),
    };
    spec.validate().map_err(config_err)?;
    let series = generate_var(&spec, a.length, a.seed).map_err(config_err)?;
    series.save_bundle(&a.out)?;
    let spec_json = serde_json::to_string_pretty(&spec).map_err(|e| CliError::Io(e.to_string()))?;
    write(&a.out.join("spec.json"), &spec_json)?;
    let edges: Vec<String> = spec
        .planted_edges()
        .into_iter()
        .map(|(c, e)| format!("{}->{}", spec.names[c], spec.names[e]))
        .collect();
    println!(
        "{}: V={} T={} delta={}s seed={}",
        spec.name,
        series.n_vars(),
        series.len(),
        series.delta_seconds(),
        a.seed
    );
    println!("planted edges: {}", if edges.is_empty() { "none".into() } else { edges.join(", ") });
    Ok(Outcome::Done)
}

fn train_config(lag: &LagArgs, levels: Option<Vec<f64>>, quantile: QuantileOptions, direct: Option<usize>) -> Result<TrainConfig, CliError> {
    let levels = levels.unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    validate_levels(&levels).map_err(config_err)?;
    if lag.lag_order == 0 {
        return Err(CliError::Config("lag order must be at least 1".into()));
    }
    if lag.folds < 2 {
        return Err(CliError::Config("at least 2 folds are required".into()));
    }
    if !(lag.ridge_lambda >= 0.0) {
        return Err(CliError::Config("ridge lambda must be nonnegative".into()));
    }
    if quantile.epochs == 0 || !(quantile.learning_rate > 0.0) {
        return Err(CliError::Config("epochs and learning rate must be positive".into()));
    }
    if direct == Some(0) {
        return Err(CliError::Config("direct horizon must be at least 1".into()));
    }
    Ok(TrainConfig {
        lag_order: lag.lag_order,
        levels,
        ridge_lambda: lag.ridge_lambda,
        quantile,
        n_folds: lag.folds,
        direct_horizon: direct,
        ..TrainConfig::default()
    })
}

pub fn train(a: TrainArgs) -> CmdResult {
    let config = train_config(
        &a.lag,
        a.levels,
        QuantileOptions {
            epochs: a.epochs,
            learning_rate: a.learning_rate,
        },
        a.direct_horizon,
    )?;
    let series = MultivariateSeries::load_bundle(&a.series)?;
    let bundle = train_bundle(&series, &config)?;
    bundle.save(&a.out)?;
    let heatmap = a
        .heatmap
        .unwrap_or_else(|| a.out.parent().unwrap_or(Path::new(".")).join("heatmap.csv"));
    export_heatmap(&bundle.causality, &heatmap)?;

    let mut table = format!("{:<12} {:<24} {:>14} {:>14}\n", "variable", "features", "initial_loss", "final_loss");
    for bank in &bundle.banks {
        let k = bank.models.len() as f64;
        let initial = bank.models.iter().map(|m| m.initial_loss).sum::<f64>() / k;
        let last = bank.models.iter().map(|m| m.final_loss).sum::<f64>() / k;
        let features: Vec<&str> = bank.features.iter().map(|&f| bundle.names[f].as_str()).collect();
        let _ = writeln!(
            table,
            "{:<12} {:<24} {:>14.6} {:>14.6}",
            bundle.names[bank.variable],
            features.join(","),
            initial,
            last
        );
    }
    print!("{table}");
    println!("causal edges: {}", edge_list(&bundle));
    Ok(Outcome::Done)
}

fn edge_list(bundle: &ModelBundle) -> String {
    let edges: Vec<String> = bundle
        .causality
        .edges()
        .into_iter()
        .map(|(c, e)| format!("{}->{}", bundle.names[c], bundle.names[e]))
        .collect();
    if edges.is_empty() {
        "none".into()
    } else {
        edges.join(", ")
    }
}

pub fn causality(a: CausalityArgs) -> CmdResult {
    let config = train_config(&a.lag, None, QuantileOptions::default(), None)?;
    let series = MultivariateSeries::load_bundle(&a.series)?;
    let t = series.len();
    let min_train = ((t as f64) * config.min_train_frac).floor() as usize;
    let plan = walk_forward_splits(t, config.n_folds, min_train)?;
    let matrix = causality_matrix(&series, config.lag_order, &plan, config.ridge_lambda)?;
    export_heatmap(&matrix, &a.out)?;
    println!("{}", matrix.p_value_csv().trim_end());
    println!("heatmap: {} mask: {}", a.out.display(), mask_path(&a.out).display());
    Ok(Outcome::Done)
}

pub fn evaluate(a: EvaluateArgs) -> CmdResult {
    let learners = a
        .learners
        .iter()
        .map(|s| s.parse::<Learner>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(config_err)?;
    let series = MultivariateSeries::load_bundle(&a.series)?;
    let bundle = ModelBundle::load(&a.bundle)?;
    let table = evaluate_learners(&series, &bundle, &learners)?;
    write(&a.out, &table.to_csv())?;
    print!("{}", table.to_text());
    Ok(Outcome::Done)
}

fn ga_config(a: &SearchArgs) -> Result<GaConfig, CliError> {
    let config = GaConfig {
        population_size: a.population,
        mutation_prob: a.mutation_prob,
        crossover_prob: a.crossover_prob,
        tournament_size: a.tournament,
        immigrant_rate: a.immigrant_rate,
        max_generations: a.generations,
        tolerance_rel: a.tolerance,
        weights: FitnessWeights {
            w1: a.w1,
            w2: a.w2,
            w3: a.w3,
        },
        seed: a.seed,
        elitism_count: a.elitism,
    };
    config.validate().map_err(config_err)?;
    Ok(config)
}

pub fn search(a: SearchArgs) -> CmdResult {
    let config = ga_config(&a)?;
    if a.horizon == 0 {
        return Err(CliError::Config("horizon must be at least 1".into()));
    }
    let series = MultivariateSeries::load_bundle(&a.series)?;
    let bundle = ModelBundle::load(&a.bundle)?;
    let goal = match (a.goal, a.planted_tau) {
        (Some(g), _) => GoalSpec::new(g, a.tolerance, a.horizon).map_err(config_err)?,
        (None, Some(tau)) => {
            let level = bundle
                .levels
                .iter()
                .position(|&l| (l - tau).abs() < 1e-9)
                .ok_or_else(|| CliError::Config(format!("level {tau} is not in the bundle alphabet")))?;
            let (_, goal) = planted_goal(&bundle, &series, a.horizon, level, a.tolerance)?;
            goal
        }
        (None, None) => return Err(CliError::Config("one of --goal or --planted-tau is required".into())),
    };
    let result = run_search(&bundle, &series, &goal, &config)?;
    write(&a.out, &result.to_json()?)?;
    let trace = a.trace.clone().unwrap_or_else(|| default_trace_path(&a.out));
    write(&trace, &result.trace.to_csv())?;

    let report = &result.best_report;
    println!(
        "goal {} +/- {}%  terminal {:.6}  converged {}  generations {}",
        result.goal.goal_value,
        result.goal.epsilon_rel * 100.0,
        report.terminal,
        result.converged,
        result.generations_run
    );
    println!(
        "objectives o1 {:.6}  o2 {:.6}  o3 {:.6}  fitness {:.6}  likelihood {:.1}%",
        report.objectives.o1,
        report.objectives.o2,
        report.objectives.o3,
        report.objectives.fitness,
        report.likelihood_percent
    );
    for (v, levels) in report.policy_levels.iter().enumerate() {
        if report.actionable[v] {
            let cells: Vec<String> = levels.iter().map(|l| format!("{l:.2}")).collect();
            println!("{:<12} {}", report.names[v], cells.join(" "));
        }
    }
    Ok(if result.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

fn default_trace_path(path: &Path) -> PathBuf {
    let mut p = path.to_path_buf();
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.set_file_name(format!("{stem}_trace.csv"));
    p
}

pub fn serve(a: ServeArgs) -> CmdResult {
    let data = Loaded::open(&a.bundle, &a.series)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Io(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
        println!("listening on http://{local}/api/v1");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        cfsearch_server::serve(listener, AppState::new(data), shutdown)
            .await
            .map_err(|e| CliError::Io(e.to_string()))
    })?;
    Ok(Outcome::Done)
}
