//! Genetic search over intervention policies.
//!
//! Generational loop with tournament selection, uniform crossover, sparse
//! resampling mutation, elitism and random immigrants. Fitness is minimized;
//! the run stops early once some individual's goal-relative error is within
//! the tolerance.
//!
//! Randomness is fully determined by `GaConfig::seed`. Every (generation,
//! operator) pair draws from its own ChaCha8 stream: the generator is seeded
//! with `seed` and switched to stream `(generation << 8) | operator`, where the
//! operator ids are [`STREAM_INIT`], [`STREAM_SELECT`], [`STREAM_CROSSOVER`],
//! [`STREAM_MUTATE`] and [`STREAM_IMMIGRANTS`]. Fitness evaluation consumes no
//! randomness, so parallel scheduling cannot change a result.

use crate::clock::Stopwatch;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::error::{Error, Result};
use crate::scenario::{
    satisfies_constraint, Evaluator, FitnessWeights, GoalSpec, InterventionPolicy,
    ObjectiveValues, PolicySpace, ScenarioProjection, ScenarioReport,
};
use crate::series::MultivariateSeries;

pub const STREAM_INIT: u64 = 0;
pub const STREAM_SELECT: u64 = 1;
pub const STREAM_CROSSOVER: u64 = 2;
pub const STREAM_MUTATE: u64 = 3;
pub const STREAM_IMMIGRANTS: u64 = 4;

/// Generator for one operator within one generation.
pub fn stream_rng(seed: u64, generation: usize, operator: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 8) | operator);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub mutation_prob: f64,
    pub crossover_prob: f64,
    pub tournament_size: usize,
    pub immigrant_rate: f64,
    pub max_generations: usize,
    pub tolerance_rel: f64,
    pub weights: FitnessWeights,
    pub seed: u64,
    pub elitism_count: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 200,
            mutation_prob: 0.25,
            crossover_prob: 0.75,
            tournament_size: 3,
            immigrant_rate: 0.10,
            max_generations: 100,
            tolerance_rel: 0.05,
            weights: FitnessWeights::default(),
            seed: 0,
            elitism_count: 1,
        }
    }
}

impl GaConfig {
    pub fn immigrant_count(&self) -> usize {
        ((self.immigrant_rate * self.population_size as f64).round() as usize)
            .min(self.population_size.saturating_sub(self.elitism_count))
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("mutation_prob", self.mutation_prob)?;
        prob("crossover_prob", self.crossover_prob)?;
        prob("immigrant_rate", self.immigrant_rate)?;
        if self.tournament_size == 0 || self.population_size < self.tournament_size {
            return Err(Error::InvalidArgument(format!(
                "population_size ({}) must be at least tournament_size ({}) >= 1",
                self.population_size, self.tournament_size
            )));
        }
        if self.elitism_count >= self.population_size {
            return Err(Error::InvalidArgument(
                "elitism_count must be smaller than population_size".into(),
            ));
        }
        if !(self.tolerance_rel > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance_rel
            )));
        }
        self.weights.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub policy: InterventionPolicy,
    pub objectives: ObjectiveValues,
    pub projection: ScenarioProjection,
}

impl Individual {
    pub fn fitness(&self) -> f64 {
        self.objectives.fitness
    }
}

fn random_gene(space: &PolicySpace, v: usize, rng: &mut impl Rng) -> u8 {
    if space.actionable[v] {
        rng.random_range(0..space.levels.len()) as u8
    } else {
        space.median_index as u8
    }
}

pub fn random_policy(space: &PolicySpace, rng: &mut impl Rng) -> InterventionPolicy {
    let mut p = space.all_median();
    for v in 0..space.n_vars() {
        for n in 0..space.horizon {
            p.genes[v * space.horizon + n] = random_gene(space, v, rng);
        }
    }
    p
}

/// `population_size` policies: the all-median anchor first, then uniform
/// random genomes (pinned variables stay at the median).
pub fn init_population(
    space: &PolicySpace,
    config: &GaConfig,
    rng: &mut impl Rng,
) -> Vec<InterventionPolicy> {
    let mut pop = Vec::with_capacity(config.population_size);
    pop.push(space.all_median());
    while pop.len() < config.population_size {
        pop.push(random_policy(space, rng));
    }
    pop
}

/// Best of `k` distinct individuals drawn uniformly (lower fitness wins,
/// earlier position breaks ties).
pub fn tournament_select<'p>(
    population: &'p [Individual],
    k: usize,
    rng: &mut impl Rng,
) -> Result<&'p Individual> {
    if population.is_empty() {
        return Err(Error::InvalidArgument("empty population".into()));
    }
    if k == 0 || k > population.len() {
        return Err(Error::InvalidArgument(format!(
            "tournament size {k} for population of {}",
            population.len()
        )));
    }
    let winner = sample(rng, population.len(), k)
        .into_iter()
        .min_by(|&a, &b| {
            population[a]
                .fitness()
                .total_cmp(&population[b].fitness())
                .then(a.cmp(&b))
        })
        .expect("k >= 1");
    Ok(&population[winner])
}

/// Uniform crossover with probability `crossover_prob`, otherwise a copy of `a`.
pub fn crossover(
    a: &InterventionPolicy,
    b: &InterventionPolicy,
    config: &GaConfig,
    rng: &mut impl Rng,
) -> Result<InterventionPolicy> {
    if a.n_vars != b.n_vars || a.horizon != b.horizon || a.genes.len() != b.genes.len() {
        return Err(Error::InvalidArgument("crossover parents differ in shape".into()));
    }
    let mut child = a.clone();
    if rng.random::<f64>() < config.crossover_prob {
        for (c, &g) in child.genes.iter_mut().zip(&b.genes) {
            if rng.random::<bool>() {
                *c = g;
            }
        }
    }
    Ok(child)
}

/// With probability `mutation_prob`, resamples each actionable gene with
/// rate `2 / t` (`t` = number of actionable genes) to a different level, so
/// a mutation event changes two genes on average.
pub fn mutate(
    mut policy: InterventionPolicy,
    space: &PolicySpace,
    config: &GaConfig,
    rng: &mut impl Rng,
) -> InterventionPolicy {
    let t = space.n_actionable_genes();
    let n_levels = space.levels.len();
    if t == 0 || n_levels < 2 || !(rng.random::<f64>() < config.mutation_prob) {
        return policy;
    }
    let rate = (2.0 / t as f64).min(1.0);
    for v in (0..space.n_vars()).filter(|&v| space.actionable[v]) {
        for n in 0..space.horizon {
            if rng.random::<f64>() < rate {
                let old = policy.gene(v, n);
                let mut new = rng.random_range(0..n_levels - 1);
                if new >= old {
                    new += 1;
                }
                policy.set_gene(v, n, new);
            }
        }
    }
    policy
}

fn sort_population(pop: &mut [Individual]) {
    pop.sort_by(|a, b| a.fitness().total_cmp(&b.fitness()));
}

/// Replaces the worst `immigrant_count()` individuals of a fitness-sorted
/// population (never the first `elitism_count`) with fresh random ones and
/// re-sorts. Returns how many were replaced.
pub fn inject_immigrants<F>(
    population: &mut Vec<Individual>,
    space: &PolicySpace,
    config: &GaConfig,
    rng: &mut impl Rng,
    evaluate: F,
) -> Result<usize>
where
    F: Fn(&[InterventionPolicy]) -> Result<Vec<Individual>>,
{
    let count = config
        .immigrant_count()
        .min(population.len().saturating_sub(config.elitism_count));
    if count == 0 {
        return Ok(0);
    }
    let fresh: Vec<InterventionPolicy> = (0..count).map(|_| random_policy(space, rng)).collect();
    let fresh = evaluate(&fresh)?;
    let keep = population.len() - count;
    population.truncate(keep);
    population.extend(fresh);
    sort_population(population);
    Ok(count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_o1_rel: f64,
    /// Cumulative fitness evaluations.
    pub evaluations: usize,
    /// Wall-clock milliseconds since the search started. Not serialized, so
    /// result documents stay reproducible.
    #[serde(skip)]
    pub millis: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub rows: Vec<TraceRow>,
}

impl SearchTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("generation,best,mean,best_o1_rel,millis\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.3}\n",
                r.generation, r.best_fitness, r.mean_fitness, r.best_o1_rel, r.millis
            ));
        }
        out
    }

    pub fn is_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].best_fitness <= w[0].best_fitness)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub config: GaConfig,
    pub seed: u64,
    /// Goal with `epsilon_rel` set to the search tolerance.
    pub goal: GoalSpec,
    pub converged: bool,
    pub generations_run: usize,
    pub best: Individual,
    pub best_report: ScenarioReport,
    pub final_population: Vec<Individual>,
    pub trace: SearchTrace,
}

impl SearchResult {
    /// Generation index at which the goal was first met.
    pub fn convergence_generation(&self) -> Option<usize> {
        self.converged.then(|| self.generations_run - 1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn evaluate_policies(
    evaluator: &Evaluator<'_>,
    generation: usize,
    policies: &[InterventionPolicy],
) -> Result<Vec<Individual>> {
    let eval = |policy: &InterventionPolicy| {
        evaluator
            .evaluate(policy)
            .map(|(objectives, projection)| Individual {
                policy: policy.clone(),
                objectives,
                projection,
            })
            .map_err(|e| Error::Search {
                generation,
                genome: policy.genes.clone(),
                source: Box::new(e),
            })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        policies.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        policies.iter().map(eval).collect()
    }
}

pub fn run_search(
    bundle: &ModelBundle,
    history: &MultivariateSeries,
    goal: &GoalSpec,
    config: &GaConfig,
) -> Result<SearchResult> {
    run_search_with(bundle, history, goal, config, |_| true)
}

/// Like [`run_search`], calling `on_generation` after each generation is
/// scored. Returning `false` stops the search after that generation.
pub fn run_search_with<F>(
    bundle: &ModelBundle,
    history: &MultivariateSeries,
    goal: &GoalSpec,
    config: &GaConfig,
    mut on_generation: F,
) -> Result<SearchResult>
where
    F: FnMut(&TraceRow) -> bool,
{
    config.validate()?;
    let goal = GoalSpec {
        epsilon_rel: config.tolerance_rel,
        ..*goal
    };
    let evaluator = Evaluator::new(bundle, history, goal, config.weights)?;
    let space = evaluator.space().clone();
    let started = Stopwatch::start();
    let seed = config.seed;

    let initial = init_population(&space, config, &mut stream_rng(seed, 0, STREAM_INIT));
    let mut population = evaluate_policies(&evaluator, 0, &initial)?;
    sort_population(&mut population);
    let mut evaluations = population.len();
    let mut trace = SearchTrace::default();
    let mut generation = 0;
    let converged = loop {
        let n = population.len() as f64;
        let row = TraceRow {
            generation,
            best_fitness: population[0].fitness(),
            mean_fitness: population.iter().map(Individual::fitness).sum::<f64>() / n,
            best_o1_rel: population
                .iter()
                .map(|i| i.objectives.o1_rel)
                .fold(f64::INFINITY, f64::min),
            evaluations,
            millis: started.seconds() * 1e3,
        };
        let keep_going = on_generation(&row);
        let hit = population
            .iter()
            .any(|i| satisfies_constraint(i.projection.terminal, &goal));
        trace.rows.push(row);
        if hit {
            break true;
        }
        if generation >= config.max_generations || !keep_going {
            break false;
        }
        generation += 1;

        let mut select_rng = stream_rng(seed, generation, STREAM_SELECT);
        let mut cross_rng = stream_rng(seed, generation, STREAM_CROSSOVER);
        let mut mutate_rng = stream_rng(seed, generation, STREAM_MUTATE);
        let n_children = config.population_size - config.elitism_count;
        let mut children = Vec::with_capacity(n_children);
        for _ in 0..n_children {
            let a = tournament_select(&population, config.tournament_size, &mut select_rng)?;
            let b = tournament_select(&population, config.tournament_size, &mut select_rng)?;
            let child = crossover(&a.policy, &b.policy, config, &mut cross_rng)?;
            children.push(mutate(child, &space, config, &mut mutate_rng));
        }
        let mut next: Vec<Individual> = population[..config.elitism_count].to_vec();
        next.extend(evaluate_policies(&evaluator, generation, &children)?);
        evaluations += children.len();
        sort_population(&mut next);
        let mut imm_rng = stream_rng(seed, generation, STREAM_IMMIGRANTS);
        evaluations += inject_immigrants(&mut next, &space, config, &mut imm_rng, |p| {
            evaluate_policies(&evaluator, generation, p)
        })?;
        population = next;
    };

    let best = if converged {
        population
            .iter()
            .find(|i| satisfies_constraint(i.projection.terminal, &goal))
            .unwrap_or(&population[0])
            .clone()
    } else {
        population[0].clone()
    };
    let best_report = evaluator.report(&best.policy).map_err(|e| Error::Search {
        generation,
        genome: best.policy.genes.clone(),
        source: Box::new(e),
    })?;
    Ok(SearchResult {
        config: *config,
        seed,
        goal,
        converged,
        generations_run: trace.rows.len(),
        best,
        best_report,
        final_population: population,
        trace,
    })
}
