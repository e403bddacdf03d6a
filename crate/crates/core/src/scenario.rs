//! Recursive projection under an intervention policy, plus the objectives
//! that score a projected scenario.
//!
//! A policy assigns one quantile level (by index into the bundle's alphabet)
//! to every `(variable, future step)` cell. At step `n` each variable's bank is
//! evaluated on the rolling lag window, its sorted quantile predictions are
//! indexed by the gene, and the resulting values extend the window. The main
//! forecaster, evaluated on the same window, yields the target path.

use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::error::{Error, Result};
use crate::lag::{fill_window, FeatureColumn};
use crate::series::MultivariateSeries;

/// Plausibility floor for the most extreme quantile genes.
pub const MIN_PLAUSIBILITY: f64 = 1e-3;
const GOAL_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub goal_value: f64,
    pub epsilon_rel: f64,
    pub horizon_steps: usize,
}

impl GoalSpec {
    pub fn new(goal_value: f64, epsilon_rel: f64, horizon_steps: usize) -> Result<Self> {
        let g = Self {
            goal_value,
            epsilon_rel,
            horizon_steps,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.goal_value.is_finite() {
            return Err(Error::InvalidArgument("goal must be finite".into()));
        }
        if !(self.epsilon_rel > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.epsilon_rel
            )));
        }
        if self.horizon_steps == 0 {
            return Err(Error::InvalidArgument("horizon must be at least one step".into()));
        }
        Ok(())
    }

    pub fn horizon_seconds(&self, delta_seconds: f64) -> f64 {
        self.horizon_steps as f64 * delta_seconds
    }
}

/// Genome: a `V × N` grid of indices into the quantile alphabet, stored
/// variable-major (`genes[v * horizon + n]`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InterventionPolicy {
    pub n_vars: usize,
    pub horizon: usize,
    pub genes: Vec<u8>,
}

impl InterventionPolicy {
    pub fn filled(n_vars: usize, horizon: usize, index: u8) -> Self {
        Self {
            n_vars,
            horizon,
            genes: vec![index; n_vars * horizon],
        }
    }

    #[inline]
    pub fn gene(&self, v: usize, n: usize) -> usize {
        self.genes[v * self.horizon + n] as usize
    }

    pub fn set_gene(&mut self, v: usize, n: usize, index: usize) {
        self.genes[v * self.horizon + n] = index as u8;
    }

    /// Genes of one variable across the horizon.
    pub fn row(&self, v: usize) -> &[u8] {
        &self.genes[v * self.horizon..(v + 1) * self.horizon]
    }
}

/// What a valid policy may contain: the alphabet and which variables can move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpace {
    pub levels: Vec<f64>,
    pub actionable: Vec<bool>,
    pub median_index: usize,
    pub horizon: usize,
}

impl PolicySpace {
    pub fn new(levels: Vec<f64>, actionable: Vec<bool>, horizon: usize) -> Result<Self> {
        crate::learners::validate_levels(&levels)?;
        if levels.len() > u8::MAX as usize {
            return Err(Error::InvalidArgument("quantile alphabet too large".into()));
        }
        let median_index = levels.iter().position(|&l| l == 0.5).unwrap_or_default();
        Ok(Self {
            levels,
            actionable,
            median_index,
            horizon,
        })
    }

    pub fn for_bundle(bundle: &ModelBundle, horizon: usize) -> Result<Self> {
        Self::new(bundle.levels.clone(), bundle.actionable.clone(), horizon)
    }

    pub fn n_vars(&self) -> usize {
        self.actionable.len()
    }

    pub fn n_genes(&self) -> usize {
        self.n_vars() * self.horizon
    }

    pub fn n_actionable_genes(&self) -> usize {
        self.actionable.iter().filter(|a| **a).count() * self.horizon
    }

    pub fn all_median(&self) -> InterventionPolicy {
        InterventionPolicy::filled(self.n_vars(), self.horizon, self.median_index as u8)
    }

    pub fn validate(&self, policy: &InterventionPolicy) -> Result<()> {
        if policy.n_vars != self.n_vars()
            || policy.horizon != self.horizon
            || policy.genes.len() != self.n_genes()
        {
            return Err(Error::InvalidArgument(format!(
                "policy is {}x{} with {} genes, expected {}x{}",
                policy.n_vars,
                policy.horizon,
                policy.genes.len(),
                self.n_vars(),
                self.horizon
            )));
        }
        for v in 0..self.n_vars() {
            for (n, &g) in policy.row(v).iter().enumerate() {
                if g as usize >= self.levels.len() {
                    return Err(Error::InvalidArgument(format!(
                        "gene ({v}, {n}) = {g} outside alphabet of {}",
                        self.levels.len()
                    )));
                }
                if !self.actionable[v] && g as usize != self.median_index {
                    return Err(Error::InvalidArgument(format!(
                        "gene ({v}, {n}) of a non-actionable variable must be the median"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Builds a policy from explicit quantile levels, one row per variable.
    pub fn policy_from_levels(&self, grid: &[Vec<f64>]) -> Result<InterventionPolicy> {
        if grid.len() != self.n_vars() || grid.iter().any(|r| r.len() != self.horizon) {
            return Err(Error::InvalidArgument(format!(
                "policy grid must be {}x{}",
                self.n_vars(),
                self.horizon
            )));
        }
        let mut policy = self.all_median();
        for (v, row) in grid.iter().enumerate() {
            for (n, &tau) in row.iter().enumerate() {
                let idx = self
                    .levels
                    .iter()
                    .position(|&l| (l - tau).abs() < 1e-9)
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!("level {tau} at ({v}, {n}) not in alphabet"))
                    })?;
                policy.set_gene(v, n, idx);
            }
        }
        self.validate(&policy)?;
        Ok(policy)
    }

    pub fn levels_grid(&self, policy: &InterventionPolicy) -> Vec<Vec<f64>> {
        (0..policy.n_vars)
            .map(|v| policy.row(v).iter().map(|&g| self.levels[g as usize]).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProjection {
    /// `paths[v][n]`: projected value of variable `v` at future step `n + 1`.
    pub paths: Vec<Vec<f64>>,
    /// Recursive one-step target forecasts.
    pub target_path: Vec<f64>,
    /// Last entry of `target_path`, or the direct forecaster's output when
    /// the bundle has one.
    pub terminal: f64,
    pub likelihood: f64,
}

/// Trailing `p` observations of every variable, the seed of every projection.
fn seed_window(bundle: &ModelBundle, history: &MultivariateSeries) -> Result<Vec<Vec<f64>>> {
    bundle.check_history(history)?;
    let p = bundle.lag_order;
    let start = history.len() - p;
    Ok((0..bundle.n_vars())
        .map(|v| history.column(v)[start..].to_vec())
        .collect())
}

struct Scratch {
    buf: Vec<Vec<f64>>,
    window: Vec<f64>,
    quantiles: Vec<f64>,
    step: Vec<f64>,
}

fn project_from_seed(
    bundle: &ModelBundle,
    space: &PolicySpace,
    seed: &[Vec<f64>],
    policy: &InterventionPolicy,
    mut bands: Option<&mut Vec<Vec<Vec<f64>>>>,
) -> Result<ScenarioProjection> {
    space.validate(policy)?;
    let v_count = bundle.n_vars();
    let p = bundle.lag_order;
    let horizon = policy.horizon;
    let mut s = Scratch {
        buf: seed
            .iter()
            .map(|col| {
                let mut b = Vec::with_capacity(p + horizon);
                b.extend_from_slice(col);
                b
            })
            .collect(),
        window: Vec::new(),
        quantiles: Vec::with_capacity(bundle.levels.len()),
        step: vec![0.0; v_count],
    };
    let bank_columns: Vec<&[FeatureColumn]> = bundle
        .banks
        .iter()
        .map(|b| b.models[0].base.feature_columns.as_slice())
        .collect();
    let mut target_path = Vec::with_capacity(horizon);
    for n in 0..horizon {
        let t = p + n;
        for v in 0..v_count {
            fill_window(&s.buf, bank_columns[v], t, &mut s.window);
            bundle.banks[v].predict_into(&s.window, &mut s.quantiles)?;
            if let Some(b) = bands.as_deref_mut() {
                b[v].push(s.quantiles.clone());
            }
            let x = s.quantiles[policy.gene(v, n)];
            if !x.is_finite() {
                return Err(Error::NonFiniteProjection {
                    variable: bundle.names[v].clone(),
                    step: n + 1,
                });
            }
            s.step[v] = x;
        }
        fill_window(&s.buf, &bundle.forecaster.feature_columns, t, &mut s.window);
        let y = bundle.forecaster.predict(&s.window);
        if !y.is_finite() {
            return Err(Error::NonFiniteProjection {
                variable: bundle.names[bundle.target].clone(),
                step: n + 1,
            });
        }
        target_path.push(y);
        for (col, &x) in s.buf.iter_mut().zip(&s.step) {
            col.push(x);
        }
    }
    let mut terminal = *target_path.last().expect("horizon >= 1");
    if let Some(direct) = &bundle.direct {
        if direct.horizon > horizon {
            return Err(Error::InvalidArgument(format!(
                "direct horizon {} exceeds projection horizon {horizon}",
                direct.horizon
            )));
        }
        fill_window(&s.buf, &direct.model.feature_columns, p + horizon - direct.horizon, &mut s.window);
        terminal = direct.model.predict(&s.window);
        if !terminal.is_finite() {
            return Err(Error::NonFiniteProjection {
                variable: bundle.names[bundle.target].clone(),
                step: horizon,
            });
        }
    }
    let paths = s.buf.into_iter().map(|col| col[p..].to_vec()).collect();
    Ok(ScenarioProjection {
        paths,
        terminal,
        target_path,
        likelihood: scenario_likelihood(policy, space),
    })
}

pub fn project_scenario(
    bundle: &ModelBundle,
    history: &MultivariateSeries,
    policy: &InterventionPolicy,
) -> Result<ScenarioProjection> {
    if policy.horizon == 0 {
        return Err(Error::InvalidArgument("policy horizon is zero".into()));
    }
    let space = PolicySpace::for_bundle(bundle, policy.horizon)?;
    let seed = seed_window(bundle, history)?;
    project_from_seed(bundle, &space, &seed, policy, None)
}

/// Returns `(o1, o1_rel)`: absolute and goal-relative distance to the goal.
pub fn objective_o1(terminal: f64, goal: &GoalSpec) -> (f64, f64) {
    let o1 = (terminal - goal.goal_value).abs();
    (o1, o1 / goal.goal_value.abs().max(GOAL_FLOOR))
}

/// Cosine distance `1 - cos(reference, projection)`, in `[0, 2]`.
pub fn objective_o2(reference: &[f64], projection: &[f64]) -> Result<f64> {
    if reference.len() != projection.len() {
        return Err(Error::LengthMismatch {
            left: reference.len(),
            right: projection.len(),
        });
    }
    let dot: f64 = reference.iter().zip(projection).map(|(a, b)| a * b).sum();
    let na = reference.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = projection.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

/// Triangular plausibility of following quantile `tau`, 1 at the median.
pub fn gene_plausibility(tau: f64) -> f64 {
    (1.0 - 2.0 * (tau - 0.5).abs()).max(MIN_PLAUSIBILITY)
}

/// Mean negative log plausibility over actionable genes.
pub fn objective_o3(policy: &InterventionPolicy, space: &PolicySpace) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in (0..policy.n_vars).filter(|&v| space.actionable[v]) {
        for &g in policy.row(v) {
            sum -= gene_plausibility(space.levels[g as usize]).ln();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Geometric mean of actionable gene plausibilities, in `(0, 1]`.
pub fn scenario_likelihood(policy: &InterventionPolicy, space: &PolicySpace) -> f64 {
    (-objective_o3(policy, space)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 0.1,
            w3: 0.1,
        }
    }
}

impl FitnessWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w1, self.w2, self.w3];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || !(self.w1 > 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be finite and nonnegative with w1 > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValues {
    pub o1: f64,
    pub o1_rel: f64,
    pub o2: f64,
    pub o3: f64,
    pub fitness: f64,
}

pub fn fitness(o1_rel: f64, o2: f64, o3: f64, weights: &FitnessWeights) -> f64 {
    weights.w1 * o1_rel + weights.w2 * o2 + weights.w3 * o3
}

pub fn satisfies_constraint(terminal: f64, goal: &GoalSpec) -> bool {
    (terminal - goal.goal_value).abs() <= goal.epsilon_rel * goal.goal_value.abs().max(GOAL_FLOOR)
}

/// Policy with every actionable gene at `level_index`, paired with a goal
/// equal to its projected terminal, so the goal is reachable by construction.
pub fn planted_goal(
    bundle: &ModelBundle,
    history: &MultivariateSeries,
    horizon: usize,
    level_index: usize,
    epsilon_rel: f64,
) -> Result<(InterventionPolicy, GoalSpec)> {
    let space = PolicySpace::for_bundle(bundle, horizon)?;
    if level_index >= space.levels.len() {
        return Err(Error::InvalidArgument(format!(
            "level index {level_index} outside alphabet of {}",
            space.levels.len()
        )));
    }
    let mut policy = space.all_median();
    for v in (0..space.n_vars()).filter(|&v| space.actionable[v]) {
        for n in 0..horizon {
            policy.set_gene(v, n, level_index);
        }
    }
    let projection = project_scenario(bundle, history, &policy)?;
    let goal = GoalSpec::new(projection.terminal, epsilon_rel, horizon)?;
    Ok((policy, goal))
}

/// Scores policies against one fixed (bundle, history, goal) triple.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    bundle: &'a ModelBundle,
    space: PolicySpace,
    goal: GoalSpec,
    weights: FitnessWeights,
    seed: Vec<Vec<f64>>,
    reference: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        bundle: &'a ModelBundle,
        history: &MultivariateSeries,
        goal: GoalSpec,
        weights: FitnessWeights,
    ) -> Result<Self> {
        goal.validate()?;
        weights.validate()?;
        let seed = seed_window(bundle, history)?;
        let horizon = goal.horizon_steps;
        if history.len() < horizon {
            return Err(Error::InsufficientData(format!(
                "history has {} rows, similarity reference needs {horizon}",
                history.len()
            )));
        }
        let start = history.len() - horizon;
        let reference = (0..bundle.n_vars())
            .flat_map(|v| {
                let norm = bundle.normalization[v];
                history.column(v)[start..].iter().map(move |&x| norm.apply(x))
            })
            .collect();
        Ok(Self {
            bundle,
            space: PolicySpace::for_bundle(bundle, horizon)?,
            goal,
            weights,
            seed,
            reference,
        })
    }

    pub fn space(&self) -> &PolicySpace {
        &self.space
    }

    pub fn goal(&self) -> &GoalSpec {
        &self.goal
    }

    pub fn bundle(&self) -> &ModelBundle {
        self.bundle
    }

    /// z-normalized last `N` observed rows, flattened variable-major.
    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn project(&self, policy: &InterventionPolicy) -> Result<ScenarioProjection> {
        project_from_seed(self.bundle, &self.space, &self.seed, policy, None)
    }

    /// Projection plus `bands[v][n]`: the sorted quantiles variable `v`'s
    /// bank offered at step `n + 1`, from which the gene picked.
    pub fn project_with_bands(
        &self,
        policy: &InterventionPolicy,
    ) -> Result<(ScenarioProjection, Vec<Vec<Vec<f64>>>)> {
        let mut bands = vec![Vec::with_capacity(policy.horizon); self.bundle.n_vars()];
        let projection =
            project_from_seed(self.bundle, &self.space, &self.seed, policy, Some(&mut bands))?;
        Ok((projection, bands))
    }

    pub fn objectives(
        &self,
        policy: &InterventionPolicy,
        projection: &ScenarioProjection,
    ) -> Result<ObjectiveValues> {
        let (o1, o1_rel) = objective_o1(projection.terminal, &self.goal);
        let flat: Vec<f64> = projection
            .paths
            .iter()
            .enumerate()
            .flat_map(|(v, path)| {
                let norm = self.bundle.normalization[v];
                path.iter().map(move |&x| norm.apply(x))
            })
            .collect();
        let o2 = objective_o2(&self.reference, &flat)?;
        let o3 = objective_o3(policy, &self.space);
        Ok(ObjectiveValues {
            o1,
            o1_rel,
            o2,
            o3,
            fitness: fitness(o1_rel, o2, o3, &self.weights),
        })
    }

    pub fn evaluate(
        &self,
        policy: &InterventionPolicy,
    ) -> Result<(ObjectiveValues, ScenarioProjection)> {
        let projection = self.project(policy)?;
        let obj = self.objectives(policy, &projection)?;
        Ok((obj, projection))
    }

    /// Report for `policy`, re-projecting it to collect quantile bands.
    pub fn report(&self, policy: &InterventionPolicy) -> Result<ScenarioReport> {
        let (projection, bands) = self.project_with_bands(policy)?;
        let objectives = self.objectives(policy, &projection)?;
        Ok(ScenarioReport::new(
            self.bundle,
            &self.space,
            &self.goal,
            policy,
            &projection,
            &objectives,
            bands,
        ))
    }
}

/// JSON payload describing one projected scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub names: Vec<String>,
    pub target: String,
    pub actionable: Vec<bool>,
    pub goal: GoalSpec,
    pub horizon_seconds: f64,
    pub paths: Vec<Vec<f64>>,
    pub target_path: Vec<f64>,
    pub terminal: f64,
    pub satisfied: bool,
    pub objectives: ObjectiveValues,
    pub likelihood: f64,
    pub likelihood_percent: f64,
    /// `policy_levels[v][n]`: quantile level followed by variable `v` at step `n + 1`.
    pub policy_levels: Vec<Vec<f64>>,
    pub levels: Vec<f64>,
    /// `bands[v][n][k]`: value of quantile `levels[k]` for variable `v` at step `n + 1`.
    pub bands: Vec<Vec<Vec<f64>>>,
}

impl ScenarioReport {
    pub fn new(
        bundle: &ModelBundle,
        space: &PolicySpace,
        goal: &GoalSpec,
        policy: &InterventionPolicy,
        projection: &ScenarioProjection,
        objectives: &ObjectiveValues,
        bands: Vec<Vec<Vec<f64>>>,
    ) -> Self {
        Self {
            names: bundle.names.clone(),
            target: bundle.names[bundle.target].clone(),
            actionable: bundle.actionable.clone(),
            goal: *goal,
            horizon_seconds: goal.horizon_seconds(bundle.delta_seconds),
            paths: projection.paths.clone(),
            target_path: projection.target_path.clone(),
            terminal: projection.terminal,
            satisfied: satisfies_constraint(projection.terminal, goal),
            objectives: *objectives,
            likelihood: projection.likelihood,
            likelihood_percent: (projection.likelihood * 1000.0).round() / 10.0,
            policy_levels: space.levels_grid(policy),
            levels: space.levels.clone(),
            bands,
        }
    }
}
