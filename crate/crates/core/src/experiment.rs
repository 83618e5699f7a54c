//! Seeded Monte-Carlo sweeps over scenario x controller x noise level.
//!
//! A sweep is described by an [`ExperimentConfig`] (TOML, see the README for
//! the schema). Each `(noise level, repetition)` cell draws its own
//! prediction noise from a seed derived from `base_seed`, computes OPT and
//! rolls out every configured controller. Cells run on a worker pool; results
//! are gathered in cell order so output does not depend on the thread count.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{
    Controller, LambdaConfident, OfflineOptimal, PredictionWindow, SelfTuning, ThresholdControl, ZeroConfident,
};
use crate::error::{Error, Result};
use crate::metrics::{prediction_error, self_variation};
use crate::riccati::{solve_dare_regularized, DareOptions, RiccatiSolution, SystemMatrices};
use crate::scenarios::{
    cartpole_instance, ev_charging_instance, generate_predictions, ingest_ev_csv,
    robot_tracking_instance_with_action_cost, synthetic_ev_sessions, NoiseKind, NoiseModel, COST_REGULARIZATION,
};
use crate::simulation::{rollout_cartpole, rollout_linear, CartPoleParams, Rollout};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    Tracking {
        /// Diagonal action cost; zero is regularized.
        #[serde(default = "default_tracking_r")]
        action_cost: f64,
    },
    EvSynthetic {
        #[serde(default = "default_synthetic_chargers")]
        chargers: usize,
        #[serde(default = "default_arrival_rate")]
        arrival_rate: f64,
        #[serde(default = "default_energy")]
        energy_kwh: f64,
    },
    EvCsv {
        /// Relative paths resolve against the config file's directory.
        /// Sessions arriving at or after the horizon are ignored.
        path: PathBuf,
        #[serde(default = "default_realistic_chargers")]
        chargers: usize,
    },
    Cartpole {
        #[serde(default)]
        params: CartPoleParams,
        /// Initial `(y, y_dot, theta, theta_dot)`; zero when omitted.
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
}

fn default_tracking_r() -> f64 {
    1e-2
}
fn default_synthetic_chargers() -> usize {
    10
}
fn default_realistic_chargers() -> usize {
    52
}
fn default_arrival_rate() -> f64 {
    0.2
}
fn default_energy() -> f64 {
    5.0
}

impl ScenarioSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioSpec::Tracking { .. } => "tracking",
            ScenarioSpec::EvSynthetic { .. } => "ev_synthetic",
            ScenarioSpec::EvCsv { .. } => "ev_csv",
            ScenarioSpec::Cartpole { .. } => "cartpole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    Offline,
    Zero,
    One,
    Lambda {
        lambda: f64,
    },
    Threshold {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    SelfTuning {
        #[serde(default = "default_lambda0")]
        lambda0: f64,
        #[serde(default)]
        clamp: bool,
    },
}

fn default_sigma() -> f64 {
    1e-9
}
fn default_lambda0() -> f64 {
    0.3
}

impl ControllerSpec {
    pub fn label(&self) -> String {
        match *self {
            ControllerSpec::Offline => "offline".into(),
            ControllerSpec::Zero => "zero".into(),
            ControllerSpec::One => "one".into(),
            ControllerSpec::Lambda { lambda } => format!("lambda({lambda})"),
            ControllerSpec::Threshold { sigma } => format!("threshold({sigma})"),
            ControllerSpec::SelfTuning { lambda0, clamp: false } => format!("self_tuning({lambda0})"),
            ControllerSpec::SelfTuning { lambda0, clamp: true } => format!("self_tuning({lambda0},clamp)"),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ControllerSpec::Lambda { lambda } if !lambda.is_finite() => {
                Err(Error::Config(format!("lambda must be finite, got {lambda}")))
            }
            ControllerSpec::Threshold { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::Config(format!("threshold sigma must be positive, got {sigma}")))
            }
            ControllerSpec::SelfTuning { lambda0, .. } if !lambda0.is_finite() => {
                Err(Error::Config(format!("lambda0 must be finite, got {lambda0}")))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self, ric: &RiccatiSolution, window: &PredictionWindow) -> Result<Box<dyn Controller>> {
        let w_hat = window.predictions();
        Ok(match *self {
            ControllerSpec::Offline => Box::new(OfflineOptimal::new(ric, window.hindsight())?),
            ControllerSpec::Zero => Box::new(ZeroConfident),
            ControllerSpec::One => Box::new(LambdaConfident::new(ric, w_hat, 1.0)?),
            ControllerSpec::Lambda { lambda } => Box::new(LambdaConfident::new(ric, w_hat, lambda)?),
            ControllerSpec::Threshold { sigma } => Box::new(ThresholdControl::new(ric, w_hat, sigma)?),
            ControllerSpec::SelfTuning { lambda0, clamp } => Box::new(SelfTuning::new(ric, w_hat, lambda0, clamp)?),
        })
    }
}

/// Noise family for the sweep; the parameter comes from `noise_levels` and
/// the seed from the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default)]
    pub broadcast: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Report the repetition with the largest algorithmic cost.
    #[default]
    Worst,
    /// Report the mean over repetitions.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub horizon: usize,
    pub controllers: Vec<ControllerSpec>,
    pub noise: NoiseSpec,
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub mc_repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

fn default_repetitions() -> usize {
    5
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a config file. Relative `ev_csv` and output paths
    /// are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        if let ScenarioSpec::EvCsv { path: csv, .. } = &mut config.scenario {
            if csv.is_relative() {
                *csv = dir.join(&*csv);
            }
        }
        if let Some(out) = config.output_path.as_mut().filter(|p| p.is_relative()) {
            *out = dir.join(&*out);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.horizon < 2 {
            return Err(Error::Config(format!(
                "horizon must be at least 2, got {}",
                self.horizon
            )));
        }
        if self.controllers.is_empty() {
            return Err(Error::Config("no controllers configured".into()));
        }
        for c in &self.controllers {
            c.validate()?;
        }
        if self.noise_levels.is_empty() {
            return Err(Error::Config("no noise levels configured".into()));
        }
        if let Some(bad) = self.noise_levels.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(format!(
                "noise levels must be finite and >= 0, got {bad}"
            )));
        }
        if self.mc_repetitions == 0 {
            return Err(Error::Config("mc_repetitions must be at least 1".into()));
        }
        match &self.scenario {
            ScenarioSpec::Tracking { action_cost } if !(*action_cost >= 0.0 && action_cost.is_finite()) => {
                return Err(Error::Config(format!("action_cost must be >= 0, got {action_cost}")));
            }
            ScenarioSpec::EvSynthetic {
                chargers,
                arrival_rate,
                energy_kwh,
            } => {
                if *chargers == 0 || !(*arrival_rate > 0.0 && *arrival_rate <= 1.0) || !(*energy_kwh > 0.0) {
                    return Err(Error::Config(
                        "ev_synthetic needs chargers >= 1, rate in (0, 1], energy > 0".into(),
                    ));
                }
            }
            ScenarioSpec::EvCsv { chargers: 0, .. } => {
                return Err(Error::Config("ev_csv needs at least one charger".into()));
            }
            ScenarioSpec::Cartpole { params, x0 } => {
                params.validate().map_err(|e| Error::Config(e.to_string()))?;
                if x0.as_ref().is_some_and(|x| x.len() != 4) {
                    return Err(Error::Config("cartpole x0 must have 4 entries".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Dynamics {
    Linear,
    CartPole(CartPoleParams),
}

/// A fully built instance: system, Riccati solution, true disturbances.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub sys: SystemMatrices,
    pub ric: RiccatiSolution,
    pub w: Vec<DVector<f64>>,
    pub x0: DVector<f64>,
    dynamics: Dynamics,
}

impl Scenario {
    pub fn build(spec: &ScenarioSpec, horizon: usize) -> Result<Self> {
        let opts = DareOptions::default();
        let (sys, w, x0, dynamics) = match spec {
            ScenarioSpec::Tracking { action_cost } => {
                let inst = robot_tracking_instance_with_action_cost(horizon, *action_cost)?;
                let x0 = DVector::zeros(4);
                (inst.sys, inst.w, x0, Dynamics::Linear)
            }
            ScenarioSpec::EvSynthetic {
                chargers,
                arrival_rate,
                energy_kwh,
            } => {
                let sessions = synthetic_ev_sessions(*chargers, horizon, *arrival_rate, *energy_kwh)?;
                let inst = ev_charging_instance(*chargers, horizon, &sessions)?;
                (inst.sys, inst.w, DVector::zeros(*chargers), Dynamics::Linear)
            }
            ScenarioSpec::EvCsv { path, chargers } => {
                let mut sessions = ingest_ev_csv(path)?;
                sessions.retain(|s| s.arrival_slot < horizon);
                let inst = ev_charging_instance(*chargers, horizon, &sessions)?;
                (inst.sys, inst.w, DVector::zeros(*chargers), Dynamics::Linear)
            }
            ScenarioSpec::Cartpole { params, x0 } => {
                let inst = cartpole_instance(*params, horizon)?;
                let x0 = x0
                    .as_ref()
                    .map_or_else(|| DVector::zeros(4), |v| DVector::from_column_slice(v));
                (inst.sys, inst.w, x0, Dynamics::CartPole(inst.params))
            }
        };
        let ric = solve_dare_regularized(&sys, horizon, opts, COST_REGULARIZATION)?;
        Ok(Self {
            name: spec.name().to_string(),
            sys,
            ric,
            w,
            x0,
            dynamics,
        })
    }

    pub fn horizon(&self) -> usize {
        self.w.len()
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.dynamics, Dynamics::Linear)
    }

    /// Rolls `controller` out on this scenario's dynamics.
    pub fn rollout(&self, controller: &mut dyn Controller, window: &PredictionWindow) -> Result<Rollout> {
        match &self.dynamics {
            Dynamics::Linear => rollout_linear(&self.sys, &self.ric, controller, window, &self.x0),
            Dynamics::CartPole(params) => rollout_cartpole(params, &self.sys, &self.ric, controller, window, &self.x0),
        }
    }

    /// Predictions for one cell.
    pub fn predictions(&self, noise: &NoiseModel) -> Result<Vec<DVector<f64>>> {
        generate_predictions(&self.w, noise)
    }

    pub fn window(&self, noise: &NoiseModel) -> Result<PredictionWindow> {
        PredictionWindow::new(self.w.clone(), self.predictions(noise)?)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `(level, repetition)` cell.
pub fn cell_seed(base_seed: u64, level_index: u64, repetition: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ level_index) ^ repetition)
}

/// Outcome of one controller in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutcome {
    /// `+inf` when the rollout diverged.
    pub alg_cost: f64,
    pub lambda_final: Option<f64>,
    pub survival_steps: usize,
}

/// Everything computed for one `(level, repetition)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub level_index: usize,
    pub repetition: usize,
    pub seed: u64,
    pub opt_cost: f64,
    pub epsilon: f64,
    pub mu_var_w: f64,
    pub mu_var_wh: f64,
    /// In config controller order.
    pub outcomes: Vec<ControllerOutcome>,
}

impl ExperimentConfig {
    pub fn noise_model(&self, level_index: usize, repetition: usize) -> NoiseModel {
        NoiseModel {
            kind: self.noise.kind,
            param: self.noise_levels[level_index],
            seed: cell_seed(self.base_seed, level_index as u64, repetition as u64),
            broadcast: self.noise.broadcast,
        }
    }
}

/// Runs a single cell sequentially.
pub fn run_cell(
    config: &ExperimentConfig,
    scenario: &Scenario,
    level_index: usize,
    repetition: usize,
) -> Result<CellResult> {
    let level = config.noise_levels[level_index];
    let ctx = |what: &str| format!("{what} (level {level}, repetition {repetition})");
    let noise = config.noise_model(level_index, repetition);
    let window = scenario
        .window(&noise)
        .map_err(|e| e.context(ctx("generating predictions")))?;

    let mut offline = OfflineOptimal::new(&scenario.ric, window.hindsight())?;
    let opt = scenario
        .rollout(&mut offline, &window)
        .map_err(|e| e.context(ctx("offline optimum")))?;
    if !(opt.total_cost > 0.0) {
        return Err(Error::DegenerateInstance(format!("OPT = {}", opt.total_cost)).context(ctx("offline optimum")));
    }
    let w = window.hindsight();
    let w_hat = window.predictions();
    let epsilon = prediction_error(&scenario.ric, w, w_hat)?;

    let mut outcomes = Vec::with_capacity(config.controllers.len());
    for spec in &config.controllers {
        let mut controller = spec.build(&scenario.ric, &window)?;
        let outcome = match scenario.rollout(controller.as_mut(), &window) {
            Ok(r) => ControllerOutcome {
                alg_cost: r.total_cost,
                lambda_final: r.lambda_final,
                survival_steps: r.survival_steps(),
            },
            Err(Error::Diverged { step }) => ControllerOutcome {
                alg_cost: f64::INFINITY,
                lambda_final: None,
                survival_steps: step,
            },
            Err(e) => return Err(e.context(ctx(&format!("controller {}", spec.label())))),
        };
        outcomes.push(outcome);
    }
    Ok(CellResult {
        level_index,
        repetition,
        seed: noise.seed,
        opt_cost: opt.total_cost,
        epsilon,
        mu_var_w: self_variation(w),
        mu_var_wh: self_variation(w_hat),
        outcomes,
    })
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every cell, `threads` workers (`None`: one per core). Results come
/// back in `(level, repetition)` order.
pub fn run_cells(config: &ExperimentConfig, scenario: &Scenario, threads: Option<usize>) -> Result<Vec<CellResult>> {
    config.validate()?;
    let cells: Vec<(usize, usize)> = (0..config.noise_levels.len())
        .flat_map(|l| (0..config.mc_repetitions).map(move |r| (l, r)))
        .collect();
    let pool = thread_pool(threads)?;
    let results: Vec<Result<CellResult>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(l, r)| run_cell(config, scenario, l, r))
            .collect()
    });
    results.into_iter().collect()
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scenario: String,
    pub controller: String,
    pub noise_level: f64,
    pub epsilon: f64,
    pub alg_cost: f64,
    pub opt_cost: f64,
    pub cr: f64,
    pub mu_var_w: f64,
    pub mu_var_wh: f64,
    /// `None` under mean selection.
    pub repetition_index_selected: Option<usize>,
    pub lambda_final: Option<f64>,
    /// Standard deviation of the algorithmic cost over repetitions.
    pub alg_cost_std: f64,
    /// Steps survived (mean under mean selection); the horizon for linear runs.
    pub survival_steps: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.iter().any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    let m = mean(xs.iter().copied());
    (mean(xs.iter().map(|x| (x - m) * (x - m)))).sqrt()
}

/// Collapses cells into one row per `(controller, level)`, ordered by
/// controller then level as listed in the config.
pub fn aggregate(config: &ExperimentConfig, scenario_name: &str, cells: &[CellResult]) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(config.controllers.len() * config.noise_levels.len());
    for (ci, spec) in config.controllers.iter().enumerate() {
        for (li, &level) in config.noise_levels.iter().enumerate() {
            let reps: Vec<&CellResult> = cells.iter().filter(|c| c.level_index == li).collect();
            if reps.is_empty() {
                continue;
            }
            let costs: Vec<f64> = reps.iter().map(|c| c.outcomes[ci].alg_cost).collect();
            let alg_cost_std = std_dev(&costs);
            let row = match config.selection {
                Selection::Worst => {
                    let mut pick = 0;
                    for (k, &cost) in costs.iter().enumerate() {
                        if cost > costs[pick] {
                            pick = k;
                        }
                    }
                    let cell = reps[pick];
                    let outcome = &cell.outcomes[ci];
                    SweepRow {
                        scenario: scenario_name.to_string(),
                        controller: spec.label(),
                        noise_level: level,
                        epsilon: cell.epsilon,
                        alg_cost: outcome.alg_cost,
                        opt_cost: cell.opt_cost,
                        cr: outcome.alg_cost / cell.opt_cost,
                        mu_var_w: cell.mu_var_w,
                        mu_var_wh: cell.mu_var_wh,
                        repetition_index_selected: Some(cell.repetition),
                        lambda_final: outcome.lambda_final,
                        alg_cost_std,
                        survival_steps: outcome.survival_steps as f64,
                    }
                }
                Selection::Mean => {
                    let alg_cost = mean(costs.iter().copied());
                    let opt_cost = mean(reps.iter().map(|c| c.opt_cost));
                    let lambdas: Vec<f64> = reps.iter().filter_map(|c| c.outcomes[ci].lambda_final).collect();
                    SweepRow {
                        scenario: scenario_name.to_string(),
                        controller: spec.label(),
                        noise_level: level,
                        epsilon: mean(reps.iter().map(|c| c.epsilon)),
                        alg_cost,
                        opt_cost,
                        cr: alg_cost / opt_cost,
                        mu_var_w: mean(reps.iter().map(|c| c.mu_var_w)),
                        mu_var_wh: mean(reps.iter().map(|c| c.mu_var_wh)),
                        repetition_index_selected: None,
                        lambda_final: (lambdas.len() == reps.len()).then(|| mean(lambdas.iter().copied())),
                        alg_cost_std,
                        survival_steps: mean(reps.iter().map(|c| c.outcomes[ci].survival_steps as f64)),
                    }
                }
            };
            rows.push(row);
        }
    }
    rows
}

/// Builds the scenario, runs all cells and aggregates them.
pub fn run_sweep(config: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let scenario = Scenario::build(&config.scenario, config.horizon)?;
    let cells = run_cells(config, &scenario, threads)?;
    Ok(aggregate(config, &scenario.name, &cells))
}

pub const SWEEP_COLUMNS: [&str; 13] = [
    "scenario",
    "controller",
    "noise_level",
    "epsilon",
    "alg_cost",
    "opt_cost",
    "cr",
    "mu_var_w",
    "mu_var_wh",
    "repetition_index_selected",
    "lambda_final",
    "alg_cost_std",
    "survival_steps",
];

/// 17 significant digits, `inf`/`-inf`/`nan` spelled out.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let file = fs::File::create(path).map_err(io_err)?;
    Ok(csv::WriterBuilder::new().flexible(false).from_writer(file))
}

fn csv_write_err(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// Writes the sweep table.
pub fn emit_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = csv_writer(path)?;
    out.write_record(SWEEP_COLUMNS).map_err(|e| csv_write_err(path, e))?;
    for r in rows {
        let record = [
            r.scenario.clone(),
            r.controller.clone(),
            format_float(r.noise_level),
            format_float(r.epsilon),
            format_float(r.alg_cost),
            format_float(r.opt_cost),
            format_float(r.cr),
            format_float(r.mu_var_w),
            format_float(r.mu_var_wh),
            r.repetition_index_selected.map(|i| i.to_string()).unwrap_or_default(),
            r.lambda_final.map(format_float).unwrap_or_default(),
            format_float(r.alg_cost_std),
            format_float(r.survival_steps),
        ];
        out.write_record(&record).map_err(|e| csv_write_err(path, e))?;
    }
    out.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-step trajectory: `t`, state components, action components, `lambda`.
/// The terminal state gets its own line with blank action and lambda fields.
pub fn emit_trace(rollout: &Rollout, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = rollout.states.first().map_or(0, |x| x.len());
    let m = rollout.actions.first().map_or(0, |u| u.len());
    let mut out = csv_writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.push("lambda".into());
    out.write_record(&header).map_err(|e| csv_write_err(path, e))?;
    for (t, x) in rollout.states.iter().enumerate() {
        let mut record = vec![t.to_string()];
        record.extend(x.iter().map(|&v| format_float(v)));
        match rollout.actions.get(t) {
            Some(u) => record.extend(u.iter().map(|&v| format_float(v))),
            None => record.extend(std::iter::repeat_n(String::new(), m)),
        }
        let lambda = rollout
            .lambdas
            .as_ref()
            .and_then(|l| l.get(t))
            .map(|&l| format_float(l));
        record.push(lambda.unwrap_or_default());
        out.write_record(&record).map_err(|e| csv_write_err(path, e))?;
    }
    out.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Single rollout of the controller labelled `label` at noise `level`
/// (repetition 0), for trajectory output.
pub fn run_trace(config: &ExperimentConfig, label: &str, level: f64) -> Result<Rollout> {
    config.validate()?;
    let spec = config.controllers.iter().find(|c| c.label() == label).ok_or_else(|| {
        let known: Vec<_> = config.controllers.iter().map(ControllerSpec::label).collect();
        Error::Config(format!("no controller labelled `{label}` (have: {})", known.join(", ")))
    })?;
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::Config(format!(
            "noise level must be finite and >= 0, got {level}"
        )));
    }
    let level_key = config
        .noise_levels
        .iter()
        .position(|&l| l == level)
        .map_or(level.to_bits(), |i| i as u64);
    let scenario = Scenario::build(&config.scenario, config.horizon)?;
    let noise = NoiseModel {
        kind: config.noise.kind,
        param: level,
        seed: cell_seed(config.base_seed, level_key, 0),
        broadcast: config.noise.broadcast,
    };
    let window = scenario.window(&noise)?;
    let mut controller = spec.build(&scenario.ric, &window)?;
    scenario.rollout(controller.as_mut(), &window)
}
