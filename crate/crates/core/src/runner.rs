//! Experiment orchestration: α sweeps over the qubit family, problem files,
//! calibration datasets and the reports printed by the CLI.

use std::f64::consts::FRAC_PI_4;
use std::fmt::{self, Write as _};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};

use crate::calibsim::{self, CalibrationConfig, Shots};
use crate::error::{Error, Result};
use crate::helstrom;
use crate::mlse::{self, FrequencyTable, MlseOptions, MlseProblem, MlseResult};
use crate::qmat::HermitianOperator;
use crate::states::{make_prior_povm, make_state, Axis, DensityMatrix, PovmSet, Sign, StateParams};

pub const CSV_HEADER: [&str; 9] = [
    "alpha",
    "seed",
    "er_designed",
    "er_helstrom_true",
    "er_pure_bound",
    "loglik_final",
    "iterations",
    "residual",
    "converged",
];

/// Grid points are `start + (stop − start)·k/(count − 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl AlphaGrid {
    pub fn points(&self) -> Vec<f64> {
        let last = self.count - 1;
        (0..self.count)
            .map(|k| {
                if k == last {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * k as f64 / last as f64
                }
            })
            .collect()
    }
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: FRAC_PI_4,
            count: 33,
        }
    }
}

fn deserialize_shots<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Shots, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Count(u64),
        Word(String),
    }
    match Raw::deserialize(d)? {
        Raw::Count(n) => Ok(Shots::Finite(n)),
        Raw::Word(w) => w.parse().map_err(de::Error::custom),
    }
}

fn serialize_shots<S: serde::Serializer>(shots: &Shots, s: S) -> std::result::Result<S::Ok, S::Error> {
    match shots {
        Shots::Finite(n) => s.serialize_u64(*n),
        Shots::Asymptotic => s.serialize_str("inf"),
    }
}

/// Sweep over α for the pair `ρ(α, d1, +)`, `ρ(α, d2, −)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub alpha_grid: AlphaGrid,
    pub d1: f64,
    pub d2: f64,
    pub settings: Vec<Axis>,
    /// Shots per setting: an integer, or `"inf"` for exact probabilities.
    #[serde(deserialize_with = "deserialize_shots", serialize_with = "serialize_shots")]
    pub shots: Shots,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub mlse: MlseOptions,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(format!("sweep config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.alpha_grid;
        if g.count < 2 {
            return Err(Error::InvalidParameter(format!("alpha_grid.count = {} (need at least 2)", g.count)));
        }
        for (name, v) in [("alpha_grid.start", g.start), ("alpha_grid.stop", g.stop)] {
            if !(0.0..=FRAC_PI_4).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, pi/4]")));
            }
        }
        for (name, v) in [("d1", self.d1), ("d2", self.d2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("seeds: at least one seed is required".into()));
        }
        if self.shots == Shots::Finite(0) {
            return Err(Error::InvalidParameter("shots must be at least 1".into()));
        }
        make_prior_povm(&self.settings)?;
        self.mlse.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowStatus {
    Converged,
    NotConverged,
    Failed(String),
}

impl RowStatus {
    pub fn csv_value(&self) -> &'static str {
        match self {
            RowStatus::Converged => "true",
            RowStatus::NotConverged => "false",
            RowStatus::Failed(_) => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub seed: u64,
    pub er_designed: f64,
    pub er_helstrom_true: f64,
    pub er_pure_bound: f64,
    pub loglik_final: f64,
    pub iterations: usize,
    pub residual: f64,
    pub status: RowStatus,
}

impl SweepRow {
    pub fn converged(&self) -> bool {
        self.status == RowStatus::Converged
    }
}

fn true_pair(alpha: f64, d1: f64, d2: f64) -> Result<[DensityMatrix; 2]> {
    Ok([
        make_state(StateParams::new(alpha, d1, Sign::Plus)?)?,
        make_state(StateParams::new(alpha, d2, Sign::Minus)?)?,
    ])
}

/// The estimation problem solved at one sweep point, with its true states.
pub fn sweep_problem(config: &SweepConfig, alpha: f64, seed: u64) -> Result<(MlseProblem, [DensityMatrix; 2])> {
    let states = true_pair(alpha, config.d1, config.d2)?;
    let calib = CalibrationConfig {
        true_states: states.to_vec(),
        settings: config.settings.clone(),
        shots: config.shots,
        seed,
    };
    let problem = MlseProblem::new(calib.prior_povm()?, calibsim::sample_frequencies(&calib)?)?;
    Ok((problem, states))
}

fn sweep_point(config: &SweepConfig, alpha: f64, seed: u64) -> SweepRow {
    let mut row = SweepRow {
        alpha,
        seed,
        er_designed: f64::NAN,
        er_helstrom_true: f64::NAN,
        er_pure_bound: f64::NAN,
        loglik_final: f64::NAN,
        iterations: 0,
        residual: f64::NAN,
        status: RowStatus::Converged,
    };
    let outcome = (|| -> Result<MlseResult> {
        let (problem, states) = sweep_problem(config, alpha, seed)?;
        row.er_helstrom_true = helstrom::helstrom_two_state(&states[0], &states[1])?.error_rate;
        row.er_pure_bound = helstrom::helstrom_bound_pure((2.0 * alpha).cos().clamp(0.0, 1.0))?;
        let result = mlse::run_mlse(&problem, &config.mlse)?;
        row.er_designed = calibsim::exact_error_rate_of_design(&result.opt_povm, &states)?;
        Ok(result)
    })();
    match outcome {
        Ok(result) => {
            row.loglik_final = result.final_loglik();
            row.iterations = result.iterations;
            row.residual = result.residual;
            if !result.converged {
                row.status = RowStatus::NotConverged;
            }
        }
        Err(e) => row.status = RowStatus::Failed(e.to_string()),
    }
    row
}

/// One row per `(alpha, seed)`, sorted by alpha then seed. Failures at a
/// single point are recorded in its row and do not stop the sweep.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let jobs: Vec<(f64, u64)> = config
        .alpha_grid
        .points()
        .into_iter()
        .flat_map(|a| config.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let mut rows: Vec<SweepRow> = jobs.into_par_iter().map(|(a, s)| sweep_point(config, a, s)).collect();
    rows.sort_by(|x, y| x.alpha.total_cmp(&y.alpha).then(x.seed.cmp(&y.seed)));
    Ok(rows)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.alpha),
            r.seed.to_string(),
            fmt_f64(r.er_designed),
            fmt_f64(r.er_helstrom_true),
            fmt_f64(r.er_pure_bound),
            fmt_f64(r.loglik_final),
            r.iterations.to_string(),
            fmt_f64(r.residual),
            r.status.csv_value().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Row-major `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub entries: Vec<[f64; 2]>,
}

impl OperatorEntry {
    pub fn from_operator(op: &HermitianOperator, label: Option<String>) -> Self {
        Self {
            label,
            entries: op.to_row_major().into_iter().map(|(re, im)| [re, im]).collect(),
        }
    }

    fn to_operator(&self, dim: usize, field: &str) -> Result<HermitianOperator> {
        if self.entries.len() != dim * dim {
            return Err(Error::Parse(format!(
                "{field}: expected {} entries for dim = {dim}, found {}",
                dim * dim,
                self.entries.len()
            )));
        }
        let pairs: Vec<(f64, f64)> = self.entries.iter().map(|[re, im]| (*re, *im)).collect();
        HermitianOperator::from_row_major(dim, &pairs).map_err(|e| Error::Parse(format!("{field}: {e}")))
    }
}

/// On-disk form of a discrimination problem (TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dim: usize,
    pub num_states: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_outcomes: Option<usize>,
    pub frequencies: Vec<Vec<f64>>,
    pub prior_povm: Vec<OperatorEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub true_states: Vec<OperatorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlse: Option<MlseOptions>,
}

/// A validated problem plus the optional ground truth used for evaluation.
#[derive(Clone, Debug)]
pub struct LoadedProblem {
    pub problem: MlseProblem,
    pub true_states: Option<Vec<DensityMatrix>>,
    pub options: MlseOptions,
}

impl ProblemFile {
    pub fn new(problem: &MlseProblem, true_states: Option<&[DensityMatrix]>) -> Self {
        let prior = problem.prior_povm();
        Self {
            dim: problem.dim(),
            num_states: problem.num_states(),
            num_outcomes: Some(problem.num_outcomes()),
            frequencies: problem.frequencies().rows().to_vec(),
            prior_povm: prior
                .elements()
                .iter()
                .zip(prior.labels())
                .map(|(e, l)| OperatorEntry::from_operator(e, Some(l.clone())))
                .collect(),
            true_states: true_states
                .unwrap_or_default()
                .iter()
                .map(|r| OperatorEntry::from_operator(r.op(), None))
                .collect(),
            mlse: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("problem file: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("problem file: {e}")))
    }

    /// Checks every invariant, naming the offending field.
    pub fn validate(&self) -> Result<LoadedProblem> {
        if self.dim == 0 {
            return Err(Error::Parse("dim: must be positive".into()));
        }
        if self.num_states == 0 {
            return Err(Error::Parse("num_states: must be positive".into()));
        }
        if self.frequencies.len() != self.num_states {
            return Err(Error::Parse(format!(
                "frequencies: {} rows for num_states = {}",
                self.frequencies.len(),
                self.num_states
            )));
        }
        let mut elements = Vec::with_capacity(self.prior_povm.len());
        let mut labels = Vec::with_capacity(self.prior_povm.len());
        for (k, e) in self.prior_povm.iter().enumerate() {
            elements.push(e.to_operator(self.dim, &format!("prior_povm[{k}]"))?);
            labels.push(e.label.clone().unwrap_or_else(|| k.to_string()));
        }
        let prior = PovmSet::new(elements, labels).map_err(|e| Error::Parse(format!("prior_povm: {e}")))?;
        let freqs = FrequencyTable::new(self.frequencies.clone()).map_err(|e| Error::Parse(format!("frequencies: {e}")))?;
        let problem = MlseProblem::with_outcomes(prior, freqs, self.num_outcomes.unwrap_or(self.num_states))?;
        let true_states = if self.true_states.is_empty() {
            None
        } else {
            if self.true_states.len() != self.num_states {
                return Err(Error::Parse(format!(
                    "true_states: {} states for num_states = {}",
                    self.true_states.len(),
                    self.num_states
                )));
            }
            let states = self
                .true_states
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let field = format!("true_states[{i}]");
                    DensityMatrix::new(e.to_operator(self.dim, &field)?).map_err(|err| Error::Parse(format!("{field}: {err}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(states)
        };
        let options = self.mlse.unwrap_or_default();
        options.validate().map_err(|e| Error::Parse(format!("mlse: {e}")))?;
        Ok(LoadedProblem {
            problem,
            true_states,
            options,
        })
    }
}

pub fn load_problem_file(path: &Path) -> Result<LoadedProblem> {
    let text = std::fs::read_to_string(path)?;
    ProblemFile::from_toml(&text)
        .and_then(|f| f.validate())
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Outcome of solving a problem file.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub result: MlseResult,
    pub est_purity: Vec<f64>,
    pub true_purity: Option<Vec<f64>>,
    /// Error rate of the designed POVM against the true states (two-state problems).
    pub error_rate: Option<f64>,
    pub helstrom_error_rate: Option<f64>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.result.converged
    }
}

/// One bracketed line per row, entries as `re±im i`.
pub fn format_operator(op: &HermitianOperator) -> String {
    let mut out = String::new();
    let n = op.dim();
    for a in 0..n {
        let row: Vec<String> = (0..n)
            .map(|b| {
                let z = op.get(a, b);
                format!("{:+.12}{:+.12}i", z.re, z.im)
            })
            .collect();
        let _ = writeln!(out, "    [{}]", row.join(", "));
    }
    out
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.result;
        let mut s = String::new();
        let _ = writeln!(s, "converged: {}", r.converged);
        let _ = writeln!(s, "iterations: {}", r.iterations);
        let _ = writeln!(s, "residual: {:e}", r.residual);
        let _ = writeln!(s, "loglik: {}", r.final_loglik());
        if let Some(er) = self.error_rate {
            let _ = writeln!(s, "error_rate_vs_true: {er}");
        }
        if let Some(h) = self.helstrom_error_rate {
            let _ = writeln!(s, "helstrom_error_rate_true: {h}");
        }
        for (i, rho) in r.est_states.iter().enumerate() {
            let _ = write!(s, "est_state[{i}] (purity {}", self.est_purity[i]);
            if let Some(tp) = &self.true_purity {
                let _ = write!(s, ", true purity {}", tp[i]);
            }
            let _ = writeln!(s, "):");
            s.push_str(&format_operator(rho.op()));
        }
        for (j, pi) in r.opt_povm.elements().iter().enumerate() {
            let _ = writeln!(s, "povm[{j}]:");
            s.push_str(&format_operator(pi));
        }
        f.write_str(&s)
    }
}

/// Runs the estimator on a loaded problem and evaluates it against the
/// ground truth when one is present.
pub fn solve_loaded(loaded: &LoadedProblem) -> Result<SolveReport> {
    let result = mlse::run_mlse(&loaded.problem, &loaded.options)?;
    let est_purity = result.est_states.iter().map(DensityMatrix::purity).collect();
    let true_purity = loaded
        .true_states
        .as_ref()
        .map(|ts| ts.iter().map(DensityMatrix::purity).collect());
    let (error_rate, helstrom_error_rate) = match loaded.true_states.as_deref() {
        Some(ts @ [a, b]) => (
            Some(calibsim::exact_error_rate_of_design(&result.opt_povm, ts)?),
            Some(helstrom::helstrom_two_state(a, b)?.error_rate),
        ),
        _ => (None, None),
    };
    Ok(SolveReport {
        result,
        est_purity,
        true_purity,
        error_rate,
        helstrom_error_rate,
    })
}

/// Loads, validates and solves a problem file. `tol` and `max_iter`
/// override the file's `[mlse]` section.
pub fn solve_problem_file(path: &Path, tol: Option<f64>, max_iter: Option<usize>) -> Result<SolveReport> {
    let mut loaded = load_problem_file(path)?;
    if let Some(t) = tol {
        loaded.options.tol = t;
    }
    if let Some(m) = max_iter {
        loaded.options.max_iter = m;
    }
    loaded.options.validate()?;
    solve_loaded(&loaded)
}

/// Calibration data for a single state, as written by `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationDataset {
    pub alpha: f64,
    pub d: f64,
    pub sign: String,
    pub settings: Vec<Axis>,
    #[serde(deserialize_with = "deserialize_shots", serialize_with = "serialize_shots")]
    pub shots: Shots,
    pub seed: u64,
    pub labels: Vec<String>,
    pub frequencies: Vec<f64>,
}

impl CalibrationDataset {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("dataset: {e}")))
    }
}

pub fn simulate_dataset(params: StateParams, settings: Vec<Axis>, shots: Shots, seed: u64) -> Result<CalibrationDataset> {
    let calib = CalibrationConfig::from_params(&[params], settings.clone(), shots, seed)?;
    let freqs = calibsim::sample_frequencies(&calib)?;
    let labels = calib.prior_povm()?.labels().to_vec();
    Ok(CalibrationDataset {
        alpha: params.alpha,
        d: params.d,
        sign: match params.sign {
            Sign::Plus => "+".into(),
            Sign::Minus => "-".into(),
        },
        settings,
        shots,
        seed,
        labels,
        frequencies: freqs.row(0).to_vec(),
    })
}

/// Problem file for the family pair `ρ(α, d1, +)`, `ρ(α, d2, −)` with
/// calibration drawn as in a sweep; the true states are included.
pub fn family_problem_file(alpha: f64, d1: f64, d2: f64, settings: &[Axis], shots: Shots, seed: u64) -> Result<ProblemFile> {
    let states = true_pair(alpha, d1, d2)?;
    let calib = CalibrationConfig {
        true_states: states.to_vec(),
        settings: settings.to_vec(),
        shots,
        seed,
    };
    let problem = MlseProblem::new(calib.prior_povm()?, calibsim::sample_frequencies(&calib)?)?;
    Ok(ProblemFile::new(&problem, Some(&states)))
}
