//! Monte Carlo simulation of the calibration stage (finite-shot prior
//! measurements) and of the communication stage (empirical error rates).
//!
//! Randomness comes from ChaCha20 (`rand_chacha` 0.9, pinned). The generator
//! is keyed with `ChaCha20Rng::seed_from_u64(seed)` and every independent
//! experiment gets its own stream via `set_stream`:
//!
//! * calibration of hypothesis `i` with setting `axis`: stream `3·i + axis`
//!   (`x = 0`, `y = 1`, `z = 2`), so a state/axis pair draws the same counts
//!   whatever other settings are measured alongside it;
//! * communication trials for hypothesis `i`: stream `2³² + i`.
//!
//! Counts are drawn from `rand_distr::Binomial` (0.5.1, pinned).

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::helstrom;
use crate::mlse::FrequencyTable;
use crate::qmat;
use crate::states::{born_table, make_prior_povm, make_state, pauli_projector, Axis, DensityMatrix, PovmSet, Sign, StateParams};

const COMMUNICATION_STREAM_BASE: u64 = 1 << 32;

/// Shots per measurement setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shots {
    Finite(u64),
    /// Infinitely many shots: frequencies equal the Born probabilities.
    Asymptotic,
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shots::Finite(n) => write!(f, "{n}"),
            Shots::Asymptotic => f.write_str("inf"),
        }
    }
}

impl FromStr for Shots {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "asymptotic" => Ok(Shots::Asymptotic),
            other => other
                .parse::<u64>()
                .map(Shots::Finite)
                .map_err(|_| Error::InvalidParameter(format!("shots must be a positive integer or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CalibrationConfig {
    pub true_states: Vec<DensityMatrix>,
    pub settings: Vec<Axis>,
    pub shots: Shots,
    pub seed: u64,
}

impl CalibrationConfig {
    pub fn from_params(params: &[StateParams], settings: Vec<Axis>, shots: Shots, seed: u64) -> Result<Self> {
        let true_states = params.iter().map(|p| make_state(*p)).collect::<Result<_>>()?;
        Ok(Self {
            true_states,
            settings,
            shots,
            seed,
        })
    }

    pub fn prior_povm(&self) -> Result<PovmSet> {
        make_prior_povm(&self.settings)
    }

    fn validate(&self) -> Result<()> {
        if self.true_states.is_empty() {
            return Err(Error::InvalidParameter("no states to calibrate".into()));
        }
        if let Some(rho) = self.true_states.iter().find(|r| r.dim() != 2) {
            return Err(Error::UnsupportedDimension(rho.dim()));
        }
        if self.shots == Shots::Finite(0) {
            return Err(Error::InvalidParameter("shots per setting must be at least 1".into()));
        }
        make_prior_povm(&self.settings).map(|_| ())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn binomial_count(rng: &mut ChaCha20Rng, n: u64, p: f64) -> Result<u64> {
    let dist = Binomial::new(n, p.clamp(0.0, 1.0))
        .map_err(|e| Error::InvalidParameter(format!("binomial({n}, {p}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Calibration frequencies `f[i][k]` over the combined prior POVM of
/// `config.settings`, ordered `+a, −a` per setting. Each setting is an
/// independent run of `N` shots; `f = count / (M·N)` so every row sums to 1.
pub fn sample_frequencies(config: &CalibrationConfig) -> Result<FrequencyTable> {
    config.validate()?;
    let n = match config.shots {
        Shots::Asymptotic => {
            let prior = config.prior_povm()?;
            return FrequencyTable::new(born_table(&config.true_states, &prior)?);
        }
        Shots::Finite(n) => n,
    };
    let total = (config.settings.len() as u64 * n) as f64;
    let mut rows = Vec::with_capacity(config.true_states.len());
    for (i, rho) in config.true_states.iter().enumerate() {
        let mut row = Vec::with_capacity(2 * config.settings.len());
        for &axis in &config.settings {
            let p_plus = qmat::trace_product(rho.op(), &pauli_projector(axis, Sign::Plus))?;
            let mut rng = stream_rng(config.seed, 3 * i as u64 + axis.index() as u64);
            let plus = binomial_count(&mut rng, n, p_plus)?;
            row.push(plus as f64 / total);
            row.push((n - plus) as f64 / total);
        }
        rows.push(row);
    }
    FrequencyTable::new(rows)
}

/// Counts of a simulated communication stage. `wrong_1_given_2` counts
/// decisions for hypothesis 1 when 2 was sent.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalErrorReport {
    pub trials: u64,
    pub wrong_1_given_2: u64,
    pub wrong_2_given_1: u64,
    pub empirical_er: f64,
}

/// Sends `trials_per_state` copies of each of two states through the
/// designed measurement and counts wrong decisions.
pub fn empirical_error_rate(
    povm: &PovmSet,
    true_states: &[DensityMatrix],
    trials_per_state: u64,
    seed: u64,
) -> Result<EmpiricalErrorReport> {
    if true_states.len() != 2 || povm.len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "two states and two outcomes required, got {} and {}",
            true_states.len(),
            povm.len()
        )));
    }
    if trials_per_state == 0 {
        return Err(Error::InvalidParameter("trials_per_state must be at least 1".into()));
    }
    let e = povm.elements();
    // P(decide 2 | 1 sent) and P(decide 1 | 2 sent)
    let p21 = qmat::trace_product(true_states[0].op(), &e[1])?;
    let p12 = qmat::trace_product(true_states[1].op(), &e[0])?;
    let wrong_2_given_1 = binomial_count(&mut stream_rng(seed, COMMUNICATION_STREAM_BASE), trials_per_state, p21)?;
    let wrong_1_given_2 = binomial_count(&mut stream_rng(seed, COMMUNICATION_STREAM_BASE + 1), trials_per_state, p12)?;
    Ok(EmpiricalErrorReport {
        trials: trials_per_state,
        wrong_1_given_2,
        wrong_2_given_1,
        empirical_er: (wrong_1_given_2 + wrong_2_given_1) as f64 / (2 * trials_per_state) as f64,
    })
}

/// Error rate of a designed POVM against the true states.
pub fn exact_error_rate_of_design(opt_povm: &PovmSet, true_states: &[DensityMatrix]) -> Result<f64> {
    if true_states.len() != 2 {
        return Err(Error::InvalidParameter(format!("two states required, got {}", true_states.len())));
    }
    helstrom::error_rate(opt_povm, &true_states[0], &true_states[1])
}
