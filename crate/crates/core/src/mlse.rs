//! Joint maximum-likelihood estimation of unknown states and design of the
//! discrimination POVM.
//!
//! The objective combines the prior calibration data with "virtual" data
//! that would be produced if the discrimination were perfect:
//!
//! ```text
//! L(ρ, Π) = Σᵢ ln Pᵢᵢ + Σᵢₖ fᵢₖ ln pᵢₖ,    Pᵢⱼ = Tr[ρᵢ Πⱼ],  pᵢₖ = Tr[ρᵢ πₖ]
//! ```
//!
//! subject to `Tr ρᵢ = 1` and `Σⱼ Πⱼ = I`. Its stationary points satisfy
//!
//! ```text
//! ρᵢ = μᵢ⁻² Rᵢ ρᵢ Rᵢ,          Rᵢ = Πᵢ / Pᵢᵢ + Σₖ (fᵢₖ / pᵢₖ) πₖ,   μᵢ² = Tr[Rᵢ ρᵢ Rᵢ]
//! Πⱼ = λ⁻¹ Sⱼ Πⱼ Sⱼ λ⁻¹,        Sⱼ = ρⱼ / Pⱼⱼ,                      λ² = Σⱼ Sⱼ Πⱼ Sⱼ
//! ```
//!
//! and [`run_mlse`] solves them by applying the right-hand sides repeatedly,
//! starting from maximally mixed states and the uniform POVM `I/J`.
//!
//! All states and all POVM elements are updated simultaneously from the
//! previous iterate. Sums over hypotheses are taken in a content-defined
//! order, so relabeling the hypotheses permutes the result exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{self, HermitianOperator, DEFAULT_PINV_THRESHOLD};
use crate::states::{DensityMatrix, PovmSet};

/// Row-sum tolerance for calibration frequencies.
pub const FREQUENCY_ROW_TOL: f64 = 1e-9;
/// Floor applied to every probability that enters a logarithm or a denominator.
pub const DEFAULT_PROB_FLOOR: f64 = 1e-300;
/// Default relaxation of the fixed-point map. The undamped map (`1.0`)
/// oscillates and diverges near fixed points where one state is pure and the
/// designed POVM is projective.
pub const DEFAULT_DAMPING: f64 = 0.8;
/// Consecutive iterations a floored, positively weighted probability is tolerated.
pub const MAX_FLOORED_ITERATIONS: usize = 100;

/// Calibration frequencies `f[i][k]`: one row per hypothesis, one column per
/// prior-POVM outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyTable {
    rows: Vec<Vec<f64>>,
}

impl FrequencyTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("frequency table has no rows".into()));
        }
        let cols = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols || cols == 0 {
                return Err(Error::InvalidFrequencies {
                    row: i,
                    reason: format!("expected {cols} columns, found {}", row.len()),
                });
            }
            if let Some(k) = row.iter().position(|f| !f.is_finite() || *f < 0.0 || *f > 1.0) {
                return Err(Error::InvalidFrequencies {
                    row: i,
                    reason: format!("entry {k} = {} outside [0, 1]", row[k]),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > FREQUENCY_ROW_TOL {
                return Err(Error::InvalidFrequencies {
                    row: i,
                    reason: format!("row sums to {sum}, expected 1"),
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.rows[0].len()
    }
}

/// A discrimination problem: prior POVM plus calibration frequencies, with
/// one designed outcome per hypothesis.
#[derive(Clone, Debug)]
pub struct MlseProblem {
    prior_povm: PovmSet,
    frequencies: FrequencyTable,
}

impl MlseProblem {
    pub fn new(prior_povm: PovmSet, frequencies: FrequencyTable) -> Result<Self> {
        if frequencies.num_cols() != prior_povm.len() {
            return Err(Error::InvalidParameter(format!(
                "frequency table has {} columns but the prior POVM has {} elements",
                frequencies.num_cols(),
                prior_povm.len()
            )));
        }
        Ok(Self {
            prior_povm,
            frequencies,
        })
    }

    /// Like [`MlseProblem::new`] with an explicit number of designed outcomes,
    /// which must equal the number of hypotheses.
    pub fn with_outcomes(prior_povm: PovmSet, frequencies: FrequencyTable, num_outcomes: usize) -> Result<Self> {
        let states = frequencies.num_rows();
        if num_outcomes > states {
            return Err(Error::Unsupported(format!(
                "{num_outcomes} designed outcomes for {states} hypotheses: more outcomes than \
                 hypotheses leads toward unambiguous discrimination, which is not implemented"
            )));
        }
        if num_outcomes < states {
            return Err(Error::Unsupported(format!(
                "{num_outcomes} designed outcomes for {states} hypotheses: one outcome per hypothesis is required"
            )));
        }
        Self::new(prior_povm, frequencies)
    }

    pub fn dim(&self) -> usize {
        self.prior_povm.dim()
    }

    pub fn num_states(&self) -> usize {
        self.frequencies.num_rows()
    }

    pub fn num_outcomes(&self) -> usize {
        self.num_states()
    }

    pub fn prior_povm(&self) -> &PovmSet {
        &self.prior_povm
    }

    pub fn frequencies(&self) -> &FrequencyTable {
        &self.frequencies
    }

    /// Same problem with hypotheses relabeled: row `i` of the result is row
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.num_states())?;
        let rows = perm.iter().map(|&p| self.frequencies.rows[p].clone()).collect();
        Ok(Self {
            prior_povm: self.prior_povm.clone(),
            frequencies: FrequencyTable { rows },
        })
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation of 0..{n}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlseOptions {
    /// Stop once the largest Frobenius step between successive iterates is below this.
    pub tol: f64,
    pub max_iter: usize,
    pub prob_floor: f64,
    pub pinv_threshold: f64,
    /// `new = (1 − γ)·old + γ·update`; 1 applies the extremal map as is.
    pub damping: f64,
}

impl Default for MlseOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
            prob_floor: DEFAULT_PROB_FLOOR,
            pinv_threshold: DEFAULT_PINV_THRESHOLD,
            damping: DEFAULT_DAMPING,
        }
    }
}

impl MlseOptions {
    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(self.prob_floor > 0.0 && self.prob_floor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prob_floor must lie in (0, 1), got {}",
                self.prob_floor
            )));
        }
        if !(self.pinv_threshold >= 0.0 && self.pinv_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "pinv_threshold must lie in [0, 1), got {}",
                self.pinv_threshold
            )));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

/// Order-independent sum of scalars.
fn canonical_scalar_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// Probabilities consumed by the likelihood and the kernels, already floored.
struct Probabilities {
    /// `P_ii = Tr[ρᵢ Πᵢ]`
    diag: Vec<f64>,
    /// `p_ik = Tr[ρᵢ πₖ]`
    prior: Vec<Vec<f64>>,
    /// First positively weighted probability that had to be floored.
    floored: Option<String>,
}

fn probabilities(
    states: &[DensityMatrix],
    povm: &PovmSet,
    prior_povm: &PovmSet,
    frequencies: &FrequencyTable,
    floor: f64,
) -> Result<Probabilities> {
    let mut floored = None;
    let mut note = |what: String| {
        if floored.is_none() {
            floored = Some(what);
        }
    };
    let mut diag = Vec::with_capacity(states.len());
    let mut prior = Vec::with_capacity(states.len());
    for (i, rho) in states.iter().enumerate() {
        let raw = qmat::trace_product(rho.op(), &povm.elements()[i])?;
        if raw < floor {
            note(format!("P[{i}][{i}] = {raw:e}"));
        }
        diag.push(raw.max(floor));
        let mut row = Vec::with_capacity(prior_povm.len());
        for (k, pi) in prior_povm.elements().iter().enumerate() {
            let raw = qmat::trace_product(rho.op(), pi)?;
            if raw < floor && frequencies.row(i)[k] > 0.0 {
                note(format!("p[{i}][{k}] = {raw:e} with f = {}", frequencies.row(i)[k]));
            }
            row.push(raw.max(floor));
        }
        prior.push(row);
    }
    Ok(Probabilities { diag, prior, floored })
}

fn loglik_from(probs: &Probabilities, frequencies: &FrequencyTable) -> f64 {
    let per_hypothesis = probs
        .diag
        .iter()
        .zip(&probs.prior)
        .zip(frequencies.rows())
        .map(|((pii, p_row), f_row)| {
            pii.ln()
                + p_row
                    .iter()
                    .zip(f_row)
                    .filter(|(_, f)| **f > 0.0)
                    .map(|(p, f)| f * p.ln())
                    .sum::<f64>()
        })
        .collect();
    canonical_scalar_sum(per_hypothesis)
}

fn check_shapes(states: &[DensityMatrix], povm: &PovmSet, prior_povm: &PovmSet, frequencies: &FrequencyTable) -> Result<()> {
    if states.len() != povm.len() || states.len() != frequencies.num_rows() {
        return Err(Error::InvalidParameter(format!(
            "{} states, {} designed outcomes, {} frequency rows",
            states.len(),
            povm.len(),
            frequencies.num_rows()
        )));
    }
    if frequencies.num_cols() != prior_povm.len() {
        return Err(Error::InvalidParameter(format!(
            "{} frequency columns for {} prior outcomes",
            frequencies.num_cols(),
            prior_povm.len()
        )));
    }
    let dim = prior_povm.dim();
    for d in states.iter().map(DensityMatrix::dim).chain([povm.dim()]) {
        if d != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: d });
        }
    }
    Ok(())
}

/// `Σᵢ ln Pᵢᵢ + Σᵢₖ fᵢₖ ln pᵢₖ`. Terms with `fᵢₖ = 0` are skipped; any other
/// probability below [`DEFAULT_PROB_FLOOR`] is a degenerate likelihood.
pub fn log_likelihood(
    states: &[DensityMatrix],
    povm: &PovmSet,
    prior_povm: &PovmSet,
    frequencies: &FrequencyTable,
) -> Result<f64> {
    check_shapes(states, povm, prior_povm, frequencies)?;
    let probs = probabilities(states, povm, prior_povm, frequencies, DEFAULT_PROB_FLOOR)?;
    if let Some(detail) = probs.floored {
        return Err(Error::DegenerateLikelihood { iteration: 0, detail });
    }
    Ok(loglik_from(&probs, frequencies))
}

fn r_kernel(povm_element: &HermitianOperator, p_ii: f64, prior_povm: &PovmSet, f_row: &[f64], p_row: &[f64]) -> HermitianOperator {
    let mut r = povm_element.scale(1.0 / p_ii);
    for ((pi, f), p) in prior_povm.elements().iter().zip(f_row).zip(p_row) {
        if *f > 0.0 {
            r = r.add(&pi.scale(f / p)).expect("prior POVM dimension checked");
        }
    }
    r
}

/// State kernel `Rᵢ = Πᵢ / Pᵢᵢ + Σₖ (fᵢₖ / pᵢₖ) πₖ`, skipping outcomes with `fᵢₖ = 0`.
pub fn compute_r(
    index: usize,
    state: &DensityMatrix,
    povm_element: &HermitianOperator,
    prior_povm: &PovmSet,
    frequencies_row: &[f64],
) -> Result<HermitianOperator> {
    if frequencies_row.len() != prior_povm.len() {
        return Err(Error::InvalidParameter(format!(
            "{} frequencies for {} prior outcomes",
            frequencies_row.len(),
            prior_povm.len()
        )));
    }
    let degenerate = |detail: String| Error::DegenerateLikelihood { iteration: 0, detail };
    let p_ii = qmat::trace_product(state.op(), povm_element)?;
    if p_ii < DEFAULT_PROB_FLOOR {
        return Err(degenerate(format!("P[{index}][{index}] = {p_ii:e}")));
    }
    let mut p_row = Vec::with_capacity(prior_povm.len());
    for (k, pi) in prior_povm.elements().iter().enumerate() {
        let p = qmat::trace_product(state.op(), pi)?;
        if frequencies_row[k] > 0.0 && p < DEFAULT_PROB_FLOOR {
            return Err(degenerate(format!("p[{index}][{k}] = {p:e}")));
        }
        p_row.push(p);
    }
    Ok(r_kernel(povm_element, p_ii, prior_povm, frequencies_row, &p_row))
}

/// POVM kernel `Sⱼ = ρⱼ / Pⱼⱼ`.
pub fn compute_s(index: usize, state: &DensityMatrix, p_jj: f64) -> Result<HermitianOperator> {
    if p_jj.is_nan() || p_jj < DEFAULT_PROB_FLOOR {
        return Err(Error::DegenerateLikelihood {
            iteration: 0,
            detail: format!("P[{index}][{index}] = {p_jj:e}"),
        });
    }
    Ok(state.op().scale(1.0 / p_jj))
}

/// Right-hand sides of the extremal equations evaluated at one iterate.
#[derive(Clone, Debug)]
struct ExtremalMap {
    states_next: Vec<HermitianOperator>,
    povm_next: Vec<HermitianOperator>,
    mu: Vec<f64>,
    lambda: HermitianOperator,
    loglik: f64,
    floored: Option<String>,
}

fn extremal_map(
    states: &[DensityMatrix],
    povm: &PovmSet,
    problem: &MlseProblem,
    options: &MlseOptions,
    iteration: usize,
) -> Result<ExtremalMap> {
    let prior = problem.prior_povm();
    let freqs = problem.frequencies();
    let probs = probabilities(states, povm, prior, freqs, options.prob_floor)?;
    let loglik = loglik_from(&probs, freqs);
    let degenerate = |detail: String| Error::DegenerateLikelihood { iteration, detail };

    let mut states_next = Vec::with_capacity(states.len());
    let mut mu = Vec::with_capacity(states.len());
    for (i, rho) in states.iter().enumerate() {
        let r = r_kernel(&povm.elements()[i], probs.diag[i], prior, freqs.row(i), &probs.prior[i]);
        let t = rho.op().conjugate_by(&r)?;
        let mu_sq = t.trace();
        if !(mu_sq > 0.0 && mu_sq.is_finite()) {
            return Err(degenerate(format!("Tr[R ρ R] = {mu_sq:e} for state {i}")));
        }
        states_next.push(t.scale(1.0 / mu_sq));
        mu.push(mu_sq.sqrt());
    }

    let conjugated: Vec<HermitianOperator> = states
        .iter()
        .zip(povm.elements())
        .zip(&probs.diag)
        .map(|((rho, pi), p)| pi.conjugate_by(&rho.op().scale(1.0 / p)))
        .collect::<Result<_>>()?;
    let lambda_sq = qmat::canonical_sum(&conjugated)?;
    let lambda = qmat::hermitian_sqrt(&lambda_sq)?;
    let lambda_inv = qmat::pseudo_inverse(&lambda, options.pinv_threshold)?;
    let mut povm_next: Vec<HermitianOperator> = conjugated
        .iter()
        .map(|q| q.conjugate_by(&lambda_inv))
        .collect::<Result<_>>()?;
    // On the kernel of λ every completion is equally likely; share it evenly.
    let deficit = HermitianOperator::identity(problem.dim()).sub(&qmat::canonical_sum(&povm_next)?)?;
    let share = deficit.scale(1.0 / povm_next.len() as f64);
    for pi in &mut povm_next {
        *pi = pi.add(&share)?;
    }

    Ok(ExtremalMap {
        states_next,
        povm_next,
        mu,
        lambda,
        loglik,
        floored: probs.floored,
    })
}

/// One iterate of the fixed-point scheme together with the Lagrange
/// multipliers and log-likelihood evaluated at it.
#[derive(Clone, Debug)]
pub struct MlseIterationState {
    states: Vec<DensityMatrix>,
    povm: PovmSet,
    iteration: usize,
    map: ExtremalMap,
}

impl MlseIterationState {
    /// Evaluates the multipliers at the given iterate. The state stays bound
    /// to `problem` and `options`.
    pub fn new(
        states: Vec<DensityMatrix>,
        povm: PovmSet,
        problem: &MlseProblem,
        options: &MlseOptions,
        iteration: usize,
    ) -> Result<Self> {
        check_shapes(&states, &povm, problem.prior_povm(), problem.frequencies())?;
        let map = extremal_map(&states, &povm, problem, options, iteration)?;
        Ok(Self {
            states,
            povm,
            iteration,
            map,
        })
    }

    /// Maximally mixed states and the uniform POVM `I/J`.
    pub fn initial(problem: &MlseProblem, options: &MlseOptions) -> Result<Self> {
        let states = vec![DensityMatrix::maximally_mixed(problem.dim()); problem.num_states()];
        let povm = PovmSet::uniform(problem.dim(), problem.num_outcomes());
        Self::new(states, povm, problem, options, 0)
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    pub fn povm(&self) -> &PovmSet {
        &self.povm
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// `μᵢ = (Tr[Rᵢ ρᵢ Rᵢ])^½`
    pub fn mu(&self) -> &[f64] {
        &self.map.mu
    }

    /// `λ = (Σⱼ Sⱼ Πⱼ Sⱼ)^½`
    pub fn lambda(&self) -> &HermitianOperator {
        &self.map.lambda
    }

    pub fn loglik(&self) -> f64 {
        self.map.loglik
    }

    /// Largest Frobenius distance between this iterate and `other`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        let mut d: f64 = 0.0;
        for (a, b) in self.states.iter().zip(&other.states) {
            d = d.max(a.op().distance(b.op())?);
        }
        for (a, b) in self.povm.elements().iter().zip(other.povm.elements()) {
            d = d.max(a.distance(b)?);
        }
        Ok(d)
    }

    /// Relabels hypotheses: entry `i` of the result is entry `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize], problem: &MlseProblem, options: &MlseOptions) -> Result<Self> {
        check_permutation(perm, self.states.len())?;
        let states = perm.iter().map(|&p| self.states[p].clone()).collect();
        let elements = perm.iter().map(|&p| self.povm.elements()[p].clone()).collect();
        let labels = perm.iter().map(|&p| self.povm.labels()[p].clone()).collect();
        Self::new(states, PovmSet::new_unchecked(elements, labels), problem, options, self.iteration)
    }
}

fn blend(old: &HermitianOperator, update: &HermitianOperator, damping: f64) -> HermitianOperator {
    if damping == 1.0 {
        update.clone()
    } else {
        old.scale(1.0 - damping)
            .add(&update.scale(damping))
            .expect("same dimension")
    }
}

/// Applies the extremal-equation map once to every state and POVM element.
pub fn iterate_once(state: &MlseIterationState, problem: &MlseProblem, options: &MlseOptions) -> Result<MlseIterationState> {
    let map = &state.map;
    let states = state
        .states
        .iter()
        .zip(&map.states_next)
        .map(|(old, new)| DensityMatrix::new_unchecked(blend(old.op(), new, options.damping)))
        .collect();
    let elements = state
        .povm
        .elements()
        .iter()
        .zip(&map.povm_next)
        .map(|(old, new)| blend(old, new, options.damping))
        .collect();
    let povm = PovmSet::new_unchecked(elements, state.povm.labels().to_vec());
    MlseIterationState::new(states, povm, problem, options, state.iteration + 1)
}

/// Largest Frobenius violation of the extremal equations at `state`.
pub fn fixed_point_residual(state: &MlseIterationState, problem: &MlseProblem, options: &MlseOptions) -> Result<f64> {
    let map = extremal_map(&state.states, &state.povm, problem, options, state.iteration)?;
    let mut r: f64 = 0.0;
    for (rho, next) in state.states.iter().zip(&map.states_next) {
        r = r.max(rho.op().distance(next)?);
    }
    for (pi, next) in state.povm.elements().iter().zip(&map.povm_next) {
        r = r.max(pi.distance(next)?);
    }
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct MlseResult {
    pub est_states: Vec<DensityMatrix>,
    pub opt_povm: PovmSet,
    /// Log-likelihood of every iterate, starting with the initial one.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    /// Final step size; the quantity compared against `tol`.
    pub residual: f64,
    pub converged: bool,
}

impl MlseResult {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds the initial iterate")
    }
}

/// Iterates from the maximally mixed start until the step falls below `tol`
/// or `max_iter` iterations have run.
pub fn run_mlse(problem: &MlseProblem, options: &MlseOptions) -> Result<MlseResult> {
    options.validate()?;
    let start = MlseIterationState::initial(problem, options)?;
    run_mlse_from(start, problem, options)
}

/// Iterates from an arbitrary starting point (multi-start diagnostics).
pub fn run_mlse_from(start: MlseIterationState, problem: &MlseProblem, options: &MlseOptions) -> Result<MlseResult> {
    options.validate()?;
    let mut state = start;
    let mut trace = vec![state.loglik()];
    let mut floored_streak = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..options.max_iter {
        match &state.map.floored {
            Some(detail) => {
                floored_streak += 1;
                if floored_streak > MAX_FLOORED_ITERATIONS {
                    return Err(Error::DegenerateLikelihood {
                        iteration: state.iteration,
                        detail: detail.clone(),
                    });
                }
            }
            None => floored_streak = 0,
        }
        let next = iterate_once(&state, problem, options)?;
        residual = next.distance(&state)?;
        trace.push(next.loglik());
        state = next;
        if residual < options.tol {
            converged = true;
            break;
        }
    }
    Ok(MlseResult {
        est_states: state.states,
        opt_povm: state.povm,
        loglik_trace: trace,
        iterations: state.iteration,
        residual,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::helstrom;
    use crate::states::{born_table, make_prior_povm, make_state, Axis, Sign, StateParams};
    use std::f64::consts::{FRAC_PI_4, LN_2};

    fn quarter_prior() -> PovmSet {
        PovmSet::uniform(2, 4)
    }

    fn uniform_problem() -> MlseProblem {
        MlseProblem::new(quarter_prior(), FrequencyTable::new(vec![vec![0.25; 4]; 2]).unwrap()).unwrap()
    }

    fn exact_problem(states: &[DensityMatrix], settings: &[Axis]) -> MlseProblem {
        let prior = make_prior_povm(settings).unwrap();
        let f = born_table(states, &prior).unwrap();
        MlseProblem::new(prior, FrequencyTable::new(f).unwrap()).unwrap()
    }

    fn family(alpha: f64, d1: f64, d2: f64) -> Vec<DensityMatrix> {
        vec![
            make_state(StateParams::new(alpha, d1, Sign::Plus).unwrap()).unwrap(),
            make_state(StateParams::new(alpha, d2, Sign::Minus).unwrap()).unwrap(),
        ]
    }

    #[test]
    fn frequency_table_validation() {
        let err = FrequencyTable::new(vec![vec![0.5, 0.5], vec![0.5, 0.3]]).unwrap_err();
        assert!(matches!(err, Error::InvalidFrequencies { row: 1, .. }));
        assert!(FrequencyTable::new(vec![vec![1.2, -0.2]]).is_err());
        assert!(FrequencyTable::new(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
    }

    #[test]
    fn more_outcomes_than_hypotheses_is_unsupported() {
        let f = FrequencyTable::new(vec![vec![0.25; 4]; 2]).unwrap();
        let err = MlseProblem::with_outcomes(quarter_prior(), f, 3).unwrap_err();
        assert!(matches!(err, Error::Unsupported(ref m) if m.contains("unambiguous")));
    }

    #[test]
    fn log_likelihood_examples() {
        let mixed = vec![DensityMatrix::maximally_mixed(2); 2];
        let povm = PovmSet::uniform(2, 2);
        let problem = uniform_problem();
        let ll = log_likelihood(&mixed, &povm, problem.prior_povm(), problem.frequencies()).unwrap();
        assert!((ll + 6.0 * LN_2).abs() < 1e-12);
        assert!((ll + 4.158883).abs() < 1e-6);

        let z0 = DensityMatrix::new(HermitianOperator::diag(&[1.0, 0.0])).unwrap();
        let z1 = DensityMatrix::new(HermitianOperator::diag(&[0.0, 1.0])).unwrap();
        let zs = vec![z0, z1];
        let prior = make_prior_povm(&[Axis::Z]).unwrap();
        let f = FrequencyTable::new(born_table(&zs, &prior).unwrap()).unwrap();
        let ll = log_likelihood(&zs, &prior, &prior, &f).unwrap();
        assert_eq!(ll, 0.0);

        // pure pair at alpha = pi/4 with the x-projector design, scalar summation
        let states = family(FRAC_PI_4, 1.0, 1.0);
        let design = make_prior_povm(&[Axis::X]).unwrap();
        let prior = make_prior_povm(&[Axis::X, Axis::Y]).unwrap();
        let f = FrequencyTable::new(born_table(&states, &prior).unwrap()).unwrap();
        let ll = log_likelihood(&states, &design, &prior, &f).unwrap();
        // P_ii = 1; p rows are (1/2, 0, 1/4, 1/4) and (0, 1/2, 1/4, 1/4)
        let scalar = 2.0 * (0.5 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
        assert!((ll - scalar).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_degenerate() {
        let z0 = DensityMatrix::new(HermitianOperator::diag(&[1.0, 0.0])).unwrap();
        let prior = make_prior_povm(&[Axis::Z]).unwrap();
        let f = FrequencyTable::new(vec![vec![0.5, 0.5]]).unwrap();
        let povm = PovmSet::uniform(2, 1);
        assert!(matches!(
            log_likelihood(&[z0], &povm, &prior, &f),
            Err(Error::DegenerateLikelihood { .. })
        ));
    }

    #[test]
    fn r_kernel_examples() {
        let mixed = DensityMatrix::maximally_mixed(2);
        let half = HermitianOperator::identity(2).scale(0.5);
        let r = compute_r(0, &mixed, &half, &quarter_prior(), &[0.25; 4]).unwrap();
        assert!(r.distance(&HermitianOperator::identity(2).scale(2.0)).unwrap() < 1e-14);

        let r = compute_r(0, &mixed, &half, &quarter_prior(), &[0.0; 4]).unwrap();
        assert!(r.distance(&HermitianOperator::identity(2)).unwrap() < 1e-14);

        let rho = make_state(StateParams::new(0.3, 0.6, Sign::Minus).unwrap()).unwrap();
        let prior = make_prior_povm(&[Axis::X, Axis::Y, Axis::Z]).unwrap();
        let el = crate::states::pauli_projector(Axis::Y, Sign::Plus);
        let r = compute_r(1, &rho, &el, &prior, &[0.1, 0.2, 0.3, 0.1, 0.25, 0.05]).unwrap();
        assert!(HermitianOperator::from_matrix(r.matrix().clone()).is_ok());
    }

    #[test]
    fn s_kernel_examples() {
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!(compute_s(0, &mixed, 0.5).unwrap().distance(&HermitianOperator::identity(2)).unwrap() < 1e-15);
        let z0 = DensityMatrix::new(HermitianOperator::diag(&[1.0, 0.0])).unwrap();
        assert_eq!(compute_s(0, &z0, 1.0).unwrap(), *z0.op());
        let rho = make_state(StateParams::new(std::f64::consts::PI / 6.0, 0.9, Sign::Plus).unwrap()).unwrap();
        let s = compute_s(0, &rho, 0.25).unwrap();
        assert!(s.distance(&rho.op().scale(4.0)).unwrap() < 1e-15);
        assert!(compute_s(0, &rho, 0.0).is_err());
    }

    #[test]
    fn uniform_start_is_extremal_for_uninformative_data() {
        let problem = uniform_problem();
        let opts = MlseOptions::default();
        let s = MlseIterationState::initial(&problem, &opts).unwrap();
        assert!(fixed_point_residual(&s, &problem, &opts).unwrap() < 1e-12);
        assert!(s.mu().iter().all(|&m| (m - 2.0).abs() < 1e-14));
        assert!(s.lambda().distance(&HermitianOperator::identity(2)).unwrap() < 1e-14);
    }

    #[test]
    fn uniform_start_is_not_extremal_in_general() {
        let problem = exact_problem(&family(0.5, 0.9, 0.9), &[Axis::X, Axis::Y]);
        let opts = MlseOptions::default();
        let s = MlseIterationState::initial(&problem, &opts).unwrap();
        assert!(fixed_point_residual(&s, &problem, &opts).unwrap() > 1e-3);
    }

    #[test]
    fn single_step_preserves_normalization() {
        let problem = exact_problem(&family(0.35, 0.7, 0.4), &[Axis::X, Axis::Y, Axis::Z]);
        let opts = MlseOptions::default();
        let mut s = MlseIterationState::initial(&problem, &opts).unwrap();
        for _ in 0..20 {
            s = iterate_once(&s, &problem, &opts).unwrap();
            for rho in s.states() {
                assert!((rho.op().trace() - 1.0).abs() < 1e-12);
            }
            assert!(s.povm().completeness_gap() < 1e-10);
        }
    }

    #[test]
    fn converged_state_is_a_fixed_point() {
        let problem = exact_problem(&family(0.5, 1.0, 0.75), &[Axis::X, Axis::Y, Axis::Z]);
        let opts = MlseOptions::default();
        let res = run_mlse(&problem, &opts).unwrap();
        assert!(res.converged, "residual {}", res.residual);
        let s = MlseIterationState::new(res.est_states.clone(), res.opt_povm.clone(), &problem, &opts, 0).unwrap();
        assert!(fixed_point_residual(&s, &problem, &opts).unwrap() < opts.tol);
        let again = iterate_once(&s, &problem, &opts).unwrap();
        assert!(again.distance(&s).unwrap() < 1e-12);
    }

    #[test]
    fn single_hypothesis_reduces_to_state_estimation() {
        // I = J = 1 forces Π = I; the state update is R ρ R with R = I + Σ (f/p) π
        let truth = DensityMatrix::new(
            HermitianOperator::from_row_major(2, &[(0.7, 0.0), (0.1, -0.15), (0.1, 0.15), (0.3, 0.0)]).unwrap(),
        )
        .unwrap();
        let prior = make_prior_povm(&[Axis::X, Axis::Y, Axis::Z]).unwrap();
        let f_row = vec![0.22, 0.11, 0.14, 0.2, 0.2, 0.13];
        let problem = MlseProblem::new(prior.clone(), FrequencyTable::new(vec![f_row.clone()]).unwrap()).unwrap();
        let opts = MlseOptions {
            damping: 1.0,
            ..MlseOptions::default()
        };
        let mut s = MlseIterationState::new(vec![truth.clone()], PovmSet::uniform(2, 1), &problem, &opts, 0).unwrap();
        let mut rho = truth.op().clone();
        for _ in 0..5 {
            let mut r = HermitianOperator::identity(2);
            for (pi, f) in prior.elements().iter().zip(&f_row) {
                let p = qmat::trace_product(&rho, pi).unwrap();
                r = r.add(&pi.scale(f / p)).unwrap();
            }
            let t = rho.conjugate_by(&r).unwrap();
            rho = t.scale(1.0 / t.trace());
            s = iterate_once(&s, &problem, &opts).unwrap();
            assert!(s.states()[0].op().distance(&rho).unwrap() < 1e-12);
            assert!(s.povm().elements()[0].distance(&HermitianOperator::identity(2)).unwrap() < 1e-10);
        }
    }

    #[test]
    fn orthogonal_states_are_separated() {
        let zs = vec![
            DensityMatrix::new(HermitianOperator::diag(&[1.0, 0.0])).unwrap(),
            DensityMatrix::new(HermitianOperator::diag(&[0.0, 1.0])).unwrap(),
        ];
        let problem = exact_problem(&zs, &[Axis::Z]);
        let res = run_mlse(&problem, &MlseOptions::default()).unwrap();
        let er = helstrom::error_rate(&res.opt_povm, &zs[0], &zs[1]).unwrap();
        assert!(er < 1e-6, "er = {er}");
        assert!(res.opt_povm.elements()[0].distance(&HermitianOperator::diag(&[1.0, 0.0])).unwrap() < 1e-6);
    }

    #[test]
    fn identical_states_give_chance() {
        let rho = make_state(StateParams::new(0.4, 0.6, Sign::Plus).unwrap()).unwrap();
        let states = vec![rho.clone(), rho.clone()];
        let problem = exact_problem(&states, &[Axis::X, Axis::Y, Axis::Z]);
        let res = run_mlse(&problem, &MlseOptions::default()).unwrap();
        let er = helstrom::error_rate(&res.opt_povm, &rho, &rho).unwrap();
        assert!((er - 0.5).abs() < 1e-6);
    }

    #[test]
    fn povm_stays_complete_when_lambda_is_singular() {
        let up = DensityMatrix::new(HermitianOperator::diag(&[1.0, 0.0])).unwrap();
        let states = vec![up.clone(), up.clone()];
        let calib = crate::calibsim::CalibrationConfig {
            true_states: states,
            settings: vec![Axis::X, Axis::Y, Axis::Z],
            shots: crate::calibsim::Shots::Finite(10),
            seed: 91,
        };
        let freqs = crate::calibsim::sample_frequencies(&calib).unwrap();
        let problem = MlseProblem::new(calib.prior_povm().unwrap(), freqs).unwrap();
        let res = run_mlse(&problem, &MlseOptions::default()).unwrap();
        assert!(res.opt_povm.completeness_gap() < 1e-9);
        let er = helstrom::error_rate(&res.opt_povm, &up, &up).unwrap();
        assert!((er - 0.5).abs() < 1e-9);
    }

    #[test]
    fn damping_reaches_the_same_fixed_point() {
        let problem = exact_problem(&family(0.6, 1.0, 0.75), &[Axis::X, Axis::Y, Axis::Z]);
        let plain = run_mlse(&problem, &MlseOptions::default()).unwrap();
        let damped = run_mlse(
            &problem,
            &MlseOptions {
                damping: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(plain.converged && damped.converged);
        for (a, b) in plain.opt_povm.elements().iter().zip(damped.opt_povm.elements()) {
            assert!(a.distance(b).unwrap() < 1e-9);
        }
    }

    #[test]
    fn options_are_validated() {
        let problem = uniform_problem();
        for bad in [
            MlseOptions { tol: 0.0, ..Default::default() },
            MlseOptions { max_iter: 0, ..Default::default() },
            MlseOptions { damping: 0.0, ..Default::default() },
            MlseOptions { damping: 1.5, ..Default::default() },
            MlseOptions { prob_floor: 0.0, ..Default::default() },
        ] {
            assert!(matches!(run_mlse(&problem, &bad), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let problem = exact_problem(&family(0.5, 0.9, 0.9), &[Axis::X, Axis::Y]);
        let res = run_mlse(
            &problem,
            &MlseOptions {
                max_iter: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
        assert_eq!(res.loglik_trace.len(), 4);
    }
}
