//! Density matrices, POVMs, the two-parameter qubit family and Pauli
//! projective measurements.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{self, HermitianOperator, C64, PSD_TOL};

/// Trace tolerance for a validated density matrix.
pub const TRACE_TOL: f64 = 1e-12;
/// Frobenius tolerance for `sum(elements) == I` on a validated POVM.
pub const COMPLETENESS_TOL: f64 = 1e-10;

/// A positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: HermitianOperator,
}

impl DensityMatrix {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidTrace(tr));
        }
        let min = op.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::NotPsd(min));
        }
        Ok(Self { op })
    }

    /// Skips validation; callers guarantee trace and positivity.
    pub(crate) fn new_unchecked(op: HermitianOperator) -> Self {
        Self { op }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            op: HermitianOperator::identity(dim).scale(1.0 / dim as f64),
        }
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// `Tr[rho^2]`.
    pub fn purity(&self) -> f64 {
        qmat::trace_product(&self.op, &self.op).expect("same operator")
    }
}

impl AsRef<HermitianOperator> for DensityMatrix {
    fn as_ref(&self) -> &HermitianOperator {
        &self.op
    }
}

/// A complete set of positive operators with one label per outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct PovmSet {
    elements: Vec<HermitianOperator>,
    labels: Vec<String>,
}

impl PovmSet {
    pub fn new(elements: Vec<HermitianOperator>, labels: Vec<String>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidPovm("no elements".into()));
        }
        if labels.len() != elements.len() {
            return Err(Error::InvalidPovm(format!(
                "{} labels for {} elements",
                labels.len(),
                elements.len()
            )));
        }
        let dim = elements[0].dim();
        let mut total = HermitianOperator::zeros(dim);
        for (k, e) in elements.iter().enumerate() {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
            let min = e.min_eigenvalue();
            if min < -PSD_TOL {
                return Err(Error::InvalidPovm(format!(
                    "element {k} ({}) is not positive semidefinite (min eigenvalue {min:e})",
                    labels[k]
                )));
            }
            total = total.add(e)?;
        }
        let gap = total.distance(&HermitianOperator::identity(dim))?;
        if gap > COMPLETENESS_TOL {
            return Err(Error::InvalidPovm(format!(
                "completeness check failed: |sum of elements - I| = {gap:e}"
            )));
        }
        Ok(Self { elements, labels })
    }

    /// Labels the elements `0, 1, ...`.
    pub fn unlabeled(elements: Vec<HermitianOperator>) -> Result<Self> {
        let labels = (0..elements.len()).map(|k| k.to_string()).collect();
        Self::new(elements, labels)
    }

    pub(crate) fn new_unchecked(elements: Vec<HermitianOperator>, labels: Vec<String>) -> Self {
        Self { elements, labels }
    }

    /// `count` copies of `I / count`.
    pub fn uniform(dim: usize, count: usize) -> Self {
        let e = HermitianOperator::identity(dim).scale(1.0 / count as f64);
        Self {
            elements: vec![e; count],
            labels: (0..count).map(|k| k.to_string()).collect(),
        }
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    /// Frobenius distance of `sum(elements)` from the identity.
    pub fn completeness_gap(&self) -> f64 {
        let total = self
            .elements
            .iter()
            .fold(HermitianOperator::zeros(self.dim()), |acc, e| acc.add(e).expect("same dim"));
        total
            .distance(&HermitianOperator::identity(self.dim()))
            .expect("same dim")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "+1" | "plus" => Ok(Sign::Plus),
            "-" | "-1" | "minus" => Ok(Sign::Minus),
            _ => Err(Error::InvalidParameter(format!("sign must be + or -, got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidParameter(format!("unknown axis {other:?}"))),
        }
    }
}

/// Parses a comma-separated axis list such as `x,y,z`.
pub fn parse_axes(s: &str) -> Result<Vec<Axis>> {
    s.split(',').map(str::parse).collect()
}

/// Parameters of the real qubit family
/// `[[cos²α, ±d·cosα·sinα], [±d·cosα·sinα, sin²α]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateParams {
    pub alpha: f64,
    pub d: f64,
    pub sign: Sign,
}

impl StateParams {
    pub fn new(alpha: f64, d: f64, sign: Sign) -> Result<Self> {
        let p = Self { alpha, d, sign };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=std::f64::consts::FRAC_PI_4).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {} outside [0, pi/4]",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.d) {
            return Err(Error::InvalidParameter(format!("d = {} outside [0, 1]", self.d)));
        }
        Ok(())
    }
}

pub fn make_state(params: StateParams) -> Result<DensityMatrix> {
    params.validate()?;
    let (s, c) = params.alpha.sin_cos();
    let off = params.sign.value() * params.d * c * s;
    let op = HermitianOperator::from_real_rows(&[&[c * c, off], &[off, s * s]])?;
    Ok(DensityMatrix::new_unchecked(op))
}

/// Projector onto the `direction` eigenstate of the Pauli operator along `axis`.
pub fn pauli_projector(axis: Axis, direction: Sign) -> HermitianOperator {
    let s = direction.value();
    let h = 0.5;
    let (re, im) = match axis {
        Axis::X => (s * h, 0.0),
        Axis::Y => (0.0, -s * h),
        Axis::Z => (0.0, 0.0),
    };
    let (d0, d1) = match (axis, direction) {
        (Axis::Z, Sign::Plus) => (1.0, 0.0),
        (Axis::Z, Sign::Minus) => (0.0, 1.0),
        _ => (h, h),
    };
    HermitianOperator::from_row_major(2, &[(d0, 0.0), (re, im), (re, -im), (d1, 0.0)])
        .expect("Pauli projector is Hermitian")
}

/// The combined prior POVM built from `settings.len()` two-outcome projective
/// settings. Every projector is scaled by `1/M` so the whole set is complete.
pub fn make_prior_povm(settings: &[Axis]) -> Result<PovmSet> {
    if settings.is_empty() {
        return Err(Error::InvalidParameter("no measurement settings".into()));
    }
    for (k, a) in settings.iter().enumerate() {
        if settings[..k].contains(a) {
            return Err(Error::InvalidParameter(format!("duplicate setting {a}")));
        }
    }
    let w = 1.0 / settings.len() as f64;
    let mut elements = Vec::with_capacity(2 * settings.len());
    let mut labels = Vec::with_capacity(2 * settings.len());
    for &axis in settings {
        for (dir, tag) in [(Sign::Plus, '+'), (Sign::Minus, '-')] {
            elements.push(pauli_projector(axis, dir).scale(w));
            labels.push(format!("{tag}{axis}"));
        }
    }
    PovmSet::new(elements, labels)
}

/// Born-rule table: entry `(i, k) = Tr[states[i] · povm[k]]`, clamped to `[0, 1]`.
pub fn born_table<S: AsRef<HermitianOperator>>(states: &[S], povm: &PovmSet) -> Result<Vec<Vec<f64>>> {
    states
        .iter()
        .map(|rho| {
            povm.elements()
                .iter()
                .map(|e| Ok(qmat::trace_product(rho.as_ref(), e)?.clamp(0.0, 1.0)))
                .collect()
        })
        .collect()
}

/// Bloch vector `(Tr[ρσx], Tr[ρσy], Tr[ρσz])` of a qubit operator.
pub fn bloch_vector(rho: &HermitianOperator) -> Result<[f64; 3]> {
    if rho.dim() != 2 {
        return Err(Error::UnsupportedDimension(rho.dim()));
    }
    let off: C64 = rho.get(1, 0);
    Ok([2.0 * off.re, 2.0 * off.im, (rho.get(0, 0) - rho.get(1, 1)).re])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn rows(op: &HermitianOperator) -> Vec<(f64, f64)> {
        op.to_row_major()
    }

    fn assert_op(op: &HermitianOperator, want: &[(f64, f64)], tol: f64) {
        for (got, w) in rows(op).iter().zip(want) {
            assert!((got.0 - w.0).abs() < tol && (got.1 - w.1).abs() < tol, "{op:?} vs {want:?}");
        }
    }

    #[test]
    fn family_examples() {
        let r = make_state(StateParams::new(0.0, 0.37, Sign::Plus).unwrap()).unwrap();
        assert_op(r.op(), &[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)], 1e-15);

        let r = make_state(StateParams::new(FRAC_PI_4, 1.0, Sign::Plus).unwrap()).unwrap();
        assert_op(r.op(), &[(0.5, 0.0), (0.5, 0.0), (0.5, 0.0), (0.5, 0.0)], 1e-15);

        let r = make_state(StateParams::new(PI / 6.0, 0.9, Sign::Minus).unwrap()).unwrap();
        let off = -0.9 * 3f64.sqrt() / 4.0;
        assert!((off + 0.389711).abs() < 1e-6);
        assert_op(r.op(), &[(0.75, 0.0), (off, 0.0), (off, 0.0), (0.25, 0.0)], 1e-14);
    }

    #[test]
    fn family_rejects_out_of_range() {
        assert!(StateParams::new(-0.1, 0.5, Sign::Plus).is_err());
        assert!(StateParams::new(0.9, 0.5, Sign::Plus).is_err());
        assert!(StateParams::new(0.3, 1.5, Sign::Plus).is_err());
        let bad = StateParams {
            alpha: 0.3,
            d: -0.1,
            sign: Sign::Minus,
        };
        assert!(make_state(bad).is_err());
    }

    #[test]
    fn pauli_projectors() {
        assert_op(
            &pauli_projector(Axis::Z, Sign::Plus),
            &[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)],
            1e-15,
        );
        assert_op(
            &pauli_projector(Axis::X, Sign::Plus),
            &[(0.5, 0.0), (0.5, 0.0), (0.5, 0.0), (0.5, 0.0)],
            1e-15,
        );
        assert_op(
            &pauli_projector(Axis::X, Sign::Minus),
            &[(0.5, 0.0), (-0.5, 0.0), (-0.5, 0.0), (0.5, 0.0)],
            1e-15,
        );
        assert_op(
            &pauli_projector(Axis::Y, Sign::Plus),
            &[(0.5, 0.0), (0.0, -0.5), (0.0, 0.5), (0.5, 0.0)],
            1e-15,
        );
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            for dir in [Sign::Plus, Sign::Minus] {
                let p = pauli_projector(axis, dir);
                let sq = HermitianOperator::symmetrized(p.matrix() * p.matrix());
                assert!(sq.distance(&p).unwrap() < 1e-12);
                assert!((p.trace() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn prior_povm_shapes() {
        let one = make_prior_povm(&[Axis::X]).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one.elements()[0], pauli_projector(Axis::X, Sign::Plus));
        assert_eq!(one.labels(), &["+x".to_string(), "-x".to_string()]);

        let two = make_prior_povm(&[Axis::X, Axis::Y]).unwrap();
        assert_eq!(two.len(), 4);
        assert!((two.elements()[2].trace() - 0.5).abs() < 1e-15);
        assert!(two.completeness_gap() < 1e-15);

        let three = make_prior_povm(&[Axis::X, Axis::Y, Axis::Z]).unwrap();
        assert_eq!(three.len(), 6);
        assert!((three.elements()[5].trace() - 1.0 / 3.0).abs() < 1e-15);
        assert!(three.completeness_gap() < 1e-15);
    }

    #[test]
    fn prior_povm_rejects_bad_settings() {
        assert!(make_prior_povm(&[]).is_err());
        assert!(make_prior_povm(&[Axis::X, Axis::Y, Axis::X]).is_err());
    }

    #[test]
    fn povm_validation() {
        let z = [pauli_projector(Axis::Z, Sign::Plus), pauli_projector(Axis::Z, Sign::Plus)];
        let err = PovmSet::unlabeled(z.to_vec()).unwrap_err();
        assert!(err.to_string().contains("completeness"));
        let neg = PovmSet::unlabeled(vec![
            HermitianOperator::diag(&[1.5, 1.0]),
            HermitianOperator::diag(&[-0.5, 0.0]),
        ])
        .unwrap_err();
        assert!(neg.to_string().contains("positive semidefinite"));
    }

    #[test]
    fn density_validation() {
        assert!(matches!(
            DensityMatrix::new(HermitianOperator::diag(&[0.5, 0.4])),
            Err(Error::InvalidTrace(_))
        ));
        assert!(matches!(
            DensityMatrix::new(HermitianOperator::diag(&[1.5, -0.5])),
            Err(Error::NotPsd(_))
        ));
    }

    #[test]
    fn born_table_examples() {
        let povm = make_prior_povm(&[Axis::X, Axis::Y]).unwrap();
        let t = born_table(&[DensityMatrix::maximally_mixed(2)], &povm).unwrap();
        assert!(t[0].iter().all(|&p| (p - 0.25).abs() < 1e-15));

        let (alpha, d) = (0.3, 0.8);
        let plus = make_state(StateParams::new(alpha, d, Sign::Plus).unwrap()).unwrap();
        let minus = make_state(StateParams::new(alpha, d, Sign::Minus).unwrap()).unwrap();
        let t = born_table(&[plus, minus], &povm).unwrap();
        assert!((t[0][0] - 0.25 * (1.0 + d * (2.0 * alpha).sin())).abs() < 1e-15);
        assert!((t[1][0] - 0.25 * (1.0 - d * (2.0 * alpha).sin())).abs() < 1e-15);
        for row in &t {
            assert!((row[2] - 0.25).abs() < 1e-15 && (row[3] - 0.25).abs() < 1e-15);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn born_table_dimension_mismatch() {
        let povm = make_prior_povm(&[Axis::Z]).unwrap();
        let r = DensityMatrix::maximally_mixed(3);
        assert!(matches!(born_table(&[r], &povm), Err(Error::DimensionMismatch { .. })));
    }

    proptest! {
        #[test]
        fn family_invariants(alpha in 0.0..=FRAC_PI_4, d in 0.0f64..=1.0, minus in any::<bool>()) {
            let sign = if minus { Sign::Minus } else { Sign::Plus };
            let rho = make_state(StateParams::new(alpha, d, sign).unwrap()).unwrap();
            let m = rho.op().matrix();
            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
            let (s, c) = alpha.sin_cos();
            prop_assert!((det - c * c * s * s * (1.0 - d * d)).abs() < 1e-12);
            prop_assert!(det >= -1e-15);
            prop_assert!((rho.op().trace() - 1.0).abs() < 1e-12);
            prop_assert!(qmat::is_psd(rho.op(), 1e-10));
            prop_assert!(DensityMatrix::new(rho.op().clone()).is_ok());
            if d == 1.0 {
                prop_assert!((rho.purity() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn prior_povm_always_complete(mask in 1u8..8) {
            let axes: Vec<Axis> = [Axis::X, Axis::Y, Axis::Z]
                .into_iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, a)| a)
                .collect();
            let povm = make_prior_povm(&axes).unwrap();
            prop_assert!(povm.completeness_gap() < 1e-10);
            let rho = make_state(StateParams::new(0.4, 0.7, Sign::Minus).unwrap()).unwrap();
            let t = born_table(&[rho], &povm).unwrap();
            prop_assert!((t[0].iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
