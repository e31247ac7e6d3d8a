//! Builders for the six model families and post-processing of solved transforms.
//!
//! Each builder validates a configuration and returns a [`BuiltModel`]: the
//! functional-equation system, the constraint set that pins down the boundary
//! unknowns, and the spectra that were computed along the way.

mod inar;
mod shot_noise;
mod stationary;
mod transient;
mod wait_dependent;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{
    compose_map, compositions, AffineMap, Anchor, ConstraintSet, FunctionalEquationSystem, Resolution,
    SeriesSolution, SolverOptions,
};
use crate::error::{Error, Result, Warning};
use crate::numlin::{CMatrix, CVector};
use crate::stochcore::StateLaw;
use crate::C64;

pub use inar::InarConfig;
pub use shot_noise::ShotNoiseConfig;
pub use stationary::{StationaryArConfig, StationaryFgmConfig};
pub use transient::TransientArConfig;
pub use wait_dependent::WaitDependentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TransientAr,
    StationaryAr,
    StationaryFgm,
    ShotNoise,
    WaitDependent,
    Inar,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::TransientAr,
        ModelKind::StationaryAr,
        ModelKind::StationaryFgm,
        ModelKind::ShotNoise,
        ModelKind::WaitDependent,
        ModelKind::Inar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransientAr => "transient_ar",
            ModelKind::StationaryAr => "stationary_ar",
            ModelKind::StationaryFgm => "stationary_fgm",
            ModelKind::ShotNoise => "shot_noise",
            ModelKind::WaitDependent => "wait_dependent",
            ModelKind::Inar => "inar",
        }
    }

    /// Whether the transform describes a stationary law (so `Z(0) = π`).
    pub fn is_stationary(self) -> bool {
        self != ModelKind::TransientAr
    }

    /// The INAR model is described by a PGF in `z ∈ [0, 1]`; all others by an LST.
    pub fn is_pgf(self) -> bool {
        self == ModelKind::Inar
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    TransientAr(TransientArConfig),
    StationaryAr(StationaryArConfig),
    StationaryFgm(StationaryFgmConfig),
    ShotNoise(ShotNoiseConfig),
    WaitDependent(WaitDependentConfig),
    Inar(InarConfig),
}

/// Output of a builder, before the unknowns are resolved.
#[derive(Clone)]
pub struct BuiltModel {
    pub kind: ModelKind,
    pub system: Arc<FunctionalEquationSystem>,
    pub constraints: ConstraintSet,
    /// Names and lengths of the blocks making up the unknown vector, in order.
    pub unknown_layout: Vec<(String, usize)>,
    /// `Z` at the anchor for stationary kinds (the chain's stationary law).
    pub stationary: Option<CVector>,
    pub spectra: Vec<(String, Vec<C64>)>,
    pub warnings: Vec<Warning>,
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::TransientAr(_) => ModelKind::TransientAr,
            ModelConfig::StationaryAr(_) => ModelKind::StationaryAr,
            ModelConfig::StationaryFgm(_) => ModelKind::StationaryFgm,
            ModelConfig::ShotNoise(_) => ModelKind::ShotNoise,
            ModelConfig::WaitDependent(_) => ModelKind::WaitDependent,
            ModelConfig::Inar(_) => ModelKind::Inar,
        }
    }

    pub fn states(&self) -> usize {
        match self {
            ModelConfig::TransientAr(c) => c.lambda.len(),
            ModelConfig::StationaryAr(c) => c.lambda.len(),
            ModelConfig::StationaryFgm(c) => c.lambda.len(),
            ModelConfig::ShotNoise(c) => c.transition.len(),
            ModelConfig::WaitDependent(c) => c.lambda.len(),
            ModelConfig::Inar(c) => c.lambda.len(),
        }
    }

    pub fn build(&self) -> Result<BuiltModel> {
        match self {
            ModelConfig::TransientAr(c) => transient::build(c),
            ModelConfig::StationaryAr(c) => stationary::build_ar(c),
            ModelConfig::StationaryFgm(c) => stationary::build_fgm(c),
            ModelConfig::ShotNoise(c) => shot_noise::build(c),
            ModelConfig::WaitDependent(c) => wait_dependent::build(c),
            ModelConfig::Inar(c) => inar::build(c),
        }
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<SolvedModel> {
        let built = self.build()?;
        SolvedModel::from_built(self.clone(), built, opts)
    }

    /// Smallest and largest rate that sets the natural scale of the transform
    /// argument. INAR works on `z ∈ [0, 1]` and reports `(1, 1)`.
    pub fn rate_scale(&self) -> (f64, f64) {
        let span = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(0.0, f64::max);
            (lo, hi)
        };
        match self {
            ModelConfig::TransientAr(c) => span(&c.lambda),
            ModelConfig::StationaryAr(c) => span(&c.lambda),
            ModelConfig::StationaryFgm(c) => span(&c.lambda),
            ModelConfig::ShotNoise(c) => {
                if c.p < 1.0 {
                    span(&c.negative_rate)
                } else {
                    let rates: Vec<f64> = c.service.iter().map(|l| 1.0 / l.mean()).collect();
                    span(&rates)
                }
            }
            ModelConfig::WaitDependent(c) => span(&c.lambda),
            ModelConfig::Inar(_) => (1.0, 1.0),
        }
    }

    /// Standard evaluation grid: log-spaced real points in
    /// `[0.05·λmin, 5·λmax]`, each nudged so that none of the nodes it visits
    /// lies within 2% of a pole. INAR uses `z = 0.1, 0.2, …, 0.9`.
    pub fn auto_grid(&self, count: usize) -> Result<Vec<f64>> {
        self.grid_over(count, None)
    }

    /// As [`auto_grid`](Self::auto_grid) over an explicit `span`: log-spaced
    /// for transforms in `s`, linearly spaced for INAR.
    pub fn grid_over(&self, count: usize, span: Option<(f64, f64)>) -> Result<Vec<f64>> {
        let built = self.build()?;
        let count = count.max(2);
        let raw: Vec<f64> = match (self.kind().is_pgf(), span) {
            (true, None) => (1..=9).map(|k| k as f64 / 10.0).collect(),
            (true, Some((lo, hi))) => {
                if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
                    return Err(invalid("grid.span", "must satisfy 0 ≤ lo ≤ hi ≤ 1"));
                }
                (0..count)
                    .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
                    .collect()
            }
            (false, span) => {
                let (lo, hi) = match span {
                    Some(bounds) => bounds,
                    None => {
                        let (lo, hi) = self.rate_scale();
                        (0.05 * lo, 5.0 * hi)
                    }
                };
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(invalid("grid.span", "must satisfy 0 < lo ≤ hi < ∞"));
                }
                let (a, b) = (lo.ln(), hi.ln());
                (0..count)
                    .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
                    .collect()
            }
        };
        Ok(raw
            .into_iter()
            .map(|s| nudge_from_poles(&built.system, s))
            .collect())
    }

    /// Canonical two-state instance of each kind, used for examples and tests.
    pub fn canonical(kind: ModelKind) -> ModelConfig {
        let p = vec![vec![0.6, 0.4], vec![0.3, 0.7]];
        let exp = |rate: f64| StateLaw::Exponential { rate };
        match kind {
            ModelKind::TransientAr => ModelConfig::TransientAr(TransientArConfig {
                generator: vec![vec![-1.0, 1.0], vec![2.0, -2.0]],
                lambda: vec![1.0, 2.0],
                service: vec![exp(3.0), exp(4.0)],
                a: vec![0.5, 0.25],
                r: 0.5,
                eta: 0.25,
                w: 0.5,
                initial: None,
            }),
            ModelKind::StationaryAr => ModelConfig::StationaryAr(StationaryArConfig {
                transition: p,
                lambda: vec![1.0, 1.5],
                service: vec![exp(2.0), exp(3.0)],
                a: vec![0.5, 0.3],
            }),
            ModelKind::StationaryFgm => ModelConfig::StationaryFgm(StationaryFgmConfig {
                transition: p,
                lambda: vec![1.0, 1.7],
                service: vec![exp(2.0), exp(3.0)],
                a: vec![0.45, 0.35],
                theta: vec![vec![0.5, -0.3], vec![0.8, 1.0]],
            }),
            ModelKind::ShotNoise => ModelConfig::ShotNoise(ShotNoiseConfig {
                transition: p,
                service: vec![exp(1.0), exp(2.0)],
                t: vec![0.7, 1.2],
                speed: 1.0,
                p: 0.6,
                positive_noise: Some(vec![exp(3.0), exp(2.0)]),
                negative_rate: vec![1.5, 2.5],
            }),
            ModelKind::WaitDependent => ModelConfig::WaitDependent(WaitDependentConfig {
                transition: vec![vec![0.3, 0.7], vec![0.6, 0.4]],
                lambda: vec![2.0, 3.0],
                mu: vec![1.0, 2.0],
                c: 0.5,
            }),
            ModelKind::Inar => ModelConfig::Inar(InarConfig {
                transition: p,
                lambda: vec![0.6, 0.9],
                service: vec![exp(1.0), exp(1.5)],
                a: vec![vec![0.3, 0.5], vec![0.4, 0.2]],
                q: vec![vec![0.5, 0.5], vec![0.3, 0.7]],
            }),
        }
    }
}

const NUDGE_DEPTH: usize = 20;
const CIRCLE_RADIUS: f64 = 0.02;
const ZERO_LIMIT_STEP_LST: f64 = 1e-3;
const NUDGE_CLEARANCE: f64 = 0.02;

fn clearance(system: &FunctionalEquationSystem, s: f64) -> bool {
    let maps: Vec<AffineMap> = system.maps();
    for k in 0..=NUDGE_DEPTH {
        for idx in compositions(k, maps.len()) {
            let Ok(node) = compose_map(&maps, &idx, C64::new(s, 0.0)) else {
                return false;
            };
            for pole in system.poles() {
                let radius = NUDGE_CLEARANCE * pole.norm().max(0.01);
                if (node - pole).norm() < radius {
                    return false;
                }
            }
        }
    }
    true
}

fn nudge_from_poles(system: &FunctionalEquationSystem, s: f64) -> f64 {
    for step in 0..=40u32 {
        let delta = 0.005 * step.div_ceil(2) as f64;
        let sign = if step % 2 == 1 { 1.0 } else { -1.0 };
        let candidate = s * (1.0 + sign * delta);
        if clearance(system, candidate) {
            return candidate;
        }
    }
    s
}

/// A model with its unknowns resolved.
#[derive(Debug, Clone)]
pub struct SolvedModel {
    pub config: ModelConfig,
    pub solution: SeriesSolution,
    pub unknowns: Vec<(String, CVector)>,
    pub resolution: Resolution,
    pub stationary: Option<CVector>,
    pub spectra: Vec<(String, Vec<C64>)>,
    pub warnings: Vec<Warning>,
}

impl SolvedModel {
    pub fn from_built(config: ModelConfig, built: BuiltModel, opts: &SolverOptions) -> Result<Self> {
        let (solution, resolution) = built.system.solve(&built.constraints, opts)?;
        let mut unknowns = Vec::new();
        let mut offset = 0;
        for (name, len) in &built.unknown_layout {
            unknowns.push((name.clone(), solution.u.rows(offset, *len).into_owned()));
            offset += len;
        }
        let mut warnings = built.warnings;
        warnings.extend(resolution.warnings.iter().cloned());
        Ok(Self {
            config,
            solution,
            unknowns,
            resolution,
            stationary: built.stationary,
            spectra: built.spectra,
            warnings,
        })
    }

    /// Rebuild the model and evaluate it with a caller-chosen unknown vector.
    pub fn with_unknowns(&self, u: CVector) -> Result<Self> {
        if u.len() != self.solution.u.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} unknowns supplied, model has {}",
                u.len(),
                self.solution.u.len()
            )));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for (_, block) in &mut out.unknowns {
            let len = block.len();
            *block = u.rows(offset, len).into_owned();
            offset += len;
        }
        out.solution.u = u;
        Ok(out)
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    pub fn states(&self) -> usize {
        self.solution.system.dim()
    }

    /// `Z(s)`. Points whose sweep runs into a pole of the representation are
    /// removable singularities of `Z` itself; there the value is taken as the
    /// mean over a small circle around `s`, which is exact for analytic
    /// functions up to `O((h/R)^K)`.
    pub fn evaluate(&self, s: C64) -> Result<CVector> {
        match self.solution.evaluate(s) {
            Err(Error::PoleProximity { .. }) if s.norm() > 0.0 => self.circle_mean(s),
            other => other,
        }
    }

    fn circle_mean(&self, s: C64) -> Result<CVector> {
        const K: usize = 16;
        let h = CIRCLE_RADIUS * s.norm();
        let mut acc = CVector::zeros(self.states());
        for k in 0..K {
            let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / K as f64;
            acc += self.solution.evaluate(s + C64::from_polar(h, theta))?;
        }
        Ok(acc / c(K as f64))
    }

    /// Point where the transform is pinned: `s = 0`, or `z = 1` for INAR.
    pub fn anchor_point(&self) -> f64 {
        if self.kind().is_pgf() {
            1.0
        } else {
            0.0
        }
    }

    /// `Z` at [`anchor_point`](Self::anchor_point). For the wait-dependent
    /// model the representation is singular at 0 and the value is the
    /// Richardson limit from the right.
    pub fn anchor_value(&self) -> Result<CVector> {
        if self.kind() == ModelKind::WaitDependent {
            let h = ZERO_LIMIT_STEP_LST;
            let (f1, f2, f4) = (
                self.evaluate_real(h)?,
                self.evaluate_real(h / 2.0)?,
                self.evaluate_real(h / 4.0)?,
            );
            return Ok((f1 - f2 * c(6.0) + f4 * c(8.0)) / c(3.0));
        }
        self.evaluate_real(self.anchor_point())
    }

    /// What [`anchor_value`](Self::anchor_value) must equal: `π` for the
    /// stationary kinds, the pinned value of the transient transform.
    pub fn expected_anchor(&self) -> Option<CVector> {
        match self.solution.system.anchor() {
            Anchor::FixedPointValue { value, .. } if !self.kind().is_stationary() => Some(value.clone()),
            _ => self.stationary.clone(),
        }
    }

    pub fn evaluate_real(&self, s: f64) -> Result<CVector> {
        self.evaluate(C64::new(s, 0.0))
    }

    pub fn residual(&self, s: C64) -> Result<f64> {
        self.solution.residual(s)
    }

    pub fn unknown(&self, name: &str) -> Option<&CVector> {
        self.unknowns.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    fn precise(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solution.tol.min(1e-12),
            max_order: self.solution.max_order + 20,
        }
    }

    /// Probability mass of the empty-system boundary per state, when the model
    /// has one: `P(W = 0, Y = j)` for the wait-dependent and stationary AR
    /// models (read off the unknowns) and `P(X = 0, Z = j)` for INAR.
    pub fn boundary_atoms(&self) -> Result<Option<CVector>> {
        match self.kind() {
            ModelKind::WaitDependent => Ok(self.unknown("v").cloned()),
            ModelKind::Inar => {
                let opts = self.precise();
                let f = |z: f64| self.solution.evaluate_with(C64::new(z, 0.0), &opts);
                let h = inar::ZERO_LIMIT_STEP;
                let (f1, f2, f4) = (f(h)?, f(h / 2.0)?, f(h / 4.0)?);
                Ok(Some((f1 - f2 * C64::new(6.0, 0.0) + f4 * C64::new(8.0, 0.0)) / C64::new(3.0, 0.0)))
            }
            _ => Ok(None),
        }
    }

    /// `E[W^order · 1{Y = j}]` (or `E[X^order · 1{Z = j}]` for INAR) from
    /// one-sided finite differences of the transform at its anchor, refined by
    /// Richardson extrapolation.
    pub fn moment(&self, j: usize, order: u32) -> Result<f64> {
        let kind = self.kind();
        if !kind.is_stationary() {
            return Err(Error::DomainError(
                "moments are defined for stationary model kinds only".into(),
            ));
        }
        if j >= self.states() {
            return Err(Error::DimensionMismatch(format!("state {j} out of range")));
        }
        let pi = self.stationary.as_ref().expect("stationary kinds carry π")[j].re;
        let opts = self.precise();
        let scale = self.config.rate_scale().1;
        let pgf = kind.is_pgf();
        let f = |x: f64| -> Result<f64> {
            let point = if pgf { 1.0 - x } else { x };
            Ok(self.solution.evaluate_with(C64::new(point, 0.0), &opts)?[j].re)
        };
        // d1 ≈ Z'(0) (LST) or −f'(1) (PGF); d2 ≈ Z''(0) or f''(1).
        let d1 = |h: f64| -> Result<f64> { Ok((-3.0 * pi + 4.0 * f(h)? - f(2.0 * h)?) / (2.0 * h)) };
        let d2 = |h: f64| -> Result<f64> {
            Ok((2.0 * pi - 5.0 * f(h)? + 4.0 * f(2.0 * h)? - f(3.0 * h)?) / (h * h))
        };
        let moment_at = |h: f64| -> Result<f64> {
            match order {
                1 => Ok(-d1(h)?),
                2 if pgf => Ok(d2(h)? - d1(h)?),
                2 => Ok(d2(h)?),
                _ => Err(Error::InvalidParameter {
                    field: "order".into(),
                    reason: format!("moment order must be 1 or 2, got {order}"),
                }),
            }
        };
        let h = if order == 1 { 1e-3 } else { 1e-2 } / scale;
        let (m1, m2, m4) = (moment_at(h)?, moment_at(h / 2.0)?, moment_at(h / 4.0)?);
        let coarse = (4.0 * m2 - m1) / 3.0;
        let fine = (4.0 * m4 - m2) / 3.0;
        // The absolute floor covers moments that are zero up to rounding.
        if (coarse - fine).abs() > 1e-4 * fine.abs() + 1e-9 {
            return Err(Error::NumericalInstability(format!(
                "Richardson estimates {coarse:.8e} and {fine:.8e} disagree"
            )));
        }
        Ok(fine)
    }
}

pub(crate) fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}

pub(crate) fn check_len<T>(field: &str, v: &[T], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "`{field}` has {} entries, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_positive(field: &str, v: &[f64]) -> Result<()> {
    for (i, &x) in v.iter().enumerate() {
        if !(x.is_finite() && x > 0.0) {
            return Err(invalid(format!("{field}[{i}]"), format!("must be positive, got {x}")));
        }
    }
    Ok(())
}

pub(crate) fn check_open_unit(field: &str, v: &[f64]) -> Result<()> {
    for (i, &x) in v.iter().enumerate() {
        if !(x > 0.0 && x < 1.0) {
            return Err(invalid(format!("{field}[{i}]"), format!("must lie in (0, 1), got {x}")));
        }
    }
    Ok(())
}

pub(crate) fn check_laws(field: &str, laws: &[StateLaw], n: usize) -> Result<()> {
    check_len(field, laws, n)?;
    for law in laws {
        law.validate()?;
    }
    Ok(())
}

/// `N × N` matrix that is zero except for column `col`, filled by `entry(row)`.
pub(crate) fn column_matrix(
    n: usize,
    col: usize,
    mut entry: impl FnMut(usize) -> Result<C64>,
) -> Result<CMatrix> {
    let mut m = CMatrix::zeros(n, n);
    for row in 0..n {
        m[(row, col)] = entry(row)?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests;
