//! Truncated multi-index series for `Z(s) = Σₘ Hₘ(s)·Z(αₘ(s)) + V(s; u)`.
//!
//! Iterating the equation gives
//! `Z(s) = Σₖ Σ_{|idx|=k} F_idx(s)·V(α_idx(s); u) + (frontier term)` with
//! `F_idx = Σₘ F_{idx−eₘ}·Hₘ(α_{idx−eₘ}(s))` and `F₀ = I`. The sweep pushes
//! coefficients forward one order at a time and only ever holds two layers.
//!
//! `V` is affine in `u`, so the sweep carries the `N×(1+U)` payload
//! `[V₀ | V₁]`; one pass yields `Z(s; u) = z₀ + Z₁·u` for every `u`.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result, Warning};
use crate::numlin::{self, CMatrix, CVector};
use crate::C64;

pub type MatrixFn = Arc<dyn Fn(C64) -> Result<CMatrix> + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(C64) -> Result<CVector> + Send + Sync>;
/// Constraint residual as a function of the Z-values at the constraint points and of `u`.
pub type ConstraintFn = Arc<dyn Fn(&[CVector], &CVector) -> Result<CVector> + Send + Sync>;

const MAP_TOL: f64 = 1e-12;
const POLE_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Contraction,
    Shift,
}

/// `s ↦ c + a·s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub a: C64,
    pub c: C64,
}

impl AffineMap {
    pub fn new(a: C64, c: C64) -> Self {
        Self { a, c }
    }

    pub fn scale(a: f64) -> Self {
        Self::new(C64::new(a, 0.0), C64::new(0.0, 0.0))
    }

    pub fn shift(c: f64) -> Self {
        Self::new(C64::new(1.0, 0.0), C64::new(c, 0.0))
    }

    pub fn apply(&self, s: C64) -> C64 {
        self.c + self.a * s
    }

    /// `n`-fold iterate applied to `s`.
    pub fn iterate(&self, n: usize, s: C64) -> C64 {
        if n == 0 {
            return s;
        }
        if self.a == C64::new(1.0, 0.0) {
            return s + self.c * n as f64;
        }
        let an = self.a.powu(n as u32);
        an * s + self.c * (C64::new(1.0, 0.0) - an) / (C64::new(1.0, 0.0) - self.a)
    }

    pub fn kind(&self) -> Result<MapKind> {
        if self.a.norm() < 1.0 {
            Ok(MapKind::Contraction)
        } else if self.a == C64::new(1.0, 0.0) && self.c.re > 0.0 {
            Ok(MapKind::Shift)
        } else {
            Err(Error::InvalidParameter {
                field: "map".into(),
                reason: format!(
                    "map s -> {} + {}·s is neither a contraction nor a positive shift",
                    self.c, self.a
                ),
            })
        }
    }

    pub fn fixed_point(&self) -> Option<C64> {
        (self.a != C64::new(1.0, 0.0)).then(|| self.c / (C64::new(1.0, 0.0) - self.a))
    }

    fn commutes_with(&self, other: &AffineMap) -> bool {
        let lhs = self.a * other.c + self.c;
        let rhs = other.a * self.c + other.c;
        (lhs - rhs).norm() <= MAP_TOL * (1.0 + lhs.norm().max(rhs.norm()))
    }

    fn same_as(&self, other: &AffineMap) -> bool {
        self.a == other.a && self.c == other.c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    pub counts: Vec<usize>,
}

impl MultiIndex {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn order(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// `α₁^{i₁}(α₂^{i₂}(…α_M^{i_M}(s)…))`.
pub fn compose_map(maps: &[AffineMap], idx: &MultiIndex, s: C64) -> Result<C64> {
    if maps.len() != idx.counts.len() {
        return Err(Error::DimensionMismatch(format!(
            "multi-index of length {} for {} maps",
            idx.counts.len(),
            maps.len()
        )));
    }
    Ok(maps
        .iter()
        .zip(&idx.counts)
        .rev()
        .fold(s, |z, (m, &n)| m.iterate(n, z)))
}

/// All compositions of `k` into `m` nonnegative parts, in lexicographic order.
pub fn compositions(k: usize, m: usize) -> Vec<MultiIndex> {
    fn rec(k: usize, m: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if m == 1 {
            prefix.push(k);
            out.push(MultiIndex::new(prefix.clone()));
            prefix.pop();
            return;
        }
        for first in (0..=k).rev() {
            prefix.push(first);
            rec(k - first, m - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if m > 0 {
        rec(k, m, &mut Vec::with_capacity(m), &mut out);
    }
    out
}

#[derive(Clone)]
pub struct Branch {
    pub map: AffineMap,
    pub coeff: MatrixFn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Anchor {
    /// The value of `Z` at the common fixed point of a contraction family.
    FixedPointValue { point: C64, value: CVector },
    /// `Z` tends to a limit that the shift family drives the frontier towards;
    /// the frontier term is dropped once the coefficient mass is below tol.
    DecayAtInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_order: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_order: 40,
        }
    }
}

#[derive(Clone)]
pub struct FunctionalEquationSystem {
    dim: usize,
    branches: Vec<Branch>,
    inhom_const: VectorFn,
    inhom_linear: MatrixFn,
    unknown_dim: usize,
    anchor: Anchor,
    poles: Vec<C64>,
    kind: MapKind,
}

impl std::fmt::Debug for FunctionalEquationSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionalEquationSystem")
            .field("dim", &self.dim)
            .field("maps", &self.maps())
            .field("unknown_dim", &self.unknown_dim)
            .field("anchor", &self.anchor)
            .field("poles", &self.poles)
            .finish()
    }
}

/// Affine value `Z(s; u) = offset + linear·u` at one point.
#[derive(Debug, Clone)]
pub struct AffineValue {
    pub offset: CVector,
    pub linear: CMatrix,
    pub order: usize,
    pub tail_norm: f64,
}

impl AffineValue {
    pub fn at(&self, u: &CVector) -> CVector {
        if u.is_empty() {
            self.offset.clone()
        } else {
            &self.offset + &self.linear * u
        }
    }
}

/// Per-order record of one sweep.
#[derive(Debug, Clone)]
pub struct SweepTrace {
    /// Estimate of `Z` (one column per payload column).
    pub estimate: CMatrix,
    pub order: usize,
    pub tail_norm: f64,
    /// Sup-norm of `Σ_{|idx|=k} F_idx·V(α_idx(s))`, per payload column maximum.
    pub layer_norms: Vec<f64>,
    /// `‖Σ_{|idx|=k} F_idx(s)‖₁` for `k = 0..=order+1`.
    pub mass_norms: Vec<f64>,
    pub layers: Vec<CMatrix>,
}

struct Node {
    idx: Vec<u16>,
    point: C64,
    f: CMatrix,
}

fn col_sup(m: &CMatrix) -> f64 {
    numlin::max_abs(m)
}

impl FunctionalEquationSystem {
    pub fn new(
        dim: usize,
        branches: Vec<Branch>,
        inhom_const: VectorFn,
        inhom_linear: MatrixFn,
        unknown_dim: usize,
        anchor: Anchor,
        poles: Vec<C64>,
    ) -> Result<Self> {
        if dim == 0 || dim > numlin::MAX_DIM {
            return Err(Error::DimensionMismatch(format!("system dimension {dim}")));
        }
        if branches.is_empty() {
            return Err(Error::DimensionMismatch("system needs at least one branch".into()));
        }
        let kind = branches[0].map.kind()?;
        for b in &branches {
            if b.map.kind()? != kind {
                return Err(Error::NonCommutingMaps(
                    "contraction and shift maps cannot be mixed".into(),
                ));
            }
        }
        for (i, bi) in branches.iter().enumerate() {
            for bj in &branches[i + 1..] {
                if !bi.map.commutes_with(&bj.map) {
                    return Err(Error::NonCommutingMaps(format!(
                        "{:?} and {:?} do not commute",
                        bi.map, bj.map
                    )));
                }
            }
        }
        if kind == MapKind::Contraction {
            let s0 = branches[0].map.fixed_point().expect("contraction has a fixed point");
            for b in &branches {
                let s1 = b.map.fixed_point().expect("contraction has a fixed point");
                if (s1 - s0).norm() > MAP_TOL * (1.0 + s0.norm()) {
                    return Err(Error::NonCommutingMaps(format!(
                        "fixed points {s0} and {s1} differ"
                    )));
                }
            }
            match &anchor {
                Anchor::FixedPointValue { point, value } => {
                    if (point - s0).norm() > MAP_TOL * (1.0 + s0.norm()) {
                        return Err(Error::InvalidParameter {
                            field: "anchor".into(),
                            reason: format!("anchor point {point} is not the fixed point {s0}"),
                        });
                    }
                    if value.len() != dim {
                        return Err(Error::DimensionMismatch("anchor value length".into()));
                    }
                }
                Anchor::DecayAtInfinity => {
                    return Err(Error::InvalidParameter {
                        field: "anchor".into(),
                        reason: "contraction families need a fixed-point anchor".into(),
                    })
                }
            }
        } else if anchor != Anchor::DecayAtInfinity {
            return Err(Error::InvalidParameter {
                field: "anchor".into(),
                reason: "shift families have no finite fixed point".into(),
            });
        }

        // Identical maps visit identical points, so their coefficients add.
        let mut merged: Vec<Branch> = Vec::new();
        for b in branches {
            if let Some(existing) = merged.iter_mut().find(|m| m.map.same_as(&b.map)) {
                let (f, g) = (existing.coeff.clone(), b.coeff.clone());
                existing.coeff = Arc::new(move |s| Ok(f(s)? + g(s)?));
            } else {
                merged.push(b);
            }
        }

        Ok(Self {
            dim,
            branches: merged,
            inhom_const,
            inhom_linear,
            unknown_dim,
            anchor,
            poles,
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn unknown_dim(&self) -> usize {
        self.unknown_dim
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn maps(&self) -> Vec<AffineMap> {
        self.branches.iter().map(|b| b.map).collect()
    }

    pub fn map_kind(&self) -> MapKind {
        self.kind
    }

    pub fn anchor(&self) -> &Anchor {
        &self.anchor
    }

    pub fn poles(&self) -> &[C64] {
        &self.poles
    }

    /// Largest multiplier modulus of a contraction family.
    pub fn kappa(&self) -> Option<f64> {
        (self.kind == MapKind::Contraction)
            .then(|| self.branches.iter().map(|b| b.map.a.norm()).fold(0.0, f64::max))
    }

    pub fn branch_coeff(&self, m: usize, s: C64) -> Result<CMatrix> {
        self.check_pole(s)?;
        (self.branches[m].coeff)(s)
    }

    /// `V(s; u)`.
    pub fn inhomogeneous(&self, s: C64, u: &CVector) -> Result<CVector> {
        self.check_pole(s)?;
        let v0 = (self.inhom_const)(s)?;
        if self.unknown_dim == 0 {
            return Ok(v0);
        }
        Ok(v0 + (self.inhom_linear)(s)? * u)
    }

    pub fn check_pole(&self, s: C64) -> Result<()> {
        for &pole in &self.poles {
            let radius = POLE_RADIUS * (1.0 + pole.norm());
            if (s - pole).norm() < radius {
                return Err(Error::PoleProximity {
                    point: s,
                    pole,
                    radius,
                });
            }
        }
        Ok(())
    }

    fn payload(&self, s: C64) -> Result<CMatrix> {
        self.check_pole(s)?;
        let v0 = (self.inhom_const)(s)?;
        let mut out = CMatrix::zeros(self.dim, 1 + self.unknown_dim);
        out.set_column(0, &v0);
        if self.unknown_dim > 0 {
            let v1 = (self.inhom_linear)(s)?;
            if v1.shape() != (self.dim, self.unknown_dim) {
                return Err(Error::DimensionMismatch(format!(
                    "V1 has shape {:?}, expected ({}, {})",
                    v1.shape(),
                    self.dim,
                    self.unknown_dim
                )));
            }
            out.view_mut((0, 1), (self.dim, self.unknown_dim)).copy_from(&v1);
        }
        Ok(out)
    }

    fn point_of(&self, maps: &[AffineMap], idx: &[u16], s: C64) -> C64 {
        maps.iter()
            .zip(idx)
            .rev()
            .fold(s, |z, (m, &n)| m.iterate(n as usize, z))
    }

    /// Core sweep. With `tol = None` it runs exactly `max_order` orders.
    fn sweep(
        &self,
        s: C64,
        payload: &dyn Fn(C64) -> Result<CMatrix>,
        tol: Option<f64>,
        max_order: usize,
        keep_layers: bool,
    ) -> Result<SweepTrace> {
        let n = self.dim;
        let m = self.branches.len();
        let maps = self.maps();
        let anchor_value = match &self.anchor {
            Anchor::FixedPointValue { value, .. } => Some(value.clone()),
            Anchor::DecayAtInfinity => None,
        };

        let mut layer_nodes = vec![Node {
            idx: vec![0; m],
            point: s,
            f: CMatrix::identity(n, n),
        }];
        let mut partial: Option<CMatrix> = None;
        let mut previous_estimate: Option<CMatrix> = None;
        let mut trace = SweepTrace {
            estimate: CMatrix::zeros(0, 0),
            order: 0,
            tail_norm: f64::INFINITY,
            layer_norms: Vec::new(),
            mass_norms: vec![numlin::norm_one(&CMatrix::identity(n, n))],
            layers: Vec::new(),
        };
        let mut small_in_a_row = 0;

        for k in 0..=max_order {
            let mut layer: Option<CMatrix> = None;
            let mut children: Vec<Node> = Vec::new();
            let mut lookup: HashMap<Vec<u16>, usize> = HashMap::new();
            for node in &layer_nodes {
                let contribution = &node.f * payload(node.point)?;
                layer = Some(match layer {
                    Some(acc) => acc + contribution,
                    None => contribution,
                });
                for (bi, branch) in self.branches.iter().enumerate() {
                    self.check_pole(node.point)?;
                    let h = (branch.coeff)(node.point)?;
                    let f = &node.f * h;
                    let mut idx = node.idx.clone();
                    idx[bi] += 1;
                    match lookup.get(&idx) {
                        Some(&pos) => children[pos].f += f,
                        None => {
                            let point = self.point_of(&maps, &idx, s);
                            lookup.insert(idx.clone(), children.len());
                            children.push(Node { idx, point, f });
                        }
                    }
                }
            }
            let layer = layer.expect("layers are never empty");
            let next_mass = children
                .iter()
                .fold(CMatrix::zeros(n, n), |acc, c| acc + &c.f);
            let abs_mass: f64 = children.iter().map(|c| numlin::max_abs(&c.f)).sum();

            trace.layer_norms.push(col_sup(&layer));
            trace.mass_norms.push(numlin::norm_one(&next_mass));
            partial = Some(match partial {
                Some(p) => p + &layer,
                None => layer.clone(),
            });
            if keep_layers {
                trace.layers.push(layer);
            }

            let mut estimate = partial.clone().expect("set above");
            if let Some(z) = &anchor_value {
                let front = &next_mass * z;
                for i in 0..n {
                    estimate[(i, 0)] += front[i];
                }
            }
            let increment = match &previous_estimate {
                Some(prev) => col_sup(&(&estimate - prev)),
                None => f64::INFINITY,
            };
            let tail = match anchor_value {
                Some(_) => increment,
                None => increment.max(abs_mass),
            };
            trace.tail_norm = tail;
            trace.order = k;
            trace.estimate = estimate.clone();
            previous_estimate = Some(estimate);

            if let Some(tol) = tol {
                if tail <= tol {
                    small_in_a_row += 1;
                    if small_in_a_row >= 2 {
                        return Ok(trace);
                    }
                } else {
                    small_in_a_row = 0;
                }
            }
            layer_nodes = children;
        }
        match tol {
            Some(tol) => Err(Error::TruncationBudgetExceeded {
                tail_norm: trace.tail_norm,
                tol,
                max_order,
            }),
            None => Ok(trace),
        }
    }

    /// Adaptive evaluation returning `Z(s; ·)` as an affine function of `u`.
    pub fn evaluate_affine(&self, s: C64, opts: &SolverOptions) -> Result<AffineValue> {
        let trace = self.sweep(s, &|p| self.payload(p), Some(opts.tol), opts.max_order, false)?;
        let offset = trace.estimate.column(0).into_owned();
        let linear = trace
            .estimate
            .view((0, 1), (self.dim, self.unknown_dim))
            .into_owned();
        Ok(AffineValue {
            offset,
            linear,
            order: trace.order,
            tail_norm: trace.tail_norm,
        })
    }

    /// Adaptive evaluation of `Z(s; u)` for a known `u`.
    pub fn evaluate_at(&self, s: C64, u: &CVector, opts: &SolverOptions) -> Result<SweepTrace> {
        self.check_u(u)?;
        let payload = |p: C64| -> Result<CMatrix> {
            let v = self.inhomogeneous(p, u)?;
            Ok(CMatrix::from_column_slice(self.dim, 1, v.as_slice()))
        };
        self.sweep(s, &payload, Some(opts.tol), opts.max_order, false)
    }

    /// Fixed-depth sweep keeping every layer; partial sums exclude the frontier term.
    pub fn series_layers(&self, s: C64, u: &CVector, max_order: usize) -> Result<SeriesLayers> {
        self.check_u(u)?;
        let payload = |p: C64| -> Result<CMatrix> {
            let v = self.inhomogeneous(p, u)?;
            Ok(CMatrix::from_column_slice(self.dim, 1, v.as_slice()))
        };
        let trace = self.sweep(s, &payload, None, max_order, true)?;
        let layers: Vec<CVector> = trace.layers.iter().map(|l| l.column(0).into_owned()).collect();
        let mut partial_sums = Vec::with_capacity(layers.len());
        let mut acc = CVector::zeros(self.dim);
        for l in &layers {
            acc += l;
            partial_sums.push(acc.clone());
        }
        Ok(SeriesLayers {
            layers,
            partial_sums,
            mass_norms: trace.mass_norms,
        })
    }

    fn check_u(&self, u: &CVector) -> Result<()> {
        if u.len() != self.unknown_dim {
            return Err(Error::DimensionMismatch(format!(
                "unknown vector of length {} for a system with {} unknowns",
                u.len(),
                self.unknown_dim
            )));
        }
        Ok(())
    }

    /// Assemble and solve the affine constraint system for `u`.
    pub fn resolve_unknowns(
        &self,
        constraints: &ConstraintSet,
        opts: &SolverOptions,
    ) -> Result<Resolution> {
        let u_dim = self.unknown_dim;
        let values: Vec<AffineValue> = constraints
            .points
            .par_iter()
            .map(|&p| self.evaluate_affine(p, opts))
            .collect::<Result<_>>()?;
        let tail_norm = values.iter().map(|v| v.tail_norm).fold(0.0, f64::max);

        let at = |u: &CVector| -> Result<CVector> {
            let z: Vec<CVector> = values.iter().map(|v| v.at(u)).collect();
            (constraints.residual)(&z, u)
        };
        if u_dim == 0 {
            let u = CVector::zeros(0);
            let residual = numlin::vec_norm_inf(&at(&u)?);
            return Ok(Resolution {
                u,
                residual,
                condition: 1.0,
                tail_norm,
                warnings: Vec::new(),
            });
        }

        let zero = CVector::zeros(u_dim);
        let r0 = at(&zero)?;
        let rows = r0.len();
        if rows < u_dim {
            return Err(Error::DimensionMismatch(format!(
                "{rows} constraints for {u_dim} unknowns"
            )));
        }
        let mut a = CMatrix::zeros(rows, u_dim);
        for k in 0..u_dim {
            let mut e = zero.clone();
            e[k] = C64::new(1.0, 0.0);
            a.set_column(k, &(at(&e)? - &r0));
        }
        let ls = numlin::solve_least_squares(&a, &(-&r0))?;
        let mut warnings = Vec::new();
        if ls.condition > 1e10 {
            warnings.push(Warning::IllConditioned { condition: ls.condition }.emit());
        }
        let u = ls.x;
        let residual = numlin::vec_norm_inf(&at(&u)?);
        let bound = 1e-8 * (1.0 + numlin::vec_norm_inf(&u));
        if residual > bound {
            warnings.push(Warning::ConstraintResidual { residual, bound }.emit());
        }
        Ok(Resolution {
            u,
            residual,
            condition: ls.condition,
            tail_norm,
            warnings,
        })
    }

    /// Resolve the unknowns and wrap the system into an evaluable solution.
    pub fn solve(
        self: &Arc<Self>,
        constraints: &ConstraintSet,
        opts: &SolverOptions,
    ) -> Result<(SeriesSolution, Resolution)> {
        let resolution = self.resolve_unknowns(constraints, opts)?;
        let solution = SeriesSolution {
            system: self.clone(),
            u: resolution.u.clone(),
            tol: opts.tol,
            max_order: opts.max_order,
            tail_norm: resolution.tail_norm,
        };
        Ok((solution, resolution))
    }
}

#[derive(Debug, Clone)]
pub struct SeriesLayers {
    pub layers: Vec<CVector>,
    pub partial_sums: Vec<CVector>,
    pub mass_norms: Vec<f64>,
}

#[derive(Clone)]
pub struct ConstraintSet {
    pub points: Vec<C64>,
    pub residual: ConstraintFn,
}

impl ConstraintSet {
    pub fn none() -> Self {
        Self {
            points: Vec::new(),
            residual: Arc::new(|_, _| Ok(CVector::zeros(0))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Resolution {
    pub u: CVector,
    /// `‖residual(u)‖∞` of the constraint system at the returned `u`.
    pub residual: f64,
    pub condition: f64,
    pub tail_norm: f64,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone)]
pub struct SeriesSolution {
    pub system: Arc<FunctionalEquationSystem>,
    pub u: CVector,
    pub tol: f64,
    pub max_order: usize,
    pub tail_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TailReport {
    pub point: C64,
    pub order: usize,
    pub layer_norms: Vec<f64>,
    pub mass_norms: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Geometric mean of the last few layer ratios.
    pub asymptotic_ratio: f64,
    pub kappa: Option<f64>,
}

impl SeriesSolution {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_order: self.max_order,
        }
    }

    pub fn evaluate(&self, s: C64) -> Result<CVector> {
        self.evaluate_with(s, &self.options())
    }

    pub fn evaluate_with(&self, s: C64, opts: &SolverOptions) -> Result<CVector> {
        let trace = self.system.evaluate_at(s, &self.u, opts)?;
        Ok(trace.estimate.column(0).into_owned())
    }

    pub fn trace(&self, s: C64) -> Result<SweepTrace> {
        self.system.evaluate_at(s, &self.u, &self.options())
    }

    /// `‖Z(s) − Σₘ Hₘ(s)Z(αₘ(s)) − V(s; u)‖∞`, with the inner values computed
    /// at a tighter tolerance so the check measures the outer evaluation.
    pub fn residual(&self, s: C64) -> Result<f64> {
        let z = self.evaluate(s)?;
        let inner = SolverOptions {
            tol: self.tol / 100.0,
            max_order: self.max_order + 20,
        };
        let mut rhs = self.system.inhomogeneous(s, &self.u)?;
        for (m, branch) in self.system.branches.iter().enumerate() {
            let h = self.system.branch_coeff(m, s)?;
            rhs += h * self.evaluate_with(branch.map.apply(s), &inner)?;
        }
        Ok(numlin::vec_norm_inf(&(z - rhs)))
    }

    pub fn tail_bound_report(&self, grid: &[C64]) -> Result<Vec<TailReport>> {
        grid.iter()
            .map(|&s| {
                let trace = self.trace(s)?;
                let ratios: Vec<f64> = trace
                    .layer_norms
                    .windows(2)
                    .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
                    .collect();
                Ok(TailReport {
                    point: s,
                    order: trace.order,
                    asymptotic_ratio: asymptotic_ratio(&trace.layer_norms),
                    layer_norms: trace.layer_norms,
                    mass_norms: trace.mass_norms,
                    ratios,
                    kappa: self.system.kappa(),
                })
            })
            .collect()
    }
}

const ROUNDING_FLOOR: f64 = 1e3 * f64::EPSILON;

/// Geometric-mean decay over the last (up to) five orders whose norms are
/// above the rounding floor of the largest one.
pub fn asymptotic_ratio(norms: &[f64]) -> f64 {
    let floor = ROUNDING_FLOOR * norms.iter().cloned().fold(0.0, f64::max);
    let usable: Vec<f64> = norms
        .iter()
        .cloned()
        .take_while(|&x| x > floor.max(1e-300))
        .collect();
    if usable.len() < 2 {
        return 0.0;
    }
    let span = (usable.len() - 1).min(5);
    let last = usable[usable.len() - 1];
    let first = usable[usable.len() - 1 - span];
    (last / first).powf(1.0 / span as f64)
}
