//! Transient (generating-function in time) analysis of the autoregressive
//! recursion driven by a continuous-time background chain.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{c, check_laws, check_len, check_open_unit, invalid, column_matrix, BuiltModel, ModelKind};
use crate::engine::{Anchor, AffineMap, Branch, ConstraintSet, FunctionalEquationSystem};
use crate::error::{Error, Result};
use crate::numlin::{self, CMatrix, CVector, ModulatedResolvent};
use crate::stochcore::{CtChain, StateLaw};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientArConfig {
    pub generator: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub service: Vec<StateLaw>,
    pub a: Vec<f64>,
    /// Generating-function variable of the step index, `|r| < 1`.
    pub r: f64,
    /// Laplace variable of the arrival epoch `Tₙ`.
    pub eta: f64,
    /// Initial workload `W₁`.
    pub w: f64,
    /// Law of `Y₁`; defaults to the stationary law of the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

struct Data {
    lambda: Vec<f64>,
    service: Vec<StateLaw>,
    resolvent: ModulatedResolvent,
    r: f64,
    eta: f64,
    w: f64,
    p_hat: CVector,
    mu: Vec<C64>,
}

impl Data {
    /// `rΛ(Mᵀ(η − s))⁻¹`.
    fn kernel(&self, s: C64) -> Result<CMatrix> {
        let inv = self.resolvent.mt_inverse(c(self.eta) - s)?;
        let lam = numlin::diag(self.lambda.iter().map(|&l| c(self.r * l)));
        Ok(lam * inv)
    }
}

pub(super) fn build(cfg: &TransientArConfig) -> Result<BuiltModel> {
    let chain = CtChain::from_rows(&cfg.generator, &cfg.lambda)?;
    let n = chain.n();
    check_laws("service", &cfg.service, n)?;
    check_len("a", &cfg.a, n)?;
    check_open_unit("a", &cfg.a)?;
    if cfg.r.is_nan() || cfg.r.abs() >= 1.0 {
        return Err(invalid("r", format!("|r| must be below 1, got {}", cfg.r)));
    }
    if !(cfg.eta >= 0.0 && cfg.eta.is_finite()) {
        return Err(invalid("eta", format!("must be nonnegative, got {}", cfg.eta)));
    }
    if !(cfg.w >= 0.0 && cfg.w.is_finite()) {
        return Err(invalid("w", format!("must be nonnegative, got {}", cfg.w)));
    }
    let p_hat = match &cfg.initial {
        Some(p) => {
            check_len("initial", p, n)?;
            let total: f64 = p.iter().sum();
            if p.iter().any(|&x| x < 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(invalid("initial", "must be a probability vector"));
            }
            numlin::real_vector(p)
        }
        None => chain.stationary()?,
    };

    let resolvent = ModulatedResolvent::new(&cfg.lambda, &chain.q)?;
    let m = numlin::diag(cfg.lambda.iter().map(|&l| c(l))) - chain.q.transpose();
    let gap = resolvent.nu.min_gap();
    if gap < 1e-8 * numlin::norm_inf(&m) {
        return Err(Error::DegenerateSpectrum { gap });
    }
    let warnings = resolvent.nu.warnings.clone();
    let nu = resolvent.nu.values.clone();
    let mu: Vec<C64> = nu.iter().map(|v| v + cfg.eta).collect();

    let data = Arc::new(Data {
        lambda: cfg.lambda.clone(),
        service: cfg.service.clone(),
        resolvent,
        r: cfg.r,
        eta: cfg.eta,
        w: cfg.w,
        p_hat: p_hat.clone(),
        mu: mu.clone(),
    });

    let mut branches = Vec::with_capacity(n);
    for col in 0..n {
        let d = data.clone();
        let coeff = Arc::new(move |s: C64| {
            let k = d.kernel(s)?;
            let beta = d.service[col].lst(s)?;
            column_matrix(n, col, |row| Ok(k[(row, col)] * beta))
        });
        branches.push(Branch {
            map: AffineMap::scale(cfg.a[col]),
            coeff,
        });
    }

    let d = data.clone();
    let inhom_const = Arc::new(move |s: C64| Ok(&d.p_hat * (c(d.r) * (-s * d.w).exp())));
    let d = data.clone();
    // Unknown u = vec(C₁, …, C_N): entry (i−1)·N + j is C_{i,j}.
    let inhom_linear = Arc::new(move |s: C64| {
        let denom: C64 = d.mu.iter().map(|&m| s - m).product();
        let mut v1 = CMatrix::zeros(n, n * n);
        let mut power = C64::new(1.0, 0.0);
        for i in 0..n {
            power *= s;
            for j in 0..n {
                v1[(j, i * n + j)] = power / denom;
            }
        }
        Ok(v1)
    });

    // Z(0) = r(I − rAᵀ(η))⁻¹p̂ with Aᵀ(η) = Λ(Mᵀ(η))⁻¹.
    let k0 = data.kernel(c(0.0))?;
    let anchor_value = numlin::solve_linear(&(CMatrix::identity(n, n) - k0), &(&p_hat * c(cfg.r)))?;

    let system = FunctionalEquationSystem::new(
        n,
        branches,
        inhom_const,
        inhom_linear,
        n * n,
        Anchor::FixedPointValue {
            point: c(0.0),
            value: anchor_value,
        },
        mu.clone(),
    )?;

    // Points a_i·μ_k at index k·n + i.
    let mut points = Vec::with_capacity(n * n);
    for &mk in &mu {
        for &ai in &cfg.a {
            points.push(mk * ai);
        }
    }
    let d = data.clone();
    let residual = Arc::new(move |z: &[CVector], u: &CVector| {
        let mut out = CVector::zeros(n * n);
        for (k, &mk) in d.mu.iter().enumerate() {
            let l = d.resolvent.cofactor_l(c(d.eta) - mk);
            let mut zb = CVector::zeros(n);
            for i in 0..n {
                zb[i] = d.service[i].lst(mk)? * z[k * n + i][i];
            }
            let lam = numlin::diag(d.lambda.iter().map(|&x| c(d.r * x)));
            let mut row = lam * l * zb;
            let mut power = C64::new(1.0, 0.0);
            for i in 0..n {
                power *= mk;
                for j in 0..n {
                    row[j] += power * u[i * n + j];
                }
            }
            out.rows_mut(k * n, n).copy_from(&row);
        }
        Ok(out)
    });

    Ok(BuiltModel {
        kind: ModelKind::TransientAr,
        system: Arc::new(system),
        constraints: ConstraintSet { points, residual },
        unknown_layout: vec![("C".to_string(), n * n)],
        stationary: None,
        spectra: vec![("nu".to_string(), nu), ("mu".to_string(), mu)],
        warnings,
    })
}
