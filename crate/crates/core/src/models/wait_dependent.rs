//! Queue whose service is reduced by `c` times the waiting time.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{c, check_len, check_positive, invalid, BuiltModel, ModelKind};
use crate::engine::{Anchor, AffineMap, Branch, ConstraintSet, FunctionalEquationSystem};
use crate::error::Result;
use crate::numlin::{self, CMatrix, CVector};
use crate::stochcore::DtChain;
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitDependentConfig {
    pub transition: Vec<Vec<f64>>,
    /// Interarrival rate in the arriving state.
    pub lambda: Vec<f64>,
    /// Exponential service rate in the current state.
    pub mu: Vec<f64>,
    pub c: f64,
}

struct Data {
    lambda: Vec<f64>,
    mu: Vec<f64>,
    /// `ΛPᵀ`.
    lp: CMatrix,
    /// `Λ(I − Pᵀ)`.
    generator: CMatrix,
}

impl Data {
    /// `D(s)⁻¹ = (sI − Λ(I − Pᵀ))⁻¹`.
    fn d_inverse(&self, s: C64) -> Result<CMatrix> {
        let n = self.lambda.len();
        numlin::inverse(&(CMatrix::identity(n, n) * s - &self.generator))
    }
}

pub(super) fn build(cfg: &WaitDependentConfig) -> Result<BuiltModel> {
    let chain = DtChain::from_rows(&cfg.transition)?;
    let n = chain.n();
    check_len("lambda", &cfg.lambda, n)?;
    check_positive("lambda", &cfg.lambda)?;
    check_len("mu", &cfg.mu, n)?;
    check_positive("mu", &cfg.mu)?;
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(invalid("c", format!("must be positive, got {}", cfg.c)));
    }

    let gamma = numlin::gamma_eigenvalues(&cfg.lambda, &chain.p)?;
    let lam = numlin::diag(cfg.lambda.iter().map(|&l| c(l)));
    let lp = &lam * chain.p.transpose();
    let generator = &lam - &lp;
    let data = Arc::new(Data {
        lambda: cfg.lambda.clone(),
        mu: cfg.mu.clone(),
        lp,
        generator,
    });

    let mut branches = Vec::with_capacity(n);
    for k in 0..n {
        let d = data.clone();
        let coeff = Arc::new(move |s: C64| {
            let g = d.d_inverse(s)? * &d.lp;
            let weight = s / (d.mu[k] + s);
            let mut out = CMatrix::zeros(n, n);
            out.set_column(k, &(g.column(k) * weight));
            Ok(out)
        });
        branches.push(Branch {
            map: AffineMap::shift(cfg.mu[k] * cfg.c),
            coeff,
        });
    }

    let d = data.clone();
    let inhom_linear = Arc::new(move |s: C64| Ok(d.d_inverse(s)? * s));
    let inhom_const = Arc::new(move |_s: C64| Ok(CVector::zeros(n)));

    let poles = gamma.values.clone();
    let system = FunctionalEquationSystem::new(
        n,
        branches,
        inhom_const,
        inhom_linear,
        n,
        Anchor::DecayAtInfinity,
        poles.clone(),
    )?;

    // Residue conditions: for every nonzero γ with left eigenvector y, the
    // numerator of Z at γ must be annihilated by y. Points γ + μᵢc sit at index
    // l·n + i over the nonzero eigenvalues.
    let left = gamma.left_vectors.clone().expect("eig returns left vectors");
    let nonzero: Vec<(C64, CVector)> = gamma
        .values
        .iter()
        .zip(left)
        .filter(|(g, _)| g.norm() > 0.0)
        .map(|(g, y)| {
            let scale = numlin::vec_norm_inf(&y);
            (*g, y / c(scale))
        })
        .collect();
    let mut points = Vec::new();
    for (g, _) in &nonzero {
        for &mu in &cfg.mu {
            points.push(g + mu * cfg.c);
        }
    }
    // Normalization through the left null vector 𝟙Λ⁻¹ as s → 0 (mean drift zero):
    // Σⱼ vⱼ/λⱼ + Σᵢ Zᵢ(μᵢc)/μᵢ = Σⱼ πⱼ/λⱼ. Points μᵢc follow the residue points.
    let norm_base = points.len();
    points.extend(cfg.mu.iter().map(|&mu| c(mu * cfg.c)));
    let pi = chain.pi.clone();
    let mean_interarrival: f64 = (0..n).map(|j| pi[j].re / cfg.lambda[j]).sum();

    let d = data.clone();
    let residual = Arc::new(move |z: &[CVector], u: &CVector| {
        let mut out = CVector::zeros(nonzero.len() + 1);
        for (l, (g, y)) in nonzero.iter().enumerate() {
            let mut w = CVector::zeros(n);
            for i in 0..n {
                w[i] = g / (d.mu[i] + g) * z[l * n + i][i];
            }
            let numerator = u * *g + &d.lp * w;
            out[l] = (y.transpose() * numerator)[0];
        }
        let mut balance = c(-mean_interarrival);
        for j in 0..n {
            balance += u[j] / d.lambda[j] + z[norm_base + j][j] / d.mu[j];
        }
        out[nonzero.len()] = balance;
        Ok(out)
    });

    Ok(BuiltModel {
        kind: ModelKind::WaitDependent,
        system: Arc::new(system),
        constraints: ConstraintSet { points, residual },
        unknown_layout: vec![("v".to_string(), n)],
        stationary: Some(chain.pi.clone()),
        spectra: vec![("gamma".to_string(), poles)],
        warnings: gamma.warnings,
    })
}
