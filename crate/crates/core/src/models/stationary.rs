//! Stationary Markov-modulated autoregressive model, with and without FGM
//! dependence between service and the next interarrival time.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{c, check_laws, check_len, check_open_unit, check_positive, column_matrix, BuiltModel, ModelKind};
use crate::engine::{Anchor, AffineMap, Branch, ConstraintSet, FunctionalEquationSystem};
use crate::error::{Error, Result};
use crate::numlin::{CMatrix, CVector};
use crate::stochcore::{DtChain, FgmSpec, StateLaw};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryArConfig {
    pub transition: Vec<Vec<f64>>,
    /// Interarrival rate `λⱼ`, selected by the state entered at the arrival.
    pub lambda: Vec<f64>,
    pub service: Vec<StateLaw>,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryFgmConfig {
    pub transition: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub service: Vec<StateLaw>,
    pub a: Vec<f64>,
    /// `θᵢⱼ` couples service in state `i` with the interarrival into state `j`.
    pub theta: Vec<Vec<f64>>,
}

struct Common {
    chain: DtChain,
    lambda: Vec<f64>,
    service: Vec<StateLaw>,
    a: Vec<f64>,
}

fn validate(transition: &[Vec<f64>], lambda: &[f64], service: &[StateLaw], a: &[f64]) -> Result<Common> {
    let chain = DtChain::from_rows(transition)?;
    let n = chain.n();
    check_len("lambda", lambda, n)?;
    check_positive("lambda", lambda)?;
    check_laws("service", service, n)?;
    check_len("a", a, n)?;
    check_open_unit("a", a)?;
    Ok(Common {
        chain,
        lambda: lambda.to_vec(),
        service: service.to_vec(),
        a: a.to_vec(),
    })
}

pub(super) fn build_ar(cfg: &StationaryArConfig) -> Result<BuiltModel> {
    let spec = StationaryFgmConfig {
        transition: cfg.transition.clone(),
        lambda: cfg.lambda.clone(),
        service: cfg.service.clone(),
        a: cfg.a.clone(),
        theta: vec![vec![0.0; cfg.lambda.len()]; cfg.lambda.len()],
    };
    let common = validate(&spec.transition, &spec.lambda, &spec.service, &spec.a)?;
    assemble(common, None, ModelKind::StationaryAr)
}

pub(super) fn build_fgm(cfg: &StationaryFgmConfig) -> Result<BuiltModel> {
    let common = validate(&cfg.transition, &cfg.lambda, &cfg.service, &cfg.a)?;
    let theta = FgmSpec::new(cfg.theta.clone())?;
    check_len("theta", &theta.theta, common.chain.n())?;
    if let Some(law) = common.service.iter().find(|l| !l.is_continuous()) {
        return Err(Error::UnsupportedLaw(format!(
            "FGM dependence needs continuous service laws, got {law:?}"
        )));
    }
    assemble(common, Some(theta), ModelKind::StationaryFgm)
}

/// Shared assembly. Without `theta` the model is the plain AR recursion with
/// `N` unknowns `v`; with `theta` it carries the `2N` unknowns `(v1, v2)`.
fn assemble(common: Common, theta: Option<FgmSpec>, kind: ModelKind) -> Result<BuiltModel> {
    let n = common.chain.n();
    let data = Arc::new(common);
    let theta = theta.map(Arc::new);

    let mut branches = Vec::with_capacity(n);
    for m in 0..n {
        let d = data.clone();
        let th = theta.clone();
        let coeff = Arc::new(move |s: C64| {
            let beta = d.service[m].lst(s)?;
            let g = match &th {
                Some(_) => d.service[m].fgm_gstar(s)?,
                None => C64::new(0.0, 0.0),
            };
            column_matrix(n, m, |j| {
                let lj = c(d.lambda[j]);
                let l1 = lj / (lj - s);
                let mut entry = l1 * beta;
                if let Some(th) = &th {
                    let l2 = 2.0 * lj / (2.0 * lj - s);
                    entry += c(th.theta[m][j]) * g * (l2 - l1);
                }
                Ok(entry * d.chain.prob(m, j))
            })
        });
        branches.push(Branch {
            map: AffineMap::scale(data.a[m]),
            coeff,
        });
    }

    let unknown_dim = if theta.is_some() { 2 * n } else { n };
    let d = data.clone();
    let inhom_linear = Arc::new(move |s: C64| {
        let mut v1 = CMatrix::zeros(n, unknown_dim);
        for j in 0..n {
            let lj = c(d.lambda[j]);
            v1[(j, j)] = -s / (lj - s);
            if unknown_dim > n {
                v1[(j, n + j)] = -s / (2.0 * lj - s);
            }
        }
        Ok(v1)
    });
    let inhom_const = Arc::new(move |_s: C64| Ok(CVector::zeros(n)));

    let mut poles: Vec<C64> = data.lambda.iter().map(|&l| c(l)).collect();
    if theta.is_some() {
        poles.extend(data.lambda.iter().map(|&l| c(2.0 * l)));
    }
    let pi = data.chain.pi.clone();
    let system = FunctionalEquationSystem::new(
        n,
        branches,
        inhom_const,
        inhom_linear,
        unknown_dim,
        Anchor::FixedPointValue {
            point: c(0.0),
            value: pi.clone(),
        },
        poles.clone(),
    )?;

    // Points a_i·λ_j at index i·n + j, then (FGM) 2·a_i·λ_j at n² + i·n + j.
    let mut points = Vec::new();
    for i in 0..n {
        for j in 0..n {
            points.push(c(data.a[i] * data.lambda[j]));
        }
    }
    if theta.is_some() {
        for i in 0..n {
            for j in 0..n {
                points.push(c(2.0 * data.a[i] * data.lambda[j]));
            }
        }
    }
    let d = data.clone();
    let th = theta.clone();
    let residual = Arc::new(move |z: &[CVector], u: &CVector| {
        let mut out = CVector::zeros(unknown_dim);
        for j in 0..n {
            let lj = c(d.lambda[j]);
            let mut acc = u[j];
            for i in 0..n {
                let mut w = d.service[i].lst(lj)?;
                if let Some(th) = &th {
                    w -= c(th.theta[i][j]) * d.service[i].fgm_gstar(lj)?;
                }
                acc -= c(d.chain.prob(i, j)) * w * z[i * n + j][i];
            }
            out[j] = acc;
            if let Some(th) = &th {
                let mut acc = u[n + j];
                for i in 0..n {
                    let g = d.service[i].fgm_gstar(2.0 * lj)?;
                    acc -= c(d.chain.prob(i, j) * th.theta[i][j]) * g * z[n * n + i * n + j][i];
                }
                out[n + j] = acc;
            }
        }
        Ok(out)
    });

    let unknown_layout = if theta.is_some() {
        vec![("v1".to_string(), n), ("v2".to_string(), n)]
    } else {
        vec![("v".to_string(), n)]
    };
    Ok(BuiltModel {
        kind,
        system: Arc::new(system),
        constraints: ConstraintSet { points, residual },
        unknown_layout,
        stationary: Some(pi),
        spectra: vec![("poles".to_string(), poles)],
        warnings: Vec::new(),
    })
}
