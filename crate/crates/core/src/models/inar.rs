//! Integer-valued autoregression with random binomial thinning.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{c, check_laws, check_len, check_open_unit, check_positive, invalid, BuiltModel, ModelKind};
use crate::engine::{Anchor, AffineMap, Branch, ConstraintSet, FunctionalEquationSystem};
use crate::error::Result;
use crate::numlin::{CMatrix, CVector};
use crate::stochcore::{pgf_arrivals_during_service, DtChain, StateLaw};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InarConfig {
    pub transition: Vec<Vec<f64>>,
    /// Poisson arrival rate during a service in state `i`.
    pub lambda: Vec<f64>,
    pub service: Vec<StateLaw>,
    /// Thinning probabilities `a_{i,l}`.
    pub a: Vec<Vec<f64>>,
    /// `q_{i,l} = P(thinning probability a_{i,l} | state i)`; rows sum to one.
    pub q: Vec<Vec<f64>>,
}

/// Base step of the three-level Richardson limit `f(0⁺)`.
pub(super) const ZERO_LIMIT_STEP: f64 = 1e-2;

struct Data {
    chain: DtChain,
    lambda: Vec<f64>,
    service: Vec<StateLaw>,
}

impl Data {
    /// `B_{ij}(z) = p_{ij}·E[z^{arrivals during a state-i service}]`.
    fn b(&self, i: usize, j: usize, z: C64) -> Result<C64> {
        Ok(pgf_arrivals_during_service(&self.service[i], self.lambda[i], z)? * self.chain.prob(i, j))
    }
}

pub(super) fn build(cfg: &InarConfig) -> Result<BuiltModel> {
    let chain = DtChain::from_rows(&cfg.transition)?;
    let n = chain.n();
    check_len("lambda", &cfg.lambda, n)?;
    check_positive("lambda", &cfg.lambda)?;
    check_laws("service", &cfg.service, n)?;
    check_len("a", &cfg.a, n)?;
    check_len("q", &cfg.q, n)?;
    for i in 0..n {
        check_len(&format!("a[{i}]"), &cfg.a[i], n)?;
        check_open_unit(&format!("a[{i}]"), &cfg.a[i])?;
        check_len(&format!("q[{i}]"), &cfg.q[i], n)?;
        let total: f64 = cfg.q[i].iter().sum();
        if cfg.q[i].iter().any(|&x| x < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("q[{i}]"), "must be a probability vector"));
        }
    }

    let data = Arc::new(Data {
        chain,
        lambda: cfg.lambda.clone(),
        service: cfg.service.clone(),
    });

    // Branch (i, l): map z ↦ 1 − a_{il} + a_{il}z feeding component i.
    let mut branches = Vec::with_capacity(n * n);
    for i in 0..n {
        for l in 0..n {
            let d = data.clone();
            let q_il = cfg.q[i][l];
            let coeff = Arc::new(move |z: C64| {
                let mut out = CMatrix::zeros(n, n);
                for j in 0..n {
                    out[(j, i)] = d.b(i, j, z)? * q_il / z;
                }
                Ok(out)
            });
            let a = cfg.a[i][l];
            branches.push(Branch {
                map: AffineMap::new(c(a), c(1.0 - a)),
                coeff,
            });
        }
    }

    let inhom_linear = Arc::new(move |z: C64| Ok(CMatrix::identity(n, n) * (1.0 - 1.0 / z)));
    let inhom_const = Arc::new(move |_z: C64| Ok(CVector::zeros(n)));
    let pi = data.chain.pi.clone();
    let poles = vec![c(0.0)];
    let system = FunctionalEquationSystem::new(
        n,
        branches,
        inhom_const,
        inhom_linear,
        n,
        Anchor::FixedPointValue {
            point: c(1.0),
            value: pi.clone(),
        },
        poles.clone(),
    )?;

    // Points 1 − a_{il} at index i·n + l.
    let mut points = Vec::with_capacity(n * n);
    for i in 0..n {
        for l in 0..n {
            points.push(c(1.0 - cfg.a[i][l]));
        }
    }
    let d = data.clone();
    let q = cfg.q.clone();
    let residual = Arc::new(move |f: &[CVector], u: &CVector| {
        let mut out = u.clone();
        for j in 0..n {
            for i in 0..n {
                let b0 = d.b(i, j, c(0.0))?;
                let thinned: C64 = (0..n).map(|l| f[i * n + l][i] * q[i][l]).sum();
                out[j] -= b0 * thinned;
            }
        }
        Ok(out)
    });

    Ok(BuiltModel {
        kind: ModelKind::Inar,
        system: Arc::new(system),
        constraints: ConstraintSet { points, residual },
        unknown_layout: vec![("q_minus_one".to_string(), n)],
        stationary: Some(pi),
        spectra: vec![("poles".to_string(), poles)],
        warnings: Vec::new(),
    })
}
