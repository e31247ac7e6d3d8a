//! Shot-noise recursion with exponential decay between deterministic epochs
//! and two-sided noise at each epoch.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{c, check_laws, check_len, check_positive, column_matrix, invalid, BuiltModel, ModelKind};
use crate::engine::{Anchor, AffineMap, Branch, ConstraintSet, FunctionalEquationSystem};
use crate::error::Result;
use crate::numlin::{CMatrix, CVector};
use crate::stochcore::{DtChain, StateLaw};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseConfig {
    pub transition: Vec<Vec<f64>>,
    /// Jump added at an epoch in state `i`, before the decay.
    pub service: Vec<StateLaw>,
    /// Deterministic time until the next epoch, selected by the current state.
    pub t: Vec<f64>,
    /// Decay rate of the content between epochs.
    pub speed: f64,
    /// Probability of positive noise; negative noise occurs with `q = 1 − p`.
    pub p: f64,
    /// Positive noise law per arriving state; absent means zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_noise: Option<Vec<StateLaw>>,
    /// Negative noise is exponential with rate `νⱼ` in the arriving state.
    #[serde(default)]
    pub negative_rate: Vec<f64>,
}

impl ShotNoiseConfig {
    /// Contraction factors `aᵢ = e^{−speed·tᵢ}`.
    pub fn factors(&self) -> Vec<f64> {
        self.t.iter().map(|&t| (-self.speed * t).exp()).collect()
    }
}

struct Data {
    chain: DtChain,
    service: Vec<StateLaw>,
    a: Vec<f64>,
    p: f64,
    positive: Option<Vec<StateLaw>>,
    nu: Vec<f64>,
}

impl Data {
    fn q(&self) -> f64 {
        1.0 - self.p
    }

    /// `p·c⁺ⱼ(s) + q·νⱼ/(νⱼ − s)`.
    fn noise(&self, j: usize, s: C64) -> Result<C64> {
        let pos = match &self.positive {
            Some(laws) => laws[j].lst(s)?,
            None => C64::new(1.0, 0.0),
        };
        let mut out = pos * self.p;
        if self.q() > 0.0 {
            let nu = c(self.nu[j]);
            out += self.q() * nu / (nu - s);
        }
        Ok(out)
    }
}

pub(super) fn build(cfg: &ShotNoiseConfig) -> Result<BuiltModel> {
    let chain = DtChain::from_rows(&cfg.transition)?;
    let n = chain.n();
    check_laws("service", &cfg.service, n)?;
    check_len("t", &cfg.t, n)?;
    check_positive("t", &cfg.t)?;
    if !(cfg.speed > 0.0 && cfg.speed.is_finite()) {
        return Err(invalid("speed", format!("must be positive, got {}", cfg.speed)));
    }
    if !(0.0..=1.0).contains(&cfg.p) {
        return Err(invalid("p", format!("must lie in [0, 1], got {}", cfg.p)));
    }
    if let Some(laws) = &cfg.positive_noise {
        check_laws("positive_noise", laws, n)?;
    }
    let has_negative = cfg.p < 1.0;
    if has_negative {
        check_len("negative_rate", &cfg.negative_rate, n)?;
        check_positive("negative_rate", &cfg.negative_rate)?;
    }

    let data = Arc::new(Data {
        chain,
        service: cfg.service.clone(),
        a: cfg.factors(),
        p: cfg.p,
        positive: cfg.positive_noise.clone(),
        nu: cfg.negative_rate.clone(),
    });

    let mut branches = Vec::with_capacity(n);
    for m in 0..n {
        let d = data.clone();
        let coeff = Arc::new(move |s: C64| {
            let beta = d.service[m].lst(s * d.a[m])?;
            column_matrix(n, m, |j| Ok(d.noise(j, s)? * d.chain.prob(m, j) * beta))
        });
        branches.push(Branch {
            map: AffineMap::scale(data.a[m]),
            coeff,
        });
    }

    let unknown_dim = if has_negative { n } else { 0 };
    let d = data.clone();
    let inhom_linear = Arc::new(move |s: C64| {
        let mut v1 = CMatrix::zeros(n, unknown_dim);
        for j in 0..unknown_dim {
            let nu = c(d.nu[j]);
            v1[(j, j)] = d.q() * (-s / (nu - s));
        }
        Ok(v1)
    });
    let inhom_const = Arc::new(move |_s: C64| Ok(CVector::zeros(n)));

    let poles: Vec<C64> = if has_negative {
        data.nu.iter().map(|&v| c(v)).collect()
    } else {
        Vec::new()
    };
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

    let (constraints, unknown_layout) = if has_negative {
        // Points νⱼ·aᵢ at index i·n + j.
        let mut points = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                points.push(c(data.nu[j] * data.a[i]));
            }
        }
        let d = data.clone();
        let residual = Arc::new(move |z: &[CVector], u: &CVector| {
            let mut out = u.clone();
            for j in 0..n {
                for i in 0..n {
                    let beta = d.service[i].lst(c(d.nu[j] * d.a[i]))?;
                    out[j] -= beta * d.chain.prob(i, j) * z[i * n + j][i];
                }
            }
            Ok(out)
        });
        (ConstraintSet { points, residual }, vec![("r".to_string(), n)])
    } else {
        (ConstraintSet::none(), Vec::new())
    };

    Ok(BuiltModel {
        kind: ModelKind::ShotNoise,
        system: Arc::new(system),
        constraints,
        unknown_layout,
        stationary: Some(pi),
        spectra: vec![("poles".to_string(), poles)],
        warnings: Vec::new(),
    })
}
