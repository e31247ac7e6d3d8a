//! Monte Carlo oracle for every model family.
//!
//! Estimates are built from independent replications, each read at a fixed
//! step, so the standard errors follow from the plain CLT. Replications are
//! grouped into blocks with their own RNG stream; blocks run in parallel and
//! are merged in index order, which makes results independent of the thread
//! count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::models::{
    InarConfig, ModelConfig, ModelKind, StationaryFgmConfig, TransientArConfig,
    WaitDependentConfig,
};
use crate::stochcore::{pick, sample_fgm_pair, CtChain, DtChain, StateLaw};

pub const BLOCK: usize = 1024;
/// Workloads below this count as an empty system.
pub const ATOM_THRESHOLD: f64 = 1e-9;
/// Transient sums stop once `|r|ⁿ` falls below this.
pub const TRANSIENT_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimPlan {
    pub config: ModelConfig,
    pub replications: usize,
    pub steps: usize,
    /// Start of the window used by the drift diagnostic.
    pub warmup: usize,
    pub seed: u64,
    /// Real `s ≥ 0`, or `z ∈ [0, 1]` for INAR.
    pub grid: Vec<f64>,
}

impl SimPlan {
    pub fn new(config: ModelConfig, grid: Vec<f64>) -> Self {
        Self {
            config,
            replications: 100_000,
            steps: 500,
            warmup: 375,
            seed: 1,
            grid,
        }
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    /// Sets the step count and puts the drift window on its last quarter.
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self.warmup = steps - steps / 4;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if self.warmup >= self.steps {
            return Err(invalid("warmup", "must be below steps"));
        }
        let pgf = self.config.kind().is_pgf();
        for &x in &self.grid {
            let ok = if pgf { (0.0..=1.0).contains(&x) } else { x >= 0.0 && x.is_finite() };
            if !ok {
                return Err(Error::DomainError(format!("grid point {x} outside the real domain")));
            }
        }
        Ok(())
    }
}

fn invalid(field: &str, reason: &str) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std_error: f64,
    pub count: u64,
}

impl Stat {
    fn from_sums(sum: f64, sum_sq: f64, count: u64) -> Self {
        let n = count as f64;
        let mean = sum / n;
        let var = if count > 1 {
            ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n).sqrt(),
            count,
        }
    }

    /// `(x − mean)/std_error`, with a zero error treated as exact agreement
    /// only when the values coincide.
    pub fn z_score(&self, x: f64) -> f64 {
        let d = x - self.mean;
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY * d.signum()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationEstimate {
    pub kind: ModelKind,
    pub grid: Vec<f64>,
    pub states: usize,
    /// `transform[p][j]` estimates `E[e^{−s_p W}·1{Y = j}]` (or the transient
    /// sum, or `E[z_p^X·1{Z = j}]`).
    pub transform: Vec<Vec<Stat>>,
    pub state_frequency: Vec<Stat>,
    /// `P(W < ATOM_THRESHOLD, Y = j)`; empty for the transient model.
    pub atoms: Vec<Stat>,
    pub first_moment: Vec<Stat>,
    pub second_moment: Vec<Stat>,
    /// Mean per-step workload increment over the drift window.
    pub drift: Option<Stat>,
    pub warnings: Vec<Warning>,
}

/// Prepared, validated dynamics of one model.
enum Dynamics {
    Transient {
        chain: CtChain,
        service: Vec<StateLaw>,
        a: Vec<f64>,
        r: f64,
        eta: f64,
        w: f64,
        p_hat: Vec<f64>,
    },
    Ar {
        chain: DtChain,
        lambda: Vec<f64>,
        service: Vec<StateLaw>,
        a: Vec<f64>,
        theta: Option<Vec<Vec<f64>>>,
    },
    ShotNoise {
        chain: DtChain,
        service: Vec<StateLaw>,
        a: Vec<f64>,
        p: f64,
        positive: Option<Vec<StateLaw>>,
        nu: Vec<f64>,
    },
    WaitDependent {
        chain: DtChain,
        lambda: Vec<f64>,
        mu: Vec<f64>,
        c: f64,
    },
    Inar {
        chain: DtChain,
        lambda: Vec<f64>,
        service: Vec<StateLaw>,
        a: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
    },
}

impl Dynamics {
    fn new(config: &ModelConfig) -> Result<Self> {
        // Building the model runs the full parameter validation.
        config.build()?;
        Ok(match config {
            ModelConfig::TransientAr(TransientArConfig {
                generator,
                lambda,
                service,
                a,
                r,
                eta,
                w,
                initial,
            }) => {
                let chain = CtChain::from_rows(generator, lambda)?;
                let p_hat = match initial {
                    Some(p) => p.clone(),
                    None => chain.stationary()?.iter().map(|z| z.re).collect(),
                };
                Dynamics::Transient {
                    chain,
                    service: service.clone(),
                    a: a.clone(),
                    r: *r,
                    eta: *eta,
                    w: *w,
                    p_hat,
                }
            }
            ModelConfig::StationaryAr(c) => Dynamics::Ar {
                chain: DtChain::from_rows(&c.transition)?,
                lambda: c.lambda.clone(),
                service: c.service.clone(),
                a: c.a.clone(),
                theta: None,
            },
            ModelConfig::StationaryFgm(StationaryFgmConfig {
                transition,
                lambda,
                service,
                a,
                theta,
            }) => Dynamics::Ar {
                chain: DtChain::from_rows(transition)?,
                lambda: lambda.clone(),
                service: service.clone(),
                a: a.clone(),
                theta: Some(theta.clone()),
            },
            ModelConfig::ShotNoise(c) => Dynamics::ShotNoise {
                chain: DtChain::from_rows(&c.transition)?,
                service: c.service.clone(),
                a: c.factors(),
                p: c.p,
                positive: c.positive_noise.clone(),
                nu: c.negative_rate.clone(),
            },
            ModelConfig::WaitDependent(WaitDependentConfig {
                transition,
                lambda,
                mu,
                c,
            }) => Dynamics::WaitDependent {
                chain: DtChain::from_rows(transition)?,
                lambda: lambda.clone(),
                mu: mu.clone(),
                c: *c,
            },
            ModelConfig::Inar(InarConfig {
                transition,
                lambda,
                service,
                a,
                q,
            }) => Dynamics::Inar {
                chain: DtChain::from_rows(transition)?,
                lambda: lambda.clone(),
                service: service.clone(),
                a: a.clone(),
                q: q.clone(),
            },
        })
    }

    fn stationary_chain(&self) -> Option<&DtChain> {
        match self {
            Dynamics::Transient { .. } => None,
            Dynamics::Ar { chain, .. }
            | Dynamics::ShotNoise { chain, .. }
            | Dynamics::WaitDependent { chain, .. }
            | Dynamics::Inar { chain, .. } => Some(chain),
        }
    }

    /// One transition `(W, Y) → (W', Y')` of a stationary-kind recursion.
    fn step<R: Rng>(&self, w: f64, y: usize, rng: &mut R) -> Result<(f64, usize)> {
        match self {
            Dynamics::Ar {
                chain,
                lambda,
                service,
                a,
                theta,
            } => {
                let next = chain.step(y, rng);
                let (s, arrival) = match theta {
                    None => (service[y].sample(rng), exp(lambda[next], rng)),
                    Some(th) => sample_fgm_pair(
                        &service[y],
                        &StateLaw::Exponential { rate: lambda[next] },
                        th[y][next],
                        rng,
                    )?,
                };
                Ok(((a[y] * w + s - arrival).max(0.0), next))
            }
            Dynamics::ShotNoise {
                chain,
                service,
                a,
                p,
                positive,
                nu,
            } => {
                let decayed = a[y] * (w + service[y].sample(rng));
                let next = chain.step(y, rng);
                let noise = if rng.random::<f64>() < *p {
                    positive.as_ref().map_or(0.0, |laws| laws[next].sample(rng))
                } else {
                    -exp(nu[next], rng)
                };
                Ok(((decayed + noise).max(0.0), next))
            }
            Dynamics::WaitDependent { chain, lambda, mu, c } => {
                let s = exp(mu[y], rng);
                let next = chain.step(y, rng);
                let arrival = exp(lambda[next], rng);
                Ok(((w + (s - c * w).max(0.0) - arrival).max(0.0), next))
            }
            Dynamics::Inar {
                chain,
                lambda,
                service,
                a,
                q,
            } => {
                let l = pick(&q[y], rng);
                let survivors = Binomial::new(w as u64, a[y][l])
                    .map_err(|e| Error::NumericalInstability(e.to_string()))?
                    .sample(rng);
                let mean_arrivals = lambda[y] * service[y].sample(rng);
                let arrivals = if mean_arrivals > 0.0 {
                    let poisson: f64 = Poisson::new(mean_arrivals)
                        .map_err(|e| Error::NumericalInstability(e.to_string()))?
                        .sample(rng);
                    poisson as u64
                } else {
                    0
                };
                let next = chain.step(y, rng);
                Ok(((survivors + arrivals).saturating_sub(1) as f64, next))
            }
            Dynamics::Transient { .. } => unreachable!("transient runs use replicate_transient"),
        }
    }
}

fn exp<R: Rng>(rate: f64, rng: &mut R) -> f64 {
    Exp::new(rate).expect("validated rate").sample(rng)
}

struct Layout {
    grid: usize,
    states: usize,
}

impl Layout {
    fn transform(&self, p: usize, j: usize) -> usize {
        p * self.states + j
    }
    fn freq(&self, j: usize) -> usize {
        self.grid * self.states + j
    }
    fn atom(&self, j: usize) -> usize {
        self.freq(self.states) + j
    }
    fn m1(&self, j: usize) -> usize {
        self.atom(self.states) + j
    }
    fn m2(&self, j: usize) -> usize {
        self.m1(self.states) + j
    }
    fn drift(&self) -> usize {
        self.m2(self.states)
    }
    fn len(&self) -> usize {
        self.drift() + 1
    }
}

fn replicate_stationary<R: Rng>(
    dynamics: &Dynamics,
    plan: &SimPlan,
    layout: &Layout,
    pgf: bool,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    let chain = dynamics.stationary_chain().expect("stationary dynamics");
    let mut y = chain.sample_stationary(rng);
    let mut w = 0.0;
    let mut mark = 0.0;
    for step in 1..=plan.steps {
        let (w2, y2) = dynamics.step(w, y, rng)?;
        w = w2;
        y = y2;
        if step == plan.warmup {
            mark = w;
        }
    }
    for (p, &x) in plan.grid.iter().enumerate() {
        out[layout.transform(p, y)] = if pgf { x.powf(w) } else { (-x * w).exp() };
    }
    out[layout.freq(y)] = 1.0;
    if w < ATOM_THRESHOLD {
        out[layout.atom(y)] = 1.0;
    }
    out[layout.m1(y)] = w;
    out[layout.m2(y)] = w * w;
    out[layout.drift()] = (w - mark) / (plan.steps - plan.warmup) as f64;
    Ok(())
}

fn transient_horizon(r: f64) -> usize {
    if r == 0.0 {
        1
    } else {
        (TRANSIENT_CUTOFF.ln() / r.abs().ln()).ceil().max(1.0) as usize
    }
}

fn replicate_transient<R: Rng>(
    dynamics: &Dynamics,
    plan: &SimPlan,
    layout: &Layout,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    let Dynamics::Transient {
        chain,
        service,
        a,
        r,
        eta,
        w: w0,
        p_hat,
    } = dynamics
    else {
        unreachable!()
    };
    let horizon = transient_horizon(*r);
    let mut y = pick(p_hat, rng);
    let (mut w, mut t) = (*w0, 0.0);
    let mut rn = 1.0;
    for n in 1..=horizon {
        rn *= r;
        for (p, &s) in plan.grid.iter().enumerate() {
            out[layout.transform(p, y)] += rn * (-s * w - eta * t).exp();
        }
        if n == horizon {
            break;
        }
        let s = service[y].sample(rng);
        let (gap, next) = chain.next_arrival(y, rng);
        w = (a[y] * w + s - gap).max(0.0);
        t += gap;
        y = next;
    }
    out[layout.freq(y)] = 1.0;
    Ok(())
}

/// Run the plan and return per-cell estimates with standard errors.
pub fn simulate(plan: &SimPlan) -> Result<SimulationEstimate> {
    plan.validate()?;
    let dynamics = Dynamics::new(&plan.config)?;
    let kind = plan.config.kind();
    let states = plan.config.states();
    let layout = Layout {
        grid: plan.grid.len(),
        states,
    };
    let width = layout.len();
    let blocks = plan.replications.div_ceil(BLOCK);

    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream(b as u64);
            let reps = BLOCK.min(plan.replications - b * BLOCK);
            let mut sum = vec![0.0; width];
            let mut sum_sq = vec![0.0; width];
            let mut out = vec![0.0; width];
            for _ in 0..reps {
                out.iter_mut().for_each(|x| *x = 0.0);
                if kind == ModelKind::TransientAr {
                    replicate_transient(&dynamics, plan, &layout, &mut rng, &mut out)?;
                } else {
                    replicate_stationary(&dynamics, plan, &layout, kind.is_pgf(), &mut rng, &mut out)?;
                }
                for k in 0..width {
                    sum[k] += out[k];
                    sum_sq[k] += out[k] * out[k];
                }
            }
            Ok((sum, sum_sq))
        })
        .collect::<Result<_>>()?;

    let mut sum = vec![0.0; width];
    let mut sum_sq = vec![0.0; width];
    for (s, q) in &partials {
        for k in 0..width {
            sum[k] += s[k];
            sum_sq[k] += q[k];
        }
    }
    let count = plan.replications as u64;
    let stat = |k: usize| Stat::from_sums(sum[k], sum_sq[k], count);
    let per_state = |f: &dyn Fn(usize) -> usize| (0..states).map(|j| stat(f(j))).collect::<Vec<_>>();

    let transform = (0..plan.grid.len())
        .map(|p| per_state(&|j| layout.transform(p, j)))
        .collect();
    let stationary = kind != ModelKind::TransientAr;
    let mut warnings = Vec::new();
    let drift = stationary.then(|| stat(layout.drift()));
    if let Some(d) = drift {
        if d.mean > 3.0 * d.std_error {
            warnings.push(
                Warning::Drift {
                    mean_increment: d.mean,
                    std_error: d.std_error,
                }
                .emit(),
            );
        }
    }
    let when = |v: Vec<Stat>| if stationary { v } else { Vec::new() };
    Ok(SimulationEstimate {
        kind,
        grid: plan.grid.clone(),
        states,
        transform,
        state_frequency: per_state(&|j| layout.freq(j)),
        atoms: when(per_state(&|j| layout.atom(j))),
        first_moment: when(per_state(&|j| layout.m1(j))),
        second_moment: when(per_state(&|j| layout.m2(j))),
        drift,
        warnings,
    })
}
