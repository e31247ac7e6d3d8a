//! Background chains and per-state laws.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::{self, CMatrix, CVector};
use crate::C64;

/// Continuous-time modulating chain with per-state arrival rates.
#[derive(Debug, Clone)]
pub struct CtChain {
    pub q: CMatrix,
    pub lambda: Vec<f64>,
}

impl CtChain {
    pub fn new(q: CMatrix, lambda: Vec<f64>) -> Result<Self> {
        numlin::check_generator(&q)?;
        if lambda.len() != q.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} arrival rates for a {}-state generator",
                lambda.len(),
                q.nrows()
            )));
        }
        check_positive_all("lambda", &lambda)?;
        Ok(Self { q, lambda })
    }

    pub fn from_rows(q: &[Vec<f64>], lambda: &[f64]) -> Result<Self> {
        Self::new(numlin::real_matrix(q)?, lambda.to_vec())
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    /// Stationary distribution of the generator (solves `πQ = 0`, `π𝟙 = 1`).
    pub fn stationary(&self) -> Result<CVector> {
        let n = self.n();
        let mut a = self.q.transpose();
        for j in 0..n {
            a[(n - 1, j)] = C64::new(1.0, 0.0);
        }
        let mut b = CVector::zeros(n);
        b[n - 1] = C64::new(1.0, 0.0);
        numlin::solve_linear(&a, &b).map_err(|e| match e {
            Error::SingularMatrix { .. } => Error::Reducible,
            other => other,
        })
    }

    /// Advance from `state` to the next arrival epoch with competing exponential
    /// clocks. Returns the elapsed time and the state in which the arrival occurred.
    pub fn next_arrival<R: Rng + ?Sized>(&self, mut state: usize, rng: &mut R) -> (f64, usize) {
        let mut elapsed = 0.0;
        loop {
            let leave = -self.q[(state, state)].re;
            let total = self.lambda[state] + leave;
            elapsed += exp_variate(total, rng);
            let mut u = rng.random::<f64>() * total;
            if u < self.lambda[state] {
                return (elapsed, state);
            }
            u -= self.lambda[state];
            let mut next = state;
            for j in 0..self.n() {
                if j == state {
                    continue;
                }
                let rate = self.q[(state, j)].re;
                next = j;
                if u < rate {
                    break;
                }
                u -= rate;
            }
            state = next;
        }
    }
}

/// Discrete-time modulating chain.
#[derive(Debug, Clone)]
pub struct DtChain {
    pub p: CMatrix,
    pub pi: CVector,
}

impl DtChain {
    pub fn new(p: CMatrix) -> Result<Self> {
        numlin::check_stochastic(&p)?;
        if !irreducible(&p) {
            return Err(Error::Reducible);
        }
        let pi = numlin::stationary_distribution(&p)?;
        Ok(Self { p, pi })
    }

    pub fn from_rows(p: &[Vec<f64>]) -> Result<Self> {
        Self::new(numlin::real_matrix(p)?)
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.p[(i, j)].re
    }

    pub fn pi_real(&self) -> Vec<f64> {
        self.pi.iter().map(|z| z.re).collect()
    }

    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row: Vec<f64> = (0..self.n()).map(|j| self.prob(state, j)).collect();
        pick(&row, rng)
    }

    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        pick(&self.pi_real(), rng)
    }
}

/// Index drawn from a probability vector by inversion.
pub fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>();
    let mut last = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = j;
        if u < w {
            return j;
        }
        u -= w;
    }
    last
}

fn irreducible(p: &CMatrix) -> bool {
    let n = p.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { p[(i, j)] } else { p[(j, i)] };
                if w.re > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

fn check_positive_all(field: &str, values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        check_positive(&format!("{field}[{i}]"), v)?;
    }
    Ok(())
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            field: field.to_string(),
            reason: format!("must be positive and finite, got {v}"),
        })
    }
}

fn exp_variate<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    Exp::new(rate).expect("validated rate").sample(rng)
}

/// A nonnegative per-state law with closed-form transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateLaw {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Deterministic { value: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<f64> },
}

impl StateLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            StateLaw::Exponential { rate } => check_positive("rate", *rate),
            StateLaw::Erlang { shape, rate } => {
                if *shape == 0 {
                    return Err(Error::InvalidParameter {
                        field: "shape".into(),
                        reason: "Erlang shape must be at least 1".into(),
                    });
                }
                check_positive("rate", *rate)
            }
            StateLaw::Deterministic { value } => check_positive("value", *value),
            StateLaw::HyperExponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(Error::InvalidParameter {
                        field: "weights".into(),
                        reason: "weights and rates must be non-empty and of equal length".into(),
                    });
                }
                check_positive_all("weights", weights)?;
                check_positive_all("rates", rates)?;
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter {
                        field: "weights".into(),
                        reason: format!("weights must sum to one, got {total}"),
                    });
                }
                Ok(())
            }
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, StateLaw::Deterministic { .. })
    }

    pub fn mean(&self) -> f64 {
        match self {
            StateLaw::Exponential { rate } => 1.0 / rate,
            StateLaw::Erlang { shape, rate } => *shape as f64 / rate,
            StateLaw::Deterministic { value } => *value,
            StateLaw::HyperExponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w / r).sum()
            }
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            StateLaw::Exponential { rate } => 2.0 / (rate * rate),
            StateLaw::Erlang { shape, rate } => {
                let k = *shape as f64;
                k * (k + 1.0) / (rate * rate)
            }
            StateLaw::Deterministic { value } => value * value,
            StateLaw::HyperExponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| 2.0 * w / (r * r)).sum()
            }
        }
    }

    /// Laplace–Stieltjes transform `E e^{−sX}`.
    pub fn lst(&self, s: C64) -> Result<C64> {
        if let StateLaw::Deterministic { value } = self {
            return Ok((-s * value).exp());
        }
        if s.re < -1e-12 * (1.0 + s.norm()) {
            return Err(Error::DomainError(format!("LST evaluated at Re(s) = {} < 0", s.re)));
        }
        if s == C64::new(0.0, 0.0) {
            return Ok(C64::new(1.0, 0.0));
        }
        Ok(self.lst_unchecked(s))
    }

    /// Transform formula without the half-plane check; it is the analytic
    /// continuation wherever the formula itself is finite.
    pub fn lst_unchecked(&self, s: C64) -> C64 {
        match self {
            StateLaw::Exponential { rate } => rate / (rate + s),
            StateLaw::Erlang { shape, rate } => (rate / (rate + s)).powu(*shape),
            StateLaw::Deterministic { value } => (-s * value).exp(),
            StateLaw::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / (r + s))
                .sum(),
        }
    }

    /// Transform of `g(y) = f(y)(1 − 2F(y))`, the FGM auxiliary density.
    pub fn fgm_gstar(&self, s: C64) -> Result<C64> {
        if s.re < -1e-12 * (1.0 + s.norm()) {
            return Err(Error::DomainError(format!("g* evaluated at Re(s) = {} < 0", s.re)));
        }
        let one = C64::new(1.0, 0.0);
        match self {
            StateLaw::Exponential { rate } => {
                Ok(2.0 * rate / (s + 2.0 * rate) - rate / (s + rate))
            }
            StateLaw::Erlang { shape, rate } => {
                // g = 2f(1 − F) − f with 1 − F a truncated Poisson sum.
                let k = *shape;
                let x = rate / (s + 2.0 * rate);
                let mut binom = 1.0; // C(k−1+n, n)
                let mut xp = x.powu(k);
                let mut tail = C64::new(0.0, 0.0);
                for n in 0..k {
                    if n > 0 {
                        binom *= (k - 1 + n) as f64 / n as f64;
                        xp *= x;
                    }
                    tail += xp * binom;
                }
                Ok(2.0 * tail - (rate / (rate + s)).powu(k) * one)
            }
            StateLaw::HyperExponential { weights, rates } => {
                let mut tail = C64::new(0.0, 0.0);
                for (wm, mm) in weights.iter().zip(rates) {
                    for (wl, ml) in weights.iter().zip(rates) {
                        tail += wm * wl * mm / (s + mm + ml);
                    }
                }
                Ok(2.0 * tail - self.lst_unchecked(s))
            }
            StateLaw::Deterministic { .. } => Err(Error::UnsupportedLaw(
                "FGM auxiliary transform needs a continuous law".into(),
            )),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return if let StateLaw::Deterministic { value } = self {
                if x >= *value { 1.0 } else { 0.0 }
            } else {
                0.0
            };
        }
        match self {
            StateLaw::Exponential { rate } => -(-rate * x).exp_m1(),
            StateLaw::Erlang { shape, rate } => 1.0 - erlang_survival(*shape, rate * x),
            StateLaw::Deterministic { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            StateLaw::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| -w * (-r * x).exp_m1())
                .sum(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            StateLaw::Exponential { rate } => rate * (-rate * x).exp(),
            StateLaw::Erlang { shape, rate } => {
                let k = *shape as f64;
                if x == 0.0 {
                    return if *shape == 1 { *rate } else { 0.0 };
                }
                (k * rate.ln() + (k - 1.0) * x.ln() - rate * x - ln_factorial(*shape - 1)).exp()
            }
            StateLaw::Deterministic { .. } => 0.0,
            StateLaw::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r * (-r * x).exp())
                .sum(),
        }
    }

    /// Quantile function. Erlang and hyperexponential laws are inverted numerically.
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::DomainError(format!("quantile level {u} outside [0, 1)")));
        }
        match self {
            StateLaw::Exponential { rate } => Ok(-(-u).ln_1p() / rate),
            StateLaw::Deterministic { .. } => Err(Error::UnsupportedLaw(
                "a point mass has no continuous quantile function".into(),
            )),
            _ => Ok(self.invert_numerically(u)),
        }
    }

    fn invert_numerically(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        let mut lo = 0.0;
        let mut hi = self.mean().max(f64::MIN_POSITIVE);
        while self.cdf(hi) < u {
            lo = hi;
            hi *= 2.0;
        }
        // Newton iterations kept inside the bracket, bisecting when they leave it.
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.cdf(x) - u;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.pdf(x);
            let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
                return next;
            }
            x = next;
        }
        x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            StateLaw::Exponential { rate } => exp_variate(*rate, rng),
            StateLaw::Erlang { shape, rate } => Gamma::new(*shape as f64, 1.0 / rate)
                .expect("validated Erlang parameters")
                .sample(rng),
            StateLaw::Deterministic { value } => *value,
            StateLaw::HyperExponential { weights, rates } => {
                exp_variate(rates[pick(weights, rng)], rng)
            }
        }
    }
}

fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `P(Poisson(x) < k)`, i.e. the Erlang(k) survival function at `x/rate`.
fn erlang_survival(k: u32, x: f64) -> f64 {
    let mut term = (-x).exp();
    let mut acc = term;
    for n in 1..k {
        term *= x / n as f64;
        acc += term;
    }
    acc.min(1.0)
}

/// PGF of Poisson(`rate`) arrivals during a service drawn from `law`.
pub fn pgf_arrivals_during_service(law: &StateLaw, rate: f64, z: C64) -> Result<C64> {
    if z.norm() > 1.0 + 1e-12 {
        return Err(Error::DomainError(format!("PGF evaluated at |z| = {} > 1", z.norm())));
    }
    if z == C64::new(1.0, 0.0) {
        return Ok(C64::new(1.0, 0.0));
    }
    law.lst(rate * (1.0 - z))
}

/// FGM dependence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FgmSpec {
    pub theta: Vec<Vec<f64>>,
}

impl FgmSpec {
    pub fn new(theta: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in theta.iter().enumerate() {
            if row.len() != theta.len() {
                return Err(Error::DimensionMismatch("theta must be square".into()));
            }
            for (j, &t) in row.iter().enumerate() {
                if !(-1.0..=1.0).contains(&t) {
                    return Err(Error::InvalidParameter {
                        field: format!("theta[{i}][{j}]"),
                        reason: format!("must lie in [-1, 1], got {t}"),
                    });
                }
            }
        }
        Ok(Self { theta })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            theta: vec![vec![0.0; n]; n],
        }
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }
}

/// Draw `(S, A)` whose joint law is the FGM copula of the two marginals.
pub fn sample_fgm_pair<R: Rng + ?Sized>(
    law_s: &StateLaw,
    law_a: &StateLaw,
    theta: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let StateLaw::Exponential { rate: lambda } = law_a else {
        return Err(Error::UnsupportedLaw("FGM interarrival law must be exponential".into()));
    };
    if !law_s.is_continuous() {
        return Err(Error::UnsupportedLaw("FGM service law must be continuous".into()));
    }
    if !(-1.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter {
            field: "theta".into(),
            reason: format!("must lie in [-1, 1], got {theta}"),
        });
    }
    let u = rng.random::<f64>();
    let w = rng.random::<f64>();
    // Invert C(v|u) = v[1 + b(1 − v)] = w; this root form is stable as b → 0.
    let b = theta * (1.0 - 2.0 * u);
    let disc = ((1.0 + b) * (1.0 + b) - 4.0 * b * w).max(0.0);
    let v = (2.0 * w / ((1.0 + b) + disc.sqrt())).min(1.0 - f64::EPSILON);
    let s = law_s.inverse_cdf(u)?;
    let a = -(-v).ln_1p() / lambda;
    Ok((s, a))
}
