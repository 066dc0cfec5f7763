//! Exponential phase-angle perturbation and its statistical checks.
//!
//! Each tie-line endpoint angle is shifted by `m·α` with `α ~ Exp(b_ℓ)` and
//! `b_ℓ = ω/(|Γ_ℓ|·ε)`. A flow rebuilt from two perturbed endpoints differs
//! from the true flow by `Γ·m·(α_u − α_v)`, which is Laplace with scale
//! `m·ω/ε` whatever the line.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::consensus::Endpoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpError {
    #[error("noise scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("no noise scale configured for line {0}")]
    MissingScale(usize),
    #[error("invalid privacy configuration: {0}")]
    InvalidConfig(String),
    #[error("bin {bin} holds {count} samples, at least {required} are needed")]
    InsufficientSamples { bin: usize, count: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyConfig {
    /// ε
    pub epsilon: f64,
    /// ω, flow-space sensitivity in p.u.
    pub sensitivity: f64,
    /// m_α: 0 disables noise, 1 perturbs by α, 2 by 2α.
    pub multiplier: u8,
    pub seed: u64,
    /// Subtract the known noise mean `m·b_ℓ` from received angles.
    pub debias: bool,
}

impl PrivacyConfig {
    pub const DEFAULT_SENSITIVITY: f64 = 1.0;

    /// Configuration whose flow-space Laplace scale `ω/ε` equals `scale`.
    pub fn from_scale(scale: f64, sensitivity: f64, multiplier: u8, seed: u64) -> Result<Self, DpError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(DpError::NonPositiveScale(scale));
        }
        let cfg = PrivacyConfig {
            epsilon: sensitivity / scale,
            sensitivity,
            multiplier,
            seed,
            debias: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noiseless(seed: u64) -> Self {
        PrivacyConfig { epsilon: 1.0, sensitivity: 1.0, multiplier: 0, seed, debias: true }
    }

    pub fn validate(&self) -> Result<(), DpError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(DpError::InvalidConfig(format!("epsilon = {}", self.epsilon)));
        }
        if !(self.sensitivity > 0.0 && self.sensitivity.is_finite()) {
            return Err(DpError::InvalidConfig(format!("sensitivity = {}", self.sensitivity)));
        }
        if self.multiplier > 2 {
            return Err(DpError::InvalidConfig(format!("multiplier = {}", self.multiplier)));
        }
        Ok(())
    }

    /// ω/ε, the flow-space Laplace scale of a single perturbation.
    pub fn flow_scale(&self) -> f64 {
        self.sensitivity / self.epsilon
    }

    /// b_ℓ = ω/(|Γ|·ε), the exponential scale on a line's endpoint angles.
    pub fn line_scale(&self, gamma: f64) -> Result<f64, DpError> {
        let b = self.flow_scale() / gamma.abs();
        if b > 0.0 && b.is_finite() {
            Ok(b)
        } else {
            Err(DpError::NonPositiveScale(b))
        }
    }

    /// Mean of the added angle noise on a line, `m·b_ℓ`.
    pub fn angle_bias(&self, gamma: f64) -> Result<f64, DpError> {
        Ok(f64::from(self.multiplier) * self.line_scale(gamma)?)
    }
}

/// Draws one `Exp` sample with mean `scale`.
pub fn sample_exponential<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64, DpError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DpError::NonPositiveScale(scale));
    }
    let dist = Exp::new(1.0 / scale).map_err(|_| DpError::NonPositiveScale(scale))?;
    Ok(dist.sample(rng))
}

/// Per-region noise stream; regions share a seed but draw from disjoint streams.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, region: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(region as u64);
        NoiseStream { rng }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Exponential scales for exactly one region's tie lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleTable {
    entries: Vec<(usize, f64)>,
}

impl ScaleTable {
    /// `lines` pairs a case line index with its Γ.
    pub fn new(config: &PrivacyConfig, lines: &[(usize, f64)]) -> Result<Self, DpError> {
        let entries = lines
            .iter()
            .map(|&(l, gamma)| config.line_scale(gamma).map(|b| (l, b)))
            .collect::<Result<_, _>>()?;
        Ok(ScaleTable { entries })
    }

    pub fn scale(&self, line: usize) -> Result<f64, DpError> {
        self.entries
            .iter()
            .find(|(l, _)| *l == line)
            .map(|(_, b)| *b)
            .ok_or(DpError::MissingScale(line))
    }

    pub fn lines(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(l, _)| *l)
    }
}

/// One perturbed tie-line endpoint angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoisyAngle {
    line: usize,
    end: Endpoint,
    hour: usize,
    perturbed: f64,
}

impl NoisyAngle {
    pub fn line(&self) -> usize {
        self.line
    }

    pub fn end(&self) -> Endpoint {
        self.end
    }

    pub fn hour(&self) -> usize {
        self.hour
    }

    /// θ̂ in radians.
    pub fn perturbed(&self) -> f64 {
        self.perturbed
    }
}

/// Perturbed angles for the tie lines shared by a sender and a receiver.
/// Only this module can construct one, so raw angles cannot travel in it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisyAngleMessage {
    sender: usize,
    receiver: usize,
    iteration: usize,
    entries: Vec<NoisyAngle>,
}

impl NoisyAngleMessage {
    pub fn sender(&self) -> usize {
        self.sender
    }

    pub fn receiver(&self) -> usize {
        self.receiver
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn entries(&self) -> &[NoisyAngle] {
        &self.entries
    }

    pub fn get(&self, line: usize, end: Endpoint, hour: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.line == line && e.end == end && e.hour == hour)
            .map(|e| e.perturbed)
    }
}

/// Address of a message: who sends it, to whom, and in which iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Envelope {
    pub sender: usize,
    pub receiver: usize,
    pub iteration: usize,
}

/// Perturbs `θ` at both endpoints of each listed line and hour.
///
/// `lines` gives `(line, hours)` groups in the order noise is drawn; `raw`
/// returns the sender's current angle for an endpoint and hour.
pub fn perturb_angles(
    raw: impl Fn(usize, Endpoint, usize) -> f64,
    lines: &[usize],
    hours: usize,
    scales: &ScaleTable,
    config: &PrivacyConfig,
    stream: &mut NoiseStream,
    envelope: Envelope,
) -> Result<NoisyAngleMessage, DpError> {
    let m = f64::from(config.multiplier);
    let mut entries = Vec::with_capacity(lines.len() * 2 * hours);
    for &line in lines {
        let b = scales.scale(line)?;
        for end in Endpoint::BOTH {
            for hour in 0..hours {
                let alpha = if config.multiplier == 0 { 0.0 } else { sample_exponential(b, stream.rng())? };
                entries.push(NoisyAngle { line, end, hour, perturbed: raw(line, end, hour) + m * alpha });
            }
        }
    }
    Ok(NoisyAngleMessage {
        sender: envelope.sender,
        receiver: envelope.receiver,
        iteration: envelope.iteration,
        entries,
    })
}

/// Flow in p.u. implied by two perturbed endpoint angles.
pub fn noisy_flow(theta_hat_u: f64, theta_hat_v: f64, gamma: f64) -> f64 {
    gamma * (theta_hat_u - theta_hat_v)
}

pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

pub fn laplace_pdf(x: f64, scale: f64) -> f64 {
    (-x.abs() / scale).exp() / (2.0 * scale)
}

/// Asymptotic Kolmogorov tail probability `P(K > λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsReport {
    pub samples: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
}

/// One-sample Kolmogorov–Smirnov test of `samples` against `cdf`.
pub fn ks_test(samples: &mut [f64], cdf: impl Fn(f64) -> f64, alpha: f64) -> KsReport {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    let sqrt_n = nf.sqrt();
    let p_value = kolmogorov_tail((sqrt_n + 0.12 + 0.11 / sqrt_n) * d);
    KsReport { samples: n, statistic: d, p_value, alpha, pass: p_value > alpha }
}

/// Draws `n` samples of `noisy_flow − true_flow` on a line with susceptance
/// `gamma`, perturbing random true angles with the configured mechanism.
pub fn sample_flow_noise(config: &PrivacyConfig, gamma: f64, n: usize, seed: u64) -> Result<Vec<f64>, DpError> {
    let scales = ScaleTable::new(config, &[(0, gamma)])?;
    let mut angles = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut stream = NoiseStream::new(seed, 0);
    let envelope = Envelope { sender: 0, receiver: 1, iteration: 0 };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = [angles.gen_range(-0.3..0.3), angles.gen_range(-0.3..0.3)];
        let raw = |_: usize, end: Endpoint, _: usize| theta[end.index()];
        let msg = perturb_angles(raw, &[0], 1, &scales, config, &mut stream, envelope)?;
        let e = msg.entries();
        out.push(noisy_flow(e[0].perturbed, e[1].perturbed, gamma) - gamma * (theta[0] - theta[1]));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub epsilon: f64,
    pub distance: f64,
    pub bins: usize,
    pub samples: usize,
    /// Largest empirical density ratio over all bins, in either direction.
    pub max_ratio: f64,
    /// Bin with the largest ratio relative to its allowed bound.
    pub worst_bin: usize,
    pub worst_bin_center: f64,
    /// Allowed bound `e^ε·(1+δ)` at the worst bin.
    pub worst_bound: f64,
    pub pass: bool,
}

pub const MIN_BIN_COUNT: usize = 100;

/// Empirical check of `P[M(x)∈S] ≤ e^ε·P[M(x')∈S]` over equal-width bins,
/// where `M` releases the flow of a line with susceptance `gamma` through
/// [`perturb_angles`] and [`noisy_flow`]. `x` and `x_prime` are true flows in
/// p.u.; samples are drawn from the configured seed.
///
/// δ for each bin is a normal-approximation confidence slack on the log
/// ratio of two binomial counts, Bonferroni-corrected over bins at level
/// `alpha`.
pub fn verify_dp_ratio(
    config: &PrivacyConfig,
    gamma: f64,
    x: f64,
    x_prime: f64,
    samples: usize,
    bins: usize,
) -> Result<RatioReport, DpError> {
    config.validate()?;
    if config.multiplier == 0 {
        return Err(DpError::InvalidConfig("ratio test needs a noisy mechanism".into()));
    }
    if bins == 0 || samples < 100_000 {
        return Err(DpError::InvalidConfig(format!("need n >= 1e5 and bins >= 1, got {samples}, {bins}")));
    }
    let (epsilon, sensitivity) = (config.epsilon, config.sensitivity);
    let scale = f64::from(config.multiplier) * config.flow_scale();
    let table = ScaleTable::new(config, &[(0, gamma)])?;
    let alpha = 0.01;
    let lo = x.min(x_prime) - 3.0 * scale;
    let hi = x.max(x_prime) + 3.0 * scale;
    let width = (hi - lo) / bins as f64;
    let mut stream = NoiseStream::new(config.seed, 0);
    let envelope = Envelope { sender: 0, receiver: 1, iteration: 0 };
    let mut count = |flow: f64| -> Result<Vec<usize>, DpError> {
        let theta = [flow / gamma, 0.0];
        let raw = |_: usize, end: Endpoint, _: usize| theta[end.index()];
        let mut c = vec![0usize; bins];
        for _ in 0..samples {
            let msg = perturb_angles(raw, &[0], 1, &table, config, &mut stream, envelope)?;
            let e = msg.entries();
            let v = noisy_flow(e[0].perturbed, e[1].perturbed, gamma);
            if v >= lo && v < hi {
                c[(((v - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        Ok(c)
    };
    let a = count(x)?;
    let b = count(x_prime)?;
    for (i, (&ca, &cb)) in a.iter().zip(&b).enumerate() {
        if ca.min(cb) < MIN_BIN_COUNT {
            return Err(DpError::InsufficientSamples { bin: i, count: ca.min(cb), required: MIN_BIN_COUNT });
        }
    }
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - alpha / (2.0 * bins as f64));
    let bound_base = epsilon.exp();
    let mut report = RatioReport {
        epsilon,
        distance: (x - x_prime).abs() / sensitivity,
        bins,
        samples,
        max_ratio: 0.0,
        worst_bin: 0,
        worst_bin_center: lo + 0.5 * width,
        worst_bound: bound_base,
        pass: true,
    };
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..bins {
        let (ca, cb) = (a[i] as f64, b[i] as f64);
        let ratio = (ca / cb).max(cb / ca);
        let delta = (z * (1.0 / ca + 1.0 / cb).sqrt()).exp() - 1.0;
        let bound = bound_base * (1.0 + delta);
        report.max_ratio = report.max_ratio.max(ratio);
        let excess = ratio / bound;
        if excess > worst_excess {
            worst_excess = excess;
            report.worst_bin = i;
            report.worst_bin_center = lo + (i as f64 + 0.5) * width;
            report.worst_bound = bound;
        }
    }
    report.pass = worst_excess <= 1.0;
    Ok(report)
}
