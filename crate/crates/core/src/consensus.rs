//! EWMA-smoothed consensus values and dual multipliers for one region.
//!
//! Angle records are keyed by (tie line, endpoint, hour) and flow records by
//! (tie line, hour), in the order of the region's tie-line list.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsensusError {
    #[error("mixing factor {0} outside (0, 1]")]
    MixingOutOfRange(f64),
    #[error("penalty {name} = {value} must be positive")]
    BadPenalty { name: &'static str, value: f64 },
    #[error("no table entry for scale {scale} and gamma {gamma}")]
    OutsideTable { scale: f64, gamma: u32 },
    #[error("missing counterpart for {0}")]
    MissingCounterpart(String),
}

/// Endpoint of a tie line in canonical line orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    From,
    To,
}

impl Endpoint {
    pub const BOTH: [Endpoint; 2] = [Endpoint::From, Endpoint::To];

    pub fn index(self) -> usize {
        match self {
            Endpoint::From => 0,
            Endpoint::To => 1,
        }
    }
}

/// One step of exponential smoothing; the first received value is taken as is.
pub fn ewma_update(prev: Option<f64>, received: f64, eta: f64) -> Result<f64, ConsensusError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(ConsensusError::MixingOutOfRange(eta));
    }
    Ok(match prev {
        None => received,
        Some(p) => eta * received + (1.0 - eta) * p,
    })
}

pub fn intermediate_consensus(own: f64, smoothed: f64) -> f64 {
    0.5 * (own + smoothed)
}

pub fn dual_update(multiplier: f64, rho: f64, own: f64, consensus: f64) -> f64 {
    multiplier + rho * (own - consensus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingMode {
    Table,
    Formula,
}

pub const TABLE_SCALES: [f64; 5] = [0.015, 0.03, 0.075, 0.15, 0.30];
pub const TABLE_GAMMAS: [u32; 5] = [4, 8, 12, 16, 20];

/// Reference mixing factors, rows by scale and columns by γ.
pub const MIXING_TABLE: [[f64; 5]; 5] = [
    [0.997, 0.9976, 0.9982, 0.9988, 0.9994],
    [0.994, 0.9952, 0.9964, 0.9976, 0.9988],
    [0.985, 0.988, 0.991, 0.994, 0.997],
    [0.97, 0.976, 0.982, 0.988, 0.994],
    [0.94, 0.952, 0.964, 0.976, 0.988],
];

/// Mixing factor η for a flow-space noise scale and tuning index γ.
pub fn mixing_factor(scale: f64, gamma: u32, mode: MixingMode) -> Result<f64, ConsensusError> {
    match mode {
        MixingMode::Table => {
            let row = TABLE_SCALES.iter().position(|s| (s - scale).abs() < 1e-12);
            let col = TABLE_GAMMAS.iter().position(|g| *g == gamma);
            match (row, col) {
                (Some(r), Some(c)) => Ok(MIXING_TABLE[r][c]),
                _ => Err(ConsensusError::OutsideTable { scale, gamma }),
            }
        }
        MixingMode::Formula => {
            let eta = 1.0 - (0.24 - 0.01 * f64::from(gamma)) * scale;
            if eta > 0.0 && eta <= 1.0 {
                Ok(eta)
            } else {
                Err(ConsensusError::MixingOutOfRange(eta))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AngleRecord {
    /// λ
    pub multiplier: f64,
    /// θ̄
    pub consensus: f64,
    /// θ̃, `None` until the first message arrives.
    pub memory: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowRecord {
    /// φ
    pub multiplier: f64,
    /// f̄ in p.u.
    pub consensus: f64,
    /// f̃ in p.u.
    pub memory: Option<f64>,
}

/// Residuals of one consensus step, both 1-norms over all angle records.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// ‖θ − θ̄‖₁
    pub primal: f64,
    /// ‖θ̄_k − θ̄_{k−1}‖₁
    pub dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    tie_lines: Vec<usize>,
    hours: usize,
    pub rho_theta: f64,
    pub rho_flow: f64,
    pub eta: f64,
    angles: Vec<AngleRecord>,
    flows: Vec<FlowRecord>,
}

impl ConsensusState {
    pub fn new(
        tie_lines: Vec<usize>,
        hours: usize,
        rho_theta: f64,
        rho_flow: f64,
        eta: f64,
    ) -> Result<Self, ConsensusError> {
        for (name, value) in [("rho_theta", rho_theta), ("rho_flow", rho_flow)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConsensusError::BadPenalty { name, value });
            }
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(ConsensusError::MixingOutOfRange(eta));
        }
        let n = tie_lines.len();
        Ok(ConsensusState {
            tie_lines,
            hours,
            rho_theta,
            rho_flow,
            eta,
            angles: vec![AngleRecord::default(); 2 * n * hours],
            flows: vec![FlowRecord::default(); n * hours],
        })
    }

    pub fn tie_lines(&self) -> &[usize] {
        &self.tie_lines
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    /// Position of `line` in the tie-line list.
    pub fn slot(&self, line: usize) -> Option<usize> {
        self.tie_lines.iter().position(|&l| l == line)
    }

    fn angle_index(&self, slot: usize, end: Endpoint, hour: usize) -> usize {
        (slot * 2 + end.index()) * self.hours + hour
    }

    pub fn angle(&self, slot: usize, end: Endpoint, hour: usize) -> &AngleRecord {
        &self.angles[self.angle_index(slot, end, hour)]
    }

    pub fn angle_mut(&mut self, slot: usize, end: Endpoint, hour: usize) -> &mut AngleRecord {
        let i = self.angle_index(slot, end, hour);
        &mut self.angles[i]
    }

    pub fn flow(&self, slot: usize, hour: usize) -> &FlowRecord {
        &self.flows[slot * self.hours + hour]
    }

    pub fn flow_mut(&mut self, slot: usize, hour: usize) -> &mut FlowRecord {
        &mut self.flows[slot * self.hours + hour]
    }

    pub fn angle_records(&self) -> &[AngleRecord] {
        &self.angles
    }

    pub fn flow_records(&self) -> &[FlowRecord] {
        &self.flows
    }

    /// Applies smoothing, intermediate consensus, and dual ascent to every
    /// record. `own_angle(slot, end, hour)` and `own_flow(slot, hour)` give
    /// this region's latest solution; `received_angle` and `received_flow`
    /// give the neighbor's (already post-processed) noisy estimates.
    pub fn step(
        &mut self,
        own_angle: impl Fn(usize, Endpoint, usize) -> f64,
        own_flow: impl Fn(usize, usize) -> f64,
        received_angle: impl Fn(usize, Endpoint, usize) -> Option<f64>,
        received_flow: impl Fn(usize, usize) -> Option<f64>,
    ) -> Result<Residuals, ConsensusError> {
        let mut res = Residuals::default();
        let (eta, rho_t, rho_f) = (self.eta, self.rho_theta, self.rho_flow);
        for slot in 0..self.tie_lines.len() {
            for end in Endpoint::BOTH {
                for t in 0..self.hours {
                    let received = received_angle(slot, end, t).ok_or_else(|| {
                        ConsensusError::MissingCounterpart(format!(
                            "angle of line {} {:?} hour {t}",
                            self.tie_lines[slot], end
                        ))
                    })?;
                    let own = own_angle(slot, end, t);
                    let rec = self.angle_mut(slot, end, t);
                    let smoothed = ewma_update(rec.memory, received, eta)?;
                    let consensus = intermediate_consensus(own, smoothed);
                    res.dual += (consensus - rec.consensus).abs();
                    res.primal += (own - consensus).abs();
                    rec.memory = Some(smoothed);
                    rec.consensus = consensus;
                    rec.multiplier = dual_update(rec.multiplier, rho_t, own, consensus);
                }
            }
            for t in 0..self.hours {
                let received = received_flow(slot, t).ok_or_else(|| {
                    ConsensusError::MissingCounterpart(format!(
                        "flow of line {} hour {t}",
                        self.tie_lines[slot]
                    ))
                })?;
                let own = own_flow(slot, t);
                let rec = self.flow_mut(slot, t);
                let smoothed = ewma_update(rec.memory, received, eta)?;
                let consensus = intermediate_consensus(own, smoothed);
                rec.memory = Some(smoothed);
                rec.consensus = consensus;
                rec.multiplier = dual_update(rec.multiplier, rho_f, own, consensus);
            }
        }
        Ok(res)
    }

    /// Sum of |λ| over angle records and of |φ| over flow records.
    pub fn multiplier_norms(&self) -> (f64, f64) {
        (
            self.angles.iter().map(|r| r.multiplier.abs()).sum(),
            self.flows.iter().map(|r| r.multiplier.abs()).sum(),
        )
    }
}
