//! Control chart on neighbor angle discrepancies and the local stopping rule.
//!
//! Each monitored bus accumulates one discrepancy per iteration. Every `S_w`
//! iterations the window collapses into a point Θ that is compared against
//! the normal-approximation limit of in-control noise. `S_p` points form a
//! decision block; a bus trips when its block holds more than
//! `max_alarms_per_block` alarms.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartError {
    #[error("invalid chart configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} discrepancies, got {got}")]
    Shape { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticMode {
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartConfig {
    /// S_w, iterations per chart point.
    pub window: usize,
    /// S_p, points per decision block.
    pub points_per_block: usize,
    /// ω̃, flow-space noise scale in p.u.
    pub flow_scale: f64,
    /// m_α of the mechanism feeding the chart.
    pub multiplier: u8,
    /// L
    pub threshold_multiplier: f64,
    /// CL
    pub convergence_limit: f64,
    pub mode: StatisticMode,
    pub max_alarms_per_block: usize,
    /// Lower bound on the alarm threshold, p.u.; keeps noiseless runs from
    /// alarming on solver round-off.
    pub threshold_floor: f64,
}

impl ChartConfig {
    pub const DEFAULT_THRESHOLD_FLOOR: f64 = 1e-4;

    /// Chart for tuning index γ: `S_p = γ` points of `lookback` iterations.
    pub fn from_gamma(gamma: u32, lookback: usize, flow_scale: f64, multiplier: u8, convergence_limit: f64) -> Self {
        ChartConfig {
            window: lookback,
            points_per_block: gamma as usize,
            flow_scale,
            multiplier,
            threshold_multiplier: 1.0,
            convergence_limit,
            mode: StatisticMode::Mean,
            max_alarms_per_block: 1,
            threshold_floor: Self::DEFAULT_THRESHOLD_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<(), ChartError> {
        if self.window < 1 || self.points_per_block < 1 {
            return Err(ChartError::InvalidConfig("S_w and S_p must be >= 1".into()));
        }
        if !(self.threshold_multiplier > 0.0) || !(self.convergence_limit > 0.0) {
            return Err(ChartError::InvalidConfig("L and CL must be positive".into()));
        }
        if !(self.flow_scale >= 0.0) || !(self.threshold_floor >= 0.0) {
            return Err(ChartError::InvalidConfig("scales must be nonnegative".into()));
        }
        Ok(())
    }

    /// Iterations per decision block, S_w·S_p.
    pub fn block_iterations(&self) -> usize {
        self.window * self.points_per_block
    }

    /// Standard deviation of an in-control point.
    pub fn point_sigma(&self) -> f64 {
        let m = f64::from(self.multiplier);
        let var_one = 2.0 * self.flow_scale * self.flow_scale * m * m;
        let w = self.window as f64;
        match self.mode {
            StatisticMode::Mean => (var_one / w).sqrt(),
            StatisticMode::Sum => (var_one * w).sqrt(),
        }
    }

    pub fn threshold(&self) -> f64 {
        (self.threshold_multiplier * self.point_sigma()).max(self.threshold_floor)
    }

    /// β_p = β_d = CL·|B_r|·|T|.
    pub fn tolerance(&self, monitored_buses: usize, hours: usize) -> f64 {
        self.convergence_limit * monitored_buses as f64 * hours as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    InControl,
    Alarm,
}

pub fn alarm_check(point: f64, config: &ChartConfig) -> Signal {
    if point.abs() > config.threshold() {
        Signal::Alarm
    } else {
        Signal::InControl
    }
}

/// Collapses a full window into one chart point.
pub fn chart_point(window: &[f64], mode: StatisticMode) -> f64 {
    let sum: f64 = window.iter().sum();
    match mode {
        StatisticMode::Sum => sum,
        StatisticMode::Mean => sum / window.len() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartPoint {
    pub bus: usize,
    pub value: f64,
    pub signal: Signal,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct BusChart {
    window: Vec<f64>,
    block_points: usize,
    block_alarms: usize,
}

/// Outcome of one local-convergence evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Not a multiple of S_w·S_p.
    NotDue,
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartState {
    config: ChartConfig,
    buses: Vec<usize>,
    charts: Vec<BusChart>,
    iterations: usize,
    /// κ of the most recently completed block.
    tripped: usize,
    /// Points emitted by the latest iteration.
    latest: Vec<ChartPoint>,
}

impl ChartState {
    pub fn new(config: ChartConfig, buses: Vec<usize>) -> Result<Self, ChartError> {
        config.validate()?;
        let charts = vec![BusChart::default(); buses.len()];
        Ok(ChartState { config, buses, charts, iterations: 0, tripped: 0, latest: Vec::new() })
    }

    pub fn config(&self) -> &ChartConfig {
        &self.config
    }

    pub fn buses(&self) -> &[usize] {
        &self.buses
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// κ of the last completed block.
    pub fn tripped(&self) -> usize {
        self.tripped
    }

    pub fn latest_points(&self) -> &[ChartPoint] {
        &self.latest
    }

    /// Records one discrepancy per monitored bus (already averaged over hours).
    pub fn record_iteration(&mut self, discrepancies: &[f64]) -> Result<&[ChartPoint], ChartError> {
        if discrepancies.len() != self.buses.len() {
            return Err(ChartError::Shape { expected: self.buses.len(), got: discrepancies.len() });
        }
        self.iterations += 1;
        self.latest.clear();
        for (i, &d) in discrepancies.iter().enumerate() {
            let chart = &mut self.charts[i];
            chart.window.push(d);
            if chart.window.len() < self.config.window {
                continue;
            }
            let value = chart_point(&chart.window, self.config.mode);
            chart.window.clear();
            let signal = alarm_check(value, &self.config);
            chart.block_points += 1;
            if signal == Signal::Alarm {
                chart.block_alarms += 1;
            }
            self.latest.push(ChartPoint { bus: self.buses[i], value, signal });
        }
        if self.iterations.is_multiple_of(self.config.block_iterations()) {
            let max = self.config.max_alarms_per_block;
            self.tripped = self.charts.iter().filter(|c| c.block_alarms > max).count();
            for c in &mut self.charts {
                c.block_points = 0;
                c.block_alarms = 0;
            }
        }
        Ok(&self.latest)
    }

    /// Alarms so far in the open block, summed over buses.
    pub fn open_block_alarms(&self) -> usize {
        self.charts.iter().map(|c| c.block_alarms).sum()
    }

    /// Stopping rule, evaluated only right after a decision block completes.
    pub fn local_convergence(&self, primal: f64, dual: f64, hours: usize) -> Verdict {
        if self.iterations == 0 || !self.iterations.is_multiple_of(self.config.block_iterations()) {
            return Verdict::NotDue;
        }
        let beta = self.config.tolerance(self.buses.len(), hours);
        let residuals_ok = if self.buses.is_empty() { true } else { primal < beta && dual < beta };
        let alarms_ok = self.buses.is_empty() || self.tripped < self.buses.len();
        if residuals_ok && alarms_ok {
            Verdict::Converged
        } else {
            Verdict::NotConverged
        }
    }
}

/// Mean of `values` per bus, in the order of `buses`; buses without entries get 0.
pub fn mean_per_bus(buses: &[usize], values: impl IntoIterator<Item = (usize, f64)>) -> Vec<f64> {
    let mut sum = vec![0.0; buses.len()];
    let mut count = vec![0usize; buses.len()];
    for (bus, v) in values {
        if let Ok(i) = buses.binary_search(&bus) {
            sum[i] += v;
            count[i] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(window: usize, points: usize) -> ChartConfig {
        ChartConfig {
            window,
            points_per_block: points,
            flow_scale: 0.1,
            multiplier: 1,
            threshold_multiplier: 1.0,
            convergence_limit: 0.1,
            mode: StatisticMode::Mean,
            max_alarms_per_block: 1,
            threshold_floor: 0.0,
        }
    }

    #[test]
    fn window_cancellation_and_incomplete_window() {
        let mut s = ChartState::new(cfg(3, 1), vec![4]).unwrap();
        assert!(s.record_iteration(&[0.1]).unwrap().is_empty());
        assert!(s.record_iteration(&[-0.1]).unwrap().is_empty());
        let pts = s.record_iteration(&[0.0]).unwrap().to_vec();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].value.abs() < 1e-15);
        assert_eq!(pts[0].signal, Signal::InControl);
    }

    #[test]
    fn thresholds_by_mode() {
        let mut c = cfg(20, 4);
        assert!((c.threshold() - (2.0 * 0.01 / 20.0f64).sqrt()).abs() < 1e-15);
        c.mode = StatisticMode::Sum;
        assert!((c.threshold() - (2.0 * 0.01 * 20.0f64).sqrt()).abs() < 1e-15);
        assert_eq!(chart_point(&[1.0, 2.0], StatisticMode::Sum), 3.0);
        assert_eq!(alarm_check(0.0, &c), Signal::InControl);
    }

    #[test]
    fn tolerance_arithmetic() {
        assert!((cfg(1, 1).tolerance(5, 24) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn verdicts_only_at_block_ends() {
        let mut s = ChartState::new(cfg(2, 3), vec![1, 2]).unwrap();
        for k in 1..=12 {
            s.record_iteration(&[0.0, 0.0]).unwrap();
            let v = s.local_convergence(0.0, 0.0, 24);
            if k % 6 == 0 {
                assert_eq!(v, Verdict::Converged, "k = {k}");
            } else {
                assert_eq!(v, Verdict::NotDue, "k = {k}");
            }
        }
    }

    #[test]
    fn alarm_veto() {
        let mut s = ChartState::new(cfg(1, 3), vec![1, 2]).unwrap();
        for _ in 0..3 {
            s.record_iteration(&[5.0, -5.0]).unwrap();
        }
        assert_eq!(s.tripped(), 2);
        assert_eq!(s.local_convergence(0.0, 0.0, 24), Verdict::NotConverged);
        // κ resets with the next block.
        for _ in 0..3 {
            s.record_iteration(&[0.0, 0.0]).unwrap();
        }
        assert_eq!(s.tripped(), 0);
        assert_eq!(s.local_convergence(0.0, 0.0, 24), Verdict::Converged);
    }

    #[test]
    fn single_alarm_per_block_is_tolerated() {
        let mut s = ChartState::new(cfg(1, 4), vec![1]).unwrap();
        for d in [5.0, 0.0, 0.0, 0.0] {
            s.record_iteration(&[d]).unwrap();
        }
        assert_eq!(s.tripped(), 0);
    }

    #[test]
    fn per_bus_means() {
        let m = mean_per_bus(&[2, 5, 9], vec![(2, 1.0), (2, 3.0), (9, -1.0), (7, 100.0)]);
        assert_eq!(m, vec![2.0, 0.0, -1.0]);
    }
}
