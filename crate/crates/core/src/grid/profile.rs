//! Synthetic hourly demand profiles.

/// Fraction of daily peak load for each hour of a day, starting at midnight.
pub const DAILY_SHAPE: [f64; 24] = [
    0.62, 0.58, 0.56, 0.55, 0.56, 0.60, 0.68, 0.78, 0.86, 0.92, 0.96, 0.98, //
    1.00, 0.99, 0.97, 0.95, 0.95, 0.97, 1.00, 0.98, 0.93, 0.85, 0.76, 0.68,
];

/// Hourly demand for a bus whose peak load is `peak_mw`, repeating the daily
/// shape for `hours` hours. Values are rounded to 0.01 MW.
pub fn scaled_profile(peak_mw: f64, hours: usize) -> Vec<f64> {
    (0..hours)
        .map(|t| (peak_mw * DAILY_SHAPE[t % 24] * 100.0).round() / 100.0)
        .collect()
}
