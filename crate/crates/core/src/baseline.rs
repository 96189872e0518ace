//! Fixed-window OLS growth rates.
//!
//! `ln I[s,c] = alpha + r * s` is fitted over the `window` most recent days
//! `t-window+1 ..= t`. Invalid cells inside the window are skipped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{CountyId, CountyTrack, DayIndex, IncidentPanel};

pub const DEFAULT_WINDOWS: [usize; 4] = [2, 4, 8, 16];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// Slope per day.
    pub r_hat: f64,
    /// Intercept on the panel's day index.
    pub alpha_hat: f64,
    pub window: usize,
    /// Valid cells the fit used.
    pub n_used: usize,
}

pub fn ols_window_fit(
    panel: &IncidentPanel,
    county: &CountyId,
    t: DayIndex,
    window: usize,
) -> Result<OlsFit> {
    let track = panel
        .track(county)
        .ok_or_else(|| Error::InsufficientData(format!("county {} not in panel", county.fips())))?;
    track_window_fit(track, t, window)
}

/// Same as [`ols_window_fit`] for a single county track.
pub fn track_window_fit(track: &CountyTrack, t: DayIndex, window: usize) -> Result<OlsFit> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let first = (t.get() + 1).saturating_sub(window);
    let points: Vec<(f64, f64)> = (first..=t.get())
        .filter_map(|s| {
            let day = DayIndex::from_offset(s);
            track.log_incident(day).map(|y| (s as f64, y))
        })
        .collect();
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "county {} has {n} valid day(s) in the {window}-day window ending at day {}",
            track.county().fips(),
            t.get()
        )));
    }
    let x_bar = points.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let y_bar = points.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, y) in &points {
        let dx = x - x_bar;
        sxy += dx * y;
        sxx += dx * dx;
    }
    let r_hat = sxy / sxx;
    Ok(OlsFit {
        r_hat,
        alpha_hat: y_bar - r_hat * x_bar,
        window,
        n_used: n,
    })
}
