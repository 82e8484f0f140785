use crate::sim::SimTime;

/// Predicts the next pause by fitting a least-squares line through past
/// `(live_bytes, pause)` observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauseEstimator {
    history: Vec<(u64, SimTime)>,
    default_pause: SimTime,
}

impl PauseEstimator {
    pub fn new(default_pause: SimTime) -> Self {
        PauseEstimator {
            history: Vec::new(),
            default_pause,
        }
    }

    pub fn default_pause(&self) -> SimTime {
        self.default_pause
    }

    pub fn history(&self) -> &[(u64, SimTime)] {
        &self.history
    }

    pub fn record(&mut self, live_bytes: u64, pause: SimTime) {
        self.history.push((live_bytes, pause));
    }

    /// Fewer than two observations fall back to the default. When every
    /// observation shares one heap size the slope is undefined and the mean
    /// pause is returned. Negative extrapolations clamp to zero.
    pub fn estimate(&self, live_bytes: u64) -> SimTime {
        if self.history.len() < 2 {
            return self.default_pause;
        }
        let n = self.history.len() as f64;
        let mean_x = self.history.iter().map(|&(x, _)| x as f64).sum::<f64>() / n;
        let mean_y = self
            .history
            .iter()
            .map(|&(_, y)| y.as_micros() as f64)
            .sum::<f64>()
            / n;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for &(x, y) in &self.history {
            let dx = x as f64 - mean_x;
            sxx += dx * dx;
            sxy += dx * (y.as_micros() as f64 - mean_y);
        }
        let predicted = if sxx == 0.0 {
            mean_y
        } else {
            mean_y + (sxy / sxx) * (live_bytes as f64 - mean_x)
        };
        SimTime::from_micros(predicted.max(0.0).round() as u64)
    }
}
