use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Energy-normalized autocorrelation of fixed-length frames via FFT.
///
/// `r(lag) = sum x[n] x[n+lag] / sqrt(sum x[n]^2 * sum x[n+lag]^2)` with both
/// sums over the overlapping part, so `r` is invariant to frame gain.
pub(crate) struct Autocorrelator {
    frame_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl Autocorrelator {
    pub fn new(frame_len: usize) -> Self {
        let size = (2 * frame_len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Autocorrelator {
            frame_len,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
            buf: vec![Complex::new(0.0, 0.0); size],
        }
    }

    /// Normalized autocorrelation for lags `0..=max_lag` of a mean-removed frame.
    /// Returns `None` for a silent frame.
    pub fn normalized(&mut self, frame: &[f64], max_lag: usize) -> Option<Vec<f64>> {
        debug_assert_eq!(frame.len(), self.frame_len);
        let n = frame.len();
        let max_lag = max_lag.min(n - 1);
        let mean = frame.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = frame.iter().map(|v| v - mean).collect();

        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        for v in &centered {
            prefix.push(prefix.last().unwrap() + v * v);
        }
        if prefix[n] <= 0.0 {
            return None;
        }

        for b in self.buf.iter_mut() {
            *b = Complex::new(0.0, 0.0);
        }
        for (b, v) in self.buf.iter_mut().zip(&centered) {
            b.re = *v;
        }
        self.forward.process(&mut self.buf);
        for b in self.buf.iter_mut() {
            *b = Complex::new(b.norm_sqr(), 0.0);
        }
        self.inverse.process(&mut self.buf);
        let scale = self.buf.len() as f64;

        Some(
            (0..=max_lag)
                .map(|lag| {
                    let head = prefix[n - lag];
                    let tail = prefix[n] - prefix[lag];
                    let denom = (head * tail).sqrt();
                    if denom > 0.0 {
                        self.buf[lag].re / scale / denom
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }
}

/// Vertex of the parabola through `(i-1, a), (i, b), (i+1, c)` as (offset, value).
pub(crate) fn parabolic_peak(a: f64, b: f64, c: f64) -> (f64, f64) {
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-300 {
        return (0.0, b);
    }
    let offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
    (offset, b - 0.25 * (a - c) * offset)
}

/// Frame start positions covering the signal with the given length and hop.
pub(crate) fn frame_starts(len: usize, frame_len: usize, hop: usize) -> impl Iterator<Item = usize> {
    let count = if len < frame_len { 0 } else { 1 + (len - frame_len) / hop };
    (0..count).map(move |i| i * hop)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sums() {
        let frame: Vec<f64> = (0..200).map(|i| ((i * 7919) % 211) as f64 / 211.0 - 0.4).collect();
        let mut ac = Autocorrelator::new(200);
        let r = ac.normalized(&frame, 50).unwrap();
        let mean = frame.iter().sum::<f64>() / 200.0;
        let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
        for lag in [0usize, 1, 17, 50] {
            let num: f64 = (0..200 - lag).map(|i| x[i] * x[i + lag]).sum();
            let e1: f64 = (0..200 - lag).map(|i| x[i] * x[i]).sum();
            let e2: f64 = (lag..200).map(|i| x[i] * x[i]).sum();
            assert!((r[lag] - num / (e1 * e2).sqrt()).abs() < 1e-10);
        }
        assert!((r[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn silent_frame_is_none() {
        let mut ac = Autocorrelator::new(64);
        assert!(ac.normalized(&[0.25; 64], 10).is_none());
    }

    #[test]
    fn parabola_vertex() {
        // y = 1 - (x - 0.3)^2 sampled at -1, 0, 1
        let f = |x: f64| 1.0 - (x - 0.3) * (x - 0.3);
        let (off, val) = parabolic_peak(f(-1.0), f(0.0), f(1.0));
        assert!((off - 0.3).abs() < 1e-12);
        assert!((val - 1.0).abs() < 1e-12);
    }
}
