//! Autocorrelation F0 estimation.

use super::autocorr::{frame_starts, parabolic_peak, Autocorrelator};
use super::BiomarkerError;

pub const DEFAULT_FMIN: f64 = 60.0;
pub const DEFAULT_FMAX: f64 = 500.0;
/// Peak normalized autocorrelation below which a frame counts as unvoiced.
pub const VOICING_THRESHOLD: f64 = 0.3;
/// A candidate lag is kept if its correlation is within this factor of the best one;
/// the shortest such lag wins, which suppresses octave-down errors.
const OCTAVE_TOLERANCE: f64 = 0.9;

/// Analysis frame length: two periods of the lowest admissible F0.
pub(crate) fn frame_len(sample_rate: u32, fmin: f64) -> usize {
    (2.0 * sample_rate as f64 / fmin).ceil() as usize
}

/// Best periodicity candidate of one frame.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FramePitch {
    pub lag: f64,
    pub strength: f64,
}

pub(crate) fn frame_pitch(r: &[f64], min_lag: usize, max_lag: usize) -> Option<FramePitch> {
    let max_lag = max_lag.min(r.len().saturating_sub(2));
    let mut candidates = Vec::new();
    for lag in min_lag.max(1)..=max_lag {
        if r[lag] > r[lag - 1] && r[lag] >= r[lag + 1] {
            let (off, val) = parabolic_peak(r[lag - 1], r[lag], r[lag + 1]);
            candidates.push(FramePitch {
                lag: lag as f64 + off,
                strength: val,
            });
        }
    }
    let best = candidates
        .iter()
        .map(|c| c.strength)
        .fold(f64::NEG_INFINITY, f64::max);
    candidates
        .into_iter()
        .find(|c| c.strength >= OCTAVE_TOLERANCE * best)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Recording-level F0: median over voiced frames of the autocorrelation peak
/// in the lag band `[1/fmax, 1/fmin]`. `Ok(None)` means unvoiced.
pub fn estimate_f0(
    samples: &[f32],
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<Option<f64>, BiomarkerError> {
    if sample_rate == 0 || !(fmin > 0.0 && fmin < fmax) {
        return Err(BiomarkerError::InvalidArgument("need 0 < fmin < fmax and a positive rate".into()));
    }
    let len = frame_len(sample_rate, fmin);
    if samples.len() < len {
        return Err(BiomarkerError::SignalTooShort {
            len: samples.len(),
            needed: len,
        });
    }
    let sr = sample_rate as f64;
    let min_lag = (sr / fmax).floor() as usize;
    let max_lag = (sr / fmin).ceil() as usize;
    let mut ac = Autocorrelator::new(len);
    let mut f0s = Vec::new();
    let mut frame = vec![0.0; len];
    for start in frame_starts(samples.len(), len, len / 2) {
        for (dst, src) in frame.iter_mut().zip(&samples[start..start + len]) {
            *dst = *src as f64;
        }
        let Some(r) = ac.normalized(&frame, max_lag + 1) else {
            continue;
        };
        if let Some(p) = frame_pitch(&r, min_lag, max_lag) {
            let f0 = sr / p.lag;
            if p.strength >= VOICING_THRESHOLD && (fmin..=fmax).contains(&f0) {
                f0s.push(f0);
            }
        }
    }
    if f0s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(median(&mut f0s)))
    }
}
