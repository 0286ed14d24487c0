//! Autocorrelation harmonics-to-noise ratio.

use super::autocorr::{frame_starts, parabolic_peak, Autocorrelator};
use super::pitch::{frame_len, DEFAULT_FMIN, VOICING_THRESHOLD};
use super::BiomarkerError;

pub const HNR_MIN_DB: f64 = -20.0;
pub const HNR_MAX_DB: f64 = 40.0;
/// The F0 lag is refined to the local correlation maximum within this relative distance.
const LAG_SLACK: f64 = 0.1;

/// `10 log10(r / (1 - r))`, clamped to `[-20, 40]` dB.
pub fn hnr_from_r(r: f64) -> f64 {
    if r >= 1.0 {
        return HNR_MAX_DB;
    }
    if r <= 0.0 {
        return HNR_MIN_DB;
    }
    (10.0 * (r / (1.0 - r)).log10()).clamp(HNR_MIN_DB, HNR_MAX_DB)
}

/// Mean framewise HNR over frames whose correlation at the F0 lag reaches the
/// voicing threshold.
pub fn hnr(samples: &[f32], sample_rate: u32, f0: f64) -> Result<f64, BiomarkerError> {
    if !(f0 > 0.0) || sample_rate == 0 {
        return Err(BiomarkerError::InvalidArgument("f0 and sample rate must be positive".into()));
    }
    let lag = sample_rate as f64 / f0;
    let len = frame_len(sample_rate, DEFAULT_FMIN).max((2.0 * lag).ceil() as usize + 2);
    if samples.len() < len {
        return Err(BiomarkerError::SignalTooShort { len: samples.len(), needed: len });
    }
    let lo = ((lag * (1.0 - LAG_SLACK)).floor() as usize).max(1);
    let hi = (lag * (1.0 + LAG_SLACK)).ceil() as usize;
    let mut ac = Autocorrelator::new(len);
    let mut frame = vec![0.0; len];
    let mut total = 0.0;
    let mut voiced = 0usize;
    for start in frame_starts(samples.len(), len, len / 2) {
        for (dst, src) in frame.iter_mut().zip(&samples[start..start + len]) {
            *dst = *src as f64;
        }
        let Some(r) = ac.normalized(&frame, hi + 1) else {
            continue;
        };
        let k = (lo..=hi).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        let peak = if k > lo && k < hi {
            parabolic_peak(r[k - 1], r[k], r[k + 1]).1
        } else {
            r[k]
        };
        if peak >= VOICING_THRESHOLD {
            total += hnr_from_r(peak);
            voiced += 1;
        }
    }
    if voiced == 0 {
        return Err(BiomarkerError::Unvoiced);
    }
    Ok(total / voiced as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn hand_computed_frame_value() {
        assert!((hnr_from_r(0.99) - 10.0 * 99f64.log10()).abs() < 1e-12);
        assert!((hnr_from_r(0.99) - 19.956).abs() < 1e-3);
        assert_eq!(hnr_from_r(1.0), 40.0);
        assert_eq!(hnr_from_r(1e-9), -20.0);
    }

    #[test]
    fn pure_sine_hits_ceiling() {
        let x: Vec<f32> = (0..22_050)
            .map(|i| (0.5 * (2.0 * PI * 220.0 * i as f64 / 44_100.0).sin()) as f32)
            .collect();
        assert_eq!(hnr(&x, 44_100, 220.0).unwrap(), 40.0);
    }

    #[test]
    fn silence_is_unvoiced() {
        assert_eq!(hnr(&[0.0; 8000], 44_100, 150.0), Err(BiomarkerError::Unvoiced));
    }
}
