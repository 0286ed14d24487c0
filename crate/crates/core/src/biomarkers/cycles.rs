//! Glottal cycle marking and the local perturbation measures built on it.

use serde::{Deserialize, Serialize};

use super::autocorr::parabolic_peak;
use super::BiomarkerError;

/// Search window around each predicted cycle, as a fraction of the period.
const SEARCH_SPAN: f64 = 0.4;

/// Per-cycle positive peaks: times in seconds and amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleMarks {
    pub peak_times: Vec<f64>,
    pub peak_amps: Vec<f64>,
}

impl CycleMarks {
    pub fn len(&self) -> usize {
        self.peak_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peak_times.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.peak_times.len() == self.peak_amps.len()
            && self.peak_times.windows(2).all(|w| w[0] < w[1])
            && self.peak_amps.iter().all(|a| *a > 0.0)
    }

    /// The marks in reverse cycle order (times mirrored so they stay increasing).
    pub fn reversed(&self) -> CycleMarks {
        let end = self.peak_times.last().copied().unwrap_or(0.0);
        CycleMarks {
            peak_times: self.peak_times.iter().rev().map(|t| end - t).collect(),
            peak_amps: self.peak_amps.iter().rev().copied().collect(),
        }
    }
}

/// Largest positive sample in `[lo, hi]`, refined to a fractional position.
fn peak_in(x: &[f32], lo: usize, hi: usize) -> Option<(f64, f64)> {
    let hi = hi.min(x.len() - 1);
    if lo > hi {
        return None;
    }
    let mut best = lo;
    for i in lo..=hi {
        if x[i] > x[best] {
            best = i;
        }
    }
    if x[best] <= 0.0 {
        return None;
    }
    if best == 0 || best + 1 >= x.len() {
        return Some((best as f64, x[best] as f64));
    }
    let (off, val) = parabolic_peak(x[best - 1] as f64, x[best] as f64, x[best + 1] as f64);
    Some((best as f64 + off, val))
}

/// Marks one positive peak per glottal cycle.
///
/// Tracking starts at the global maximum and walks outward in both
/// directions, looking for the next peak within ±40% of one period of the
/// previous mark. Tracking stops at the first window that does not fit
/// inside the signal.
pub fn detect_cycles(samples: &[f32], sample_rate: u32, f0: f64) -> Result<CycleMarks, BiomarkerError> {
    if !(f0 > 0.0) || sample_rate == 0 {
        return Err(BiomarkerError::InvalidArgument("f0 and sample rate must be positive".into()));
    }
    if samples.is_empty() {
        return Err(BiomarkerError::TooFewCycles { found: 0 });
    }
    let period = sample_rate as f64 / f0;
    let Some(anchor) = peak_in(samples, 0, samples.len() - 1) else {
        return Err(BiomarkerError::TooFewCycles { found: 0 });
    };

    let mut forward = vec![anchor];
    loop {
        let prev = forward.last().unwrap().0;
        let lo = (prev + (1.0 - SEARCH_SPAN) * period).ceil();
        let hi = (prev + (1.0 + SEARCH_SPAN) * period).floor();
        // a window cut short by the end of the signal could hold a partial cycle
        if hi >= samples.len() as f64 {
            break;
        }
        match peak_in(samples, lo as usize, hi as usize) {
            Some(p) if p.0 > prev => forward.push(p),
            _ => break,
        }
    }
    let mut backward = Vec::new();
    let mut prev = anchor.0;
    loop {
        let lo = prev - (1.0 + SEARCH_SPAN) * period;
        let hi = prev - (1.0 - SEARCH_SPAN) * period;
        if lo < 0.0 {
            break;
        }
        match peak_in(samples, lo.ceil() as usize, hi.floor() as usize) {
            Some(p) if p.0 < prev => {
                prev = p.0;
                backward.push(p);
            }
            _ => break,
        }
    }

    backward.reverse();
    backward.extend(forward);
    if backward.len() < 3 {
        return Err(BiomarkerError::TooFewCycles { found: backward.len() });
    }
    let sr = sample_rate as f64;
    Ok(CycleMarks {
        peak_times: backward.iter().map(|p| p.0 / sr).collect(),
        peak_amps: backward.iter().map(|p| p.1).collect(),
    })
}

fn check_marks(marks: &CycleMarks) -> Result<(), BiomarkerError> {
    if marks.len() < 3 || marks.peak_amps.len() != marks.len() {
        return Err(BiomarkerError::TooFewCycles { found: marks.len() });
    }
    Ok(())
}

/// Local jitter in percent: `100 * mean|T_i - T_{i-1}| / mean(T)`.
pub fn jitter_local(marks: &CycleMarks) -> Result<f64, BiomarkerError> {
    check_marks(marks)?;
    let periods: Vec<f64> = marks.peak_times.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_t = periods.iter().sum::<f64>() / periods.len() as f64;
    let mean_d = periods.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (periods.len() - 1) as f64;
    Ok(100.0 * mean_d / mean_t)
}

/// Local shimmer in percent: `100 * mean|A_i - A_{i+1}| / mean(A)`.
pub fn shimmer_local(marks: &CycleMarks) -> Result<f64, BiomarkerError> {
    check_marks(marks)?;
    let a = &marks.peak_amps;
    let mean_a = a.iter().sum::<f64>() / a.len() as f64;
    let mean_d = a.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (a.len() - 1) as f64;
    Ok(100.0 * mean_d / mean_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn impulse_train(amps: &[f32], period: usize) -> Vec<f32> {
        let mut x = vec![0.0; period * (amps.len() + 1)];
        for (i, a) in amps.iter().enumerate() {
            x[period / 2 + i * period] = *a;
        }
        x
    }

    #[test]
    fn impulse_train_gives_exact_marks() {
        let x = impulse_train(&[1.0; 10], 441);
        let m = detect_cycles(&x, 44_100, 100.0).unwrap();
        assert_eq!(m.len(), 10);
        for w in m.peak_times.windows(2) {
            assert!(((w[1] - w[0]) * 44_100.0 - 441.0).abs() <= 1.0);
        }
        assert!(jitter_local(&m).unwrap() < 1e-9);
        assert_eq!(shimmer_local(&m).unwrap(), 0.0);
    }

    #[test]
    fn alternating_amplitudes_are_recovered() {
        let amps: Vec<f32> = (0..12).map(|i| if i % 2 == 0 { 1.0 } else { 1.1 }).collect();
        let m = detect_cycles(&impulse_train(&amps, 441), 44_100, 100.0).unwrap();
        assert_eq!(m.len(), 12);
        for (got, want) in m.peak_amps.iter().zip(&amps) {
            assert!((got - *want as f64).abs() / (*want as f64) < 0.01);
        }
    }

    #[test]
    fn two_cycles_is_too_few() {
        let x = impulse_train(&[1.0, 1.0], 441);
        assert_eq!(detect_cycles(&x, 44_100, 100.0), Err(BiomarkerError::TooFewCycles { found: 2 }));
    }

    #[test]
    fn hand_computed_perturbations() {
        // periods alternate 5.00 ms / 5.05 ms
        let mut t = vec![0.0];
        for i in 0..40 {
            let last = *t.last().unwrap();
            t.push(last + if i % 2 == 0 { 0.005 } else { 0.00505 });
        }
        let marks = CycleMarks { peak_amps: vec![1.0; t.len()], peak_times: t };
        let j = jitter_local(&marks).unwrap();
        assert!((j - 100.0 * 0.05 / 5.025).abs() < 1e-6, "{j}");

        let amps: Vec<f64> = (0..41).map(|i| if i % 2 == 0 { 1.0 } else { 1.1 }).collect();
        let marks = CycleMarks { peak_times: (0..41).map(|i| i as f64 * 0.01).collect(), peak_amps: amps };
        // 21 ones and 20 values of 1.1: mean is slightly below 1.05
        let mean = (21.0 + 22.0) / 41.0;
        let s = shimmer_local(&marks).unwrap();
        assert!((s - 100.0 * 0.1 / mean).abs() < 1e-9);
        assert!((s - 9.524).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn reversal_symmetry(
            gaps in prop::collection::vec(0.002f64..0.02, 3..40),
            amps_seed in prop::collection::vec(0.1f64..2.0, 41),
        ) {
            let mut t = vec![0.0];
            for g in &gaps {
                let last = *t.last().unwrap();
                t.push(last + g);
            }
            let marks = CycleMarks { peak_amps: amps_seed[..t.len()].to_vec(), peak_times: t };
            let rev = marks.reversed();
            prop_assert!(rev.is_valid());
            prop_assert!((jitter_local(&marks).unwrap() - jitter_local(&rev).unwrap()).abs() < 1e-9);
            prop_assert!((shimmer_local(&marks).unwrap() - shimmer_local(&rev).unwrap()).abs() < 1e-9);
        }
    }
}
