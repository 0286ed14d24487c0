//! LPC formant tracking.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::autocorr::frame_starts;
use super::BiomarkerError;
use crate::dataset::resample;

pub const LPC_RATE: u32 = 11_025;
pub const LPC_ORDER: usize = 12;
const PRE_EMPHASIS: f64 = 0.97;
const FRAME_SECS: f64 = 0.04;
const HOP_SECS: f64 = 0.02;
const MIN_SECS: f64 = 0.05;
const MAX_BANDWIDTH: f64 = 400.0;
const FREQ_RANGE: (f64, f64) = (90.0, 5000.0);

/// F1..F3 in Hz. When `flagged`, fewer than half of the analysed frames had
/// three qualifying resonances and every slot holds NaN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Formants {
    pub values: [f64; 3],
    pub flagged: bool,
}

impl Formants {
    fn flagged() -> Self {
        Formants { values: [f64::NAN; 3], flagged: true }
    }
}

/// Levinson-Durbin recursion. Returns `a[0..=order]` with `a[0] = 1`, or
/// `None` when the autocorrelation is degenerate.
pub(crate) fn levinson(r: &[f64], order: usize) -> Option<Vec<f64>> {
    if r[0] <= 0.0 {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            return None;
        }
    }
    Some(a)
}

/// Resonances of `1 / A(z)` as (frequency, bandwidth) pairs from the roots
/// with positive imaginary part.
fn resonances(a: &[f64], fs: f64) -> Vec<(f64, f64)> {
    let p = a.len() - 1;
    let mut companion = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        companion[(0, j)] = -a[j + 1];
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im > 0.0)
        .map(|z| {
            let freq = z.im.atan2(z.re) * fs / (2.0 * PI);
            let bw = -z.norm().ln() * fs / PI;
            (freq, bw)
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Estimates F1..F3 with order-12 LPC at 11.025 kHz, taking per-slot medians
/// across frames.
pub fn formants_lpc(samples: &[f32], sample_rate: u32) -> Result<Formants, BiomarkerError> {
    if sample_rate == 0 {
        return Err(BiomarkerError::InvalidArgument("sample rate must be positive".into()));
    }
    let needed = (MIN_SECS * sample_rate as f64).ceil() as usize;
    if samples.len() < needed {
        return Err(BiomarkerError::SignalTooShort { len: samples.len(), needed });
    }
    let mut emphasized = Vec::with_capacity(samples.len());
    let mut prev = 0.0f64;
    for s in samples {
        let v = *s as f64;
        emphasized.push((v - PRE_EMPHASIS * prev) as f32);
        prev = v;
    }
    let x = resample(&emphasized, sample_rate, LPC_RATE)
        .map_err(|e| BiomarkerError::InvalidArgument(e.to_string()))?;
    let fs = LPC_RATE as f64;
    let len = (FRAME_SECS * fs).round() as usize;
    let hop = (HOP_SECS * fs).round() as usize;
    let window: Vec<f64> = (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect();

    let mut analysed = 0usize;
    let mut slots: [Vec<f64>; 3] = Default::default();
    let mut frame = vec![0.0; len];
    for start in frame_starts(x.len(), len, hop) {
        for (i, f) in frame.iter_mut().enumerate() {
            *f = x[start + i] as f64 * window[i];
        }
        let r: Vec<f64> = (0..=LPC_ORDER)
            .map(|lag| (0..len - lag).map(|i| frame[i] * frame[i + lag]).sum())
            .collect();
        let Some(a) = levinson(&r, LPC_ORDER) else {
            continue;
        };
        if a.iter().any(|c| !c.is_finite()) {
            continue;
        }
        analysed += 1;
        let mut freqs: Vec<f64> = resonances(&a, fs)
            .into_iter()
            .filter(|&(f, bw)| bw < MAX_BANDWIDTH && (FREQ_RANGE.0..=FREQ_RANGE.1).contains(&f))
            .map(|(f, _)| f)
            .collect();
        if freqs.len() < 3 {
            continue;
        }
        freqs.sort_by(f64::total_cmp);
        for k in 0..3 {
            slots[k].push(freqs[k]);
        }
    }
    let qualifying = slots[0].len();
    if qualifying == 0 || 2 * qualifying < analysed {
        return Ok(Formants::flagged());
    }
    let mut values = [0.0; 3];
    for k in 0..3 {
        values[k] = median(&mut slots[k]);
    }
    values.sort_by(f64::total_cmp);
    Ok(Formants { values, flagged: false })
}
