//! Synthetic sustained-vowel generator with known perturbation parameters.
//!
//! A glottal impulse train (band-limited impulses at fractional sample
//! positions) is perturbed cycle by cycle, filtered through a cascade of
//! three two-pole formant resonators and mixed with white noise at a given
//! signal-to-noise ratio.
//!
//! Period and amplitude perturbations are uniform: `T_i = T0 (1 + a u_i)` with
//! `u_i ~ U(-1, 1)`. For iid uniforms `E|u_i - u_{i-1}| = 2/3`, so
//! `a = 1.5 * jitter_pct / 100` makes the expected local jitter equal to
//! `jitter_pct`; shimmer is scaled the same way.
//!
//! The amplitude factor is applied to the filtered output from one glottal
//! pulse to the next rather than to the pulse itself. Scaling the pulse would
//! let the previous cycle's formant ringing leak the old amplitude into the
//! new peak and smear the realized shimmer.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::WavAudio;

/// Half-length, in samples, of the band-limited glottal impulse.
const PULSE_HALF_WIDTH: i64 = 16;
/// Peak level of the generated waveform.
const OUTPUT_PEAK: f64 = 0.9;
/// Time of the first glottal pulse, seconds.
const FIRST_PULSE: f64 = 0.002;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Formant {
    pub freq: f64,
    pub bandwidth: f64,
}

impl Formant {
    pub const fn new(freq: f64, bandwidth: f64) -> Self {
        Formant { freq, bandwidth }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub f0: f64,
    pub jitter_pct: f64,
    pub shimmer_pct: f64,
    pub noise_snr_db: f64,
    pub formants: [Formant; 3],
    pub duration: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthParams {
    /// An /a/-like vowel at 120 Hz without perturbation.
    fn default() -> Self {
        SynthParams {
            f0: 120.0,
            jitter_pct: 0.0,
            shimmer_pct: 0.0,
            noise_snr_db: 60.0,
            formants: [
                Formant::new(700.0, 80.0),
                Formant::new(1200.0, 90.0),
                Formant::new(2600.0, 120.0),
            ],
            duration: 1.0,
            sample_rate: 44_100,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthesis parameter: {0}")]
    InvalidParams(String),
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if !(60.0..=500.0).contains(&self.f0) {
            return bad("f0 must lie in [60, 500] Hz");
        }
        if !(self.duration > 0.0) || self.sample_rate == 0 {
            return bad("duration and sample rate must be positive");
        }
        if !(0.0..60.0).contains(&self.jitter_pct) || !(0.0..60.0).contains(&self.shimmer_pct) {
            return bad("jitter and shimmer must lie in [0, 60) %");
        }
        if !self.noise_snr_db.is_finite() {
            return bad("noise SNR must be finite");
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for f in &self.formants {
            if !(f.bandwidth > 0.0) || !(f.freq > 0.0 && f.freq < nyquist) {
                return bad("formants need positive bandwidth and a frequency below Nyquist");
            }
        }
        Ok(())
    }
}

/// Two-pole digital resonator with unity gain at DC.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(f: Formant, fs: f64) -> Self {
        let r = (-PI * f.bandwidth / fs).exp();
        let b = 2.0 * r * (2.0 * PI * f.freq / fs).cos();
        let c = -r * r;
        Resonator {
            a: 1.0 - b - c,
            b,
            c,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn windowed_sinc(d: f64) -> f64 {
    let half = PULSE_HALF_WIDTH as f64;
    if d.abs() >= half {
        return 0.0;
    }
    let sinc = if d.abs() < 1e-12 { 1.0 } else { (PI * d).sin() / (PI * d) };
    let hann = 0.5 * (1.0 + (PI * d / half).cos());
    sinc * hann
}

/// Renders a perturbed, filtered and noise-mixed phonation.
pub fn synth_phonation(p: &SynthParams) -> Result<WavAudio, SynthError> {
    p.validate()?;
    let fs = p.sample_rate as f64;
    let n = (p.duration * fs).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let period = fs / p.f0;
    let jitter_span = 1.5 * p.jitter_pct / 100.0;
    let shimmer_span = 1.5 * p.shimmer_pct / 100.0;

    let mut excitation = vec![0.0f64; n];
    let mut pulses = Vec::new();
    let mut t = FIRST_PULSE * fs;
    while t < n as f64 {
        let amp = 1.0 + shimmer_span * rng.random_range(-1.0..1.0);
        pulses.push((t, amp));
        let lo = ((t.ceil() as i64) - PULSE_HALF_WIDTH).max(0);
        let hi = ((t.floor() as i64) + PULSE_HALF_WIDTH).min(n as i64 - 1);
        for k in lo..=hi {
            excitation[k as usize] += windowed_sinc(k as f64 - t);
        }
        t += period * (1.0 + jitter_span * rng.random_range(-1.0..1.0));
    }

    let mut voiced = excitation;
    for f in &p.formants {
        let mut res = Resonator::new(*f, fs);
        for v in voiced.iter_mut() {
            *v = res.tick(*v);
        }
    }
    for (i, &(start, amp)) in pulses.iter().enumerate() {
        let lo = start.ceil() as usize;
        let hi = pulses.get(i + 1).map_or(n, |next| (next.0.ceil() as usize).min(n));
        for v in &mut voiced[lo..hi] {
            *v *= amp;
        }
    }

    let power = voiced.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let noise_sd = (power / 10f64.powf(p.noise_snr_db / 10.0)).sqrt();
    let mixed: Vec<f64> = voiced
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + noise_sd * z
        })
        .collect();

    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { OUTPUT_PEAK / peak } else { 0.0 };
    Ok(WavAudio {
        samples: mixed.iter().map(|v| (v * gain) as f32).collect(),
        sample_rate: p.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let p = SynthParams {
            jitter_pct: 1.0,
            shimmer_pct: 3.0,
            noise_snr_db: 20.0,
            seed: 42,
            duration: 0.3,
            ..SynthParams::default()
        };
        let a = synth_phonation(&p).unwrap();
        let b = synth_phonation(&p).unwrap();
        assert_eq!(
            a.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let c = synth_phonation(&SynthParams { seed: 43, ..p }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn output_is_bounded() {
        let p = SynthParams {
            noise_snr_db: 0.0,
            ..SynthParams::default()
        };
        let audio = synth_phonation(&p).unwrap();
        assert_eq!(audio.samples.len(), 44_100);
        assert!(audio.samples.iter().all(|s| s.abs() <= 0.9 + 1e-6));
    }

    #[test]
    fn rejects_out_of_range_params() {
        for p in [
            SynthParams { f0: 50.0, ..SynthParams::default() },
            SynthParams { duration: 0.0, ..SynthParams::default() },
            SynthParams {
                formants: [Formant::new(700.0, 0.0), Formant::new(1200.0, 90.0), Formant::new(2600.0, 120.0)],
                ..SynthParams::default()
            },
        ] {
            assert!(synth_phonation(&p).is_err());
        }
    }

    #[test]
    fn resonator_has_unity_dc_gain() {
        let mut r = Resonator::new(Formant::new(700.0, 80.0), 44_100.0);
        let mut y = 0.0;
        for _ in 0..20_000 {
            y = r.tick(1.0);
        }
        assert!((y - 1.0).abs() < 1e-9);
    }
}
