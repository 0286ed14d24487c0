//! Band-limited sample-rate conversion with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use thiserror::Error;

/// The rate every recording is converted to before feature extraction.
pub const CANONICAL_RATE: u32 = 44_100;

/// Kernel taps per side at the narrower of the two rates.
const HALF_TAPS: f64 = 32.0;
const KAISER_BETA: f64 = 8.6;
/// Anti-aliasing cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResampleError {
    #[error("sample rates must be positive (from {from}, to {to})")]
    NonPositiveRate { from: u32, to: u32 },
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Output length `round(len * to / from)` in exact integer arithmetic.
fn output_len(len: usize, from: u32, to: u32) -> usize {
    let num = len as u128 * to as u128;
    ((2 * num + from as u128) / (2 * from as u128)) as usize
}

/// Converts `samples` from `from_rate` to `to_rate`.
///
/// Equal rates return the input unchanged. Samples outside the signal are
/// treated as zero, so the first and last ~32 output samples carry an edge
/// transient.
pub fn resample(samples: &[f32], from_rate: u32, to_rate: u32) -> Result<Vec<f32>, ResampleError> {
    if from_rate == 0 || to_rate == 0 {
        return Err(ResampleError::NonPositiveRate {
            from: from_rate,
            to: to_rate,
        });
    }
    if from_rate == to_rate {
        return Ok(samples.to_vec());
    }

    let g = gcd(from_rate, to_rate);
    let (m, l) = ((from_rate / g) as usize, (to_rate / g) as usize);
    let cutoff = ROLLOFF * (to_rate as f64 / from_rate as f64).min(1.0);
    let half_width = HALF_TAPS / cutoff;
    let n_out = output_len(samples.len(), from_rate, to_rate);
    if l * (2.0 * half_width + 2.0) as usize > MAX_TABLE {
        return Ok(resample_direct(samples, from_rate, to_rate, n_out));
    }

    // Output j sits at input position t = j * m / l. Writing j = q * l + p,
    // t = q * m + base[p] + frac[p], so the kernel depends only on the phase p.
    let i0_beta = bessel_i0(KAISER_BETA);
    let phases: Vec<(usize, i64, Vec<f64>)> = (0..l)
        .map(|p| {
            let base = p * m / l;
            let frac = (p * m % l) as f64 / l as f64;
            let r_lo = (frac - half_width).ceil() as i64;
            let r_hi = (frac + half_width).floor() as i64;
            let weights = (r_lo..=r_hi)
                .map(|r| kernel(frac - r as f64, cutoff, half_width, i0_beta))
                .collect();
            (base, r_lo, weights)
        })
        .collect();
    let len = samples.len() as i64;
    let out = (0..n_out)
        .map(|j| {
            let (base, r_lo, weights) = &phases[j % l];
            let k0 = ((j / l) * m + base) as i64 + r_lo;
            let mut acc = 0.0;
            for (i, w) in weights.iter().enumerate() {
                let k = k0 + i as i64;
                if (0..len).contains(&k) {
                    acc += samples[k as usize] as f64 * w;
                }
            }
            acc as f32
        })
        .collect();
    Ok(out)
}

/// Polyphase tables larger than this many taps fall back to direct evaluation.
const MAX_TABLE: usize = 1 << 22;

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Windowed-sinc weight of an input sample at distance `d` (input samples).
fn kernel(d: f64, cutoff: f64, half_width: f64, i0_beta: f64) -> f64 {
    let u = d / half_width;
    let window = bessel_i0(KAISER_BETA * (1.0 - u * u).max(0.0).sqrt()) / i0_beta;
    cutoff * sinc(cutoff * d) * window
}

fn resample_direct(samples: &[f32], from_rate: u32, to_rate: u32, n_out: usize) -> Vec<f32> {
    let step = from_rate as f64 / to_rate as f64;
    let cutoff = ROLLOFF * (to_rate as f64 / from_rate as f64).min(1.0);
    let half_width = HALF_TAPS / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);
    let last = samples.len() as i64 - 1;
    (0..n_out)
        .map(|j| {
            let t = j as f64 * step;
            let lo = ((t - half_width).ceil() as i64).max(0);
            let hi = ((t + half_width).floor() as i64).min(last);
            let mut acc = 0.0;
            for k in lo..=hi {
                acc += samples[k as usize] as f64 * kernel(t - k as f64, cutoff, half_width, i0_beta);
            }
            acc as f32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_arithmetic() {
        let x = vec![0.0f32; 50_000];
        assert_eq!(resample(&x, 50_000, 44_100).unwrap().len(), 44_100);
        assert_eq!(output_len(3, 2, 1), 2);
        assert_eq!(output_len(10, 44_100, 11_025), 3);
    }

    #[test]
    fn identity_when_rates_match() {
        let x: Vec<f32> = (0..1000).map(|i| ((i * 37 % 101) as f32 / 101.0) - 0.5).collect();
        let y = resample(&x, 44_100, 44_100).unwrap();
        assert_eq!(
            x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            y.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_zero_rate() {
        assert_eq!(
            resample(&[0.0], 0, 44_100),
            Err(ResampleError::NonPositiveRate { from: 0, to: 44_100 })
        );
    }

    #[test]
    fn sine_survives_rate_change() {
        // Target is the analytic sine at the new rate; edges excluded by one kernel half-width.
        let from = 50_000u32;
        let to = 44_100u32;
        let x: Vec<f32> = (0..50_000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / from as f64).sin() as f32)
            .collect();
        let y = resample(&x, from, to).unwrap();
        let margin = 64;
        let mut sq = 0.0;
        let mut count = 0;
        for (j, &v) in y.iter().enumerate().skip(margin).take(y.len() - 2 * margin) {
            let target = (2.0 * PI * 1000.0 * j as f64 / to as f64).sin();
            sq += (v as f64 - target).powi(2);
            count += 1;
        }
        let rms = (sq / count as f64).sqrt();
        assert!(rms < 1e-3, "rms error {rms}");
    }

    #[test]
    fn polyphase_matches_direct_evaluation() {
        let x: Vec<f32> = (0..3000).map(|n| ((n as f64 * 0.37).sin() + 0.3 * (n as f64 * 0.011).cos()) as f32).collect();
        for (from, to) in [(16_000, 44_100), (50_000, 44_100), (44_100, 11_025), (44_100, 48_000), (8_000, 8_001)] {
            let fast = resample(&x, from, to).unwrap();
            let direct = resample_direct(&x, from, to, output_len(x.len(), from, to));
            assert_eq!(fast.len(), direct.len());
            let worst = fast.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
            assert!(worst < 1e-5, "{from}->{to}: {worst}");
        }
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-13);
        assert!((bessel_i0(8.6) - 750.461_159_563_165_9).abs() / 750.46 < 1e-12);
    }
}
