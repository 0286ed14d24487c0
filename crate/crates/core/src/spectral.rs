//! Short-time spectra, mel filterbank, normalized log-mel images and MFCCs.

use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Power floor applied before taking logarithms.
const POWER_FLOOR: f64 = 1e-10;
const DUMP_MAGIC: &[u8; 8] = b"VXMELSPC";

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("signal of {len} samples is shorter than one {fft_size}-sample window")]
    SignalTooShort { len: usize, fft_size: usize },
    #[error("{mel_bands} mel bands cannot be resolved by {bins} FFT bins")]
    FilterbankTooFine { mel_bands: usize, bins: usize },
    #[error("mel filter {0} has no nonzero weight")]
    EmptyFilter(usize),
    #[error("invalid spectrogram configuration: {0}")]
    InvalidConfig(String),
    #[error("spectrogram dump: {0}")]
    Dump(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectroConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub mel_bands: usize,
    pub fixed_frames: usize,
    pub mel_fmin: f64,
    pub mel_fmax: f64,
    /// Dynamic range below the per-spectrogram maximum, in dB (negative).
    pub db_floor: f64,
}

impl Default for SpectroConfig {
    fn default() -> Self {
        SpectroConfig {
            sample_rate: 44_100,
            fft_size: 1024,
            hop: 128,
            mel_bands: 128,
            fixed_frames: 256,
            mel_fmin: 0.0,
            mel_fmax: 22_050.0,
            db_floor: -80.0,
        }
    }
}

impl SpectroConfig {
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        let bad = |m: &str| Err(SpectralError::InvalidConfig(m.to_string()));
        if self.fft_size < 2 || self.hop == 0 || self.hop > self.fft_size {
            return bad("need 0 < hop <= fft_size");
        }
        if self.mel_bands < 2 || self.fixed_frames < 1 {
            return bad("need mel_bands >= 2 and fixed_frames >= 1");
        }
        if self.sample_rate == 0
            || !(self.mel_fmin >= 0.0 && self.mel_fmin < self.mel_fmax)
            || self.mel_fmax > self.sample_rate as f64 / 2.0
        {
            return bad("need 0 <= fmin < fmax <= Nyquist");
        }
        if !(self.db_floor < 0.0) {
            return bad("db_floor must be negative");
        }
        Ok(())
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Periodic Hann window.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of full frames a signal of `len` samples yields (no centre padding).
pub fn frame_count(len: usize, cfg: &SpectroConfig) -> usize {
    if len < cfg.fft_size {
        0
    } else {
        1 + (len - cfg.fft_size) / cfg.hop
    }
}

/// Hann-windowed power spectrogram, shape `(fft_size/2 + 1, n_frames)`.
pub fn stft_power(samples: &[f32], cfg: &SpectroConfig) -> Result<Array2<f64>, SpectralError> {
    cfg.validate()?;
    if samples.len() < cfg.fft_size {
        return Err(SpectralError::SignalTooShort {
            len: samples.len(),
            fft_size: cfg.fft_size,
        });
    }
    let n = cfg.fft_size;
    let frames = frame_count(samples.len(), cfg);
    let window = hann(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Array2::zeros((cfg.bins(), frames));
    for f in 0..frames {
        let start = f * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(samples[start + i] as f64 * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, v) in buf.iter().take(cfg.bins()).enumerate() {
            out[[k, f]] = v.norm_sqr();
        }
    }
    Ok(out)
}

/// Centre frequencies (Hz) of the mel filters, equally spaced in mel.
pub fn mel_centers(cfg: &SpectroConfig) -> Vec<f64> {
    mel_edges(cfg)[1..=cfg.mel_bands].to_vec()
}

fn mel_edges(cfg: &SpectroConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.mel_fmin);
    let hi = hz_to_mel(cfg.mel_fmax);
    let m = cfg.mel_bands + 1;
    (0..=m)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / m as f64))
        .collect()
}

/// Integral of a unit-height triangle (left, centre, right) from -inf to x.
fn triangle_cdf(x: f64, l: f64, c: f64, r: f64) -> f64 {
    if x <= l {
        0.0
    } else if x <= c {
        (x - l).powi(2) / (2.0 * (c - l))
    } else if x < r {
        (c - l) / 2.0 + ((r - c).powi(2) - (r - x).powi(2)) / (2.0 * (r - c))
    } else {
        (r - l) / 2.0
    }
}

/// Triangular mel filterbank, shape `(mel_bands, fft_size/2 + 1)`.
///
/// Each weight is the triangle's mean over the frequency span of its FFT bin,
/// so filters narrower than the bin spacing still receive weight.
pub fn mel_filterbank(cfg: &SpectroConfig) -> Result<Array2<f64>, SpectralError> {
    cfg.validate()?;
    let bins = cfg.bins();
    if cfg.mel_bands > bins {
        return Err(SpectralError::FilterbankTooFine {
            mel_bands: cfg.mel_bands,
            bins,
        });
    }
    let edges = mel_edges(cfg);
    let df = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let mut fb = Array2::zeros((cfg.mel_bands, bins));
    for m in 0..cfg.mel_bands {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let fk = k as f64 * df;
            let w = (triangle_cdf(fk + df / 2.0, l, c, r) - triangle_cdf(fk - df / 2.0, l, c, r)) / df;
            fb[[m, k]] = w.max(0.0);
        }
        if fb.row(m).iter().all(|&w| w == 0.0) {
            return Err(SpectralError::EmptyFilter(m));
        }
    }
    Ok(fb)
}

/// Mel power per frame, shape `(mel_bands, n_frames)`.
pub fn mel_power(samples: &[f32], cfg: &SpectroConfig) -> Result<Array2<f64>, SpectralError> {
    let power = stft_power(samples, cfg)?;
    let fb = mel_filterbank(cfg)?;
    Ok(fb.dot(&power))
}

fn to_db(p: f64) -> f64 {
    10.0 * p.max(POWER_FLOOR).log10()
}

/// Fixed-width log-mel image before normalization: dB relative to the
/// spectrogram maximum, clamped at `db_floor`, truncated or right-padded
/// with `db_floor` to `fixed_frames` columns.
pub fn log_mel_db(samples: &[f32], cfg: &SpectroConfig) -> Result<Array2<f64>, SpectralError> {
    let mel = mel_power(samples, cfg)?;
    let db = mel.mapv(to_db);
    let max = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Array2::from_elem((cfg.mel_bands, cfg.fixed_frames), cfg.db_floor);
    let keep = db.ncols().min(cfg.fixed_frames);
    for m in 0..cfg.mel_bands {
        for t in 0..keep {
            out[[m, t]] = (db[[m, t]] - max).max(cfg.db_floor);
        }
    }
    Ok(out)
}

/// Z-normalized log-mel image, the CNN input.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub bands: usize,
    pub frames: usize,
    /// Row-major `bands x frames`.
    pub values: Vec<f32>,
}

impl MelSpectrogram {
    pub fn get(&self, band: usize, frame: usize) -> f32 {
        self.values[band * self.frames + frame]
    }

    /// Writes the binary dump: 16-byte header (magic, rows, cols) then LE f32 row-major.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<(), SpectralError> {
        let io = |e: std::io::Error| SpectralError::Dump(e.to_string());
        w.write_all(DUMP_MAGIC).map_err(io)?;
        w.write_all(&(self.bands as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.frames as u32).to_le_bytes()).map_err(io)?;
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes).map_err(io)
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self, SpectralError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| SpectralError::Dump(e.to_string()))?;
        if bytes.len() < 16 || &bytes[..8] != DUMP_MAGIC {
            return Err(SpectralError::Dump("bad magic".into()));
        }
        let bands = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let frames = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() != bands * frames * 4 {
            return Err(SpectralError::Dump("payload length does not match header".into()));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(MelSpectrogram { bands, frames, values })
    }
}

/// Normalized log-mel spectrogram. Silent (zero-variance) input maps to all zeros.
pub fn log_mel_spectrogram(samples: &[f32], cfg: &SpectroConfig) -> Result<MelSpectrogram, SpectralError> {
    let db = log_mel_db(samples, cfg)?;
    let n = db.len() as f64;
    let mean = db.sum() / n;
    let var = db.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let values = if std <= 1e-9 {
        vec![0.0; db.len()]
    } else {
        db.iter().map(|v| ((v - mean) / std) as f32).collect()
    };
    Ok(MelSpectrogram {
        bands: cfg.mel_bands,
        frames: cfg.fixed_frames,
        values,
    })
}

/// Orthonormal DCT-II basis, shape `(n_coeffs, n)`.
fn dct_matrix(n_coeffs: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n_coeffs, n), |(k, m)| {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        scale * (PI * k as f64 * (2 * m + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// Frame-averaged cepstrum of a `(bands, frames)` log-mel matrix.
pub fn mfcc_from_log_mel(log_mel: &Array2<f64>, n_coeffs: usize) -> Vec<f64> {
    let basis = dct_matrix(n_coeffs, log_mel.nrows());
    let per_frame = basis.dot(log_mel);
    per_frame
        .mean_axis(Axis(1))
        .map(|m| m.to_vec())
        .unwrap_or_else(|| vec![0.0; n_coeffs])
}

/// Recording-level MFCCs: orthonormal DCT-II of per-frame mel energies (dB), averaged over frames.
pub fn mfcc(samples: &[f32], cfg: &SpectroConfig, n_coeffs: usize) -> Result<Vec<f64>, SpectralError> {
    let log_mel = mel_power(samples, cfg)?.mapv(to_db);
    Ok(mfcc_from_log_mel(&log_mel, n_coeffs))
}
