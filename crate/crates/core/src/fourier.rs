//! Trigonometric interpolation of periodic samples.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;

fn forward(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

fn inverse(mut spec: Vec<Complex64>) -> Vec<f64> {
    let n = spec.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    spec.into_iter().map(|z| z.re / n as f64).collect()
}

/// Signed frequency of FFT bin `j` for length `n`.
fn freq(j: usize, n: usize) -> f64 {
    if j <= n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

/// Resamples a real periodic sequence onto `m` equispaced points by zero
/// padding (or truncating) its spectrum. The Nyquist bin of an even-length
/// input is split symmetrically so the interpolant stays real.
pub fn resample(samples: &[f64], m: usize) -> Vec<f64> {
    let n = samples.len();
    if n == m {
        return samples.to_vec();
    }
    let spec = forward(samples);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let keep = n.min(m);
    // frequencies strictly inside the shared band
    let inner = (keep - 1) / 2;
    out[0] = spec[0];
    for j in 1..=inner {
        out[j] = spec[j];
        out[m - j] = spec[n - j];
    }
    if keep % 2 == 0 {
        let h = keep / 2;
        if n == keep {
            // input Nyquist bin splits evenly between ±h
            out[h] += spec[h] * 0.5;
            out[m - h] += spec[h] * 0.5;
        } else {
            // output Nyquist bin collects both ±h
            out[h] = spec[h] + spec[n - h];
        }
    }
    let scale = m as f64 / n as f64;
    inverse(out).into_iter().map(|x| x * scale).collect()
}

/// Derivative with respect to arclength of samples on `[0, period)`.
pub fn derivative(samples: &[f64], period: f64) -> Vec<f64> {
    let n = samples.len();
    let mut spec = forward(samples);
    for (j, c) in spec.iter_mut().enumerate() {
        if n % 2 == 0 && j == n / 2 {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c *= Complex64::new(0.0, TAU * freq(j, n) / period);
        }
    }
    inverse(spec)
}

/// Band-limited interpolant of periodic samples, evaluable anywhere.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    period: f64,
    mean: f64,
    /// (cos, sin) amplitudes for frequencies 1..
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigInterpolant {
    pub fn new(samples: &[f64], period: f64) -> Self {
        let n = samples.len();
        let spec = forward(samples);
        let nf = n as f64;
        let top = (n - 1) / 2;
        let mut cos = Vec::with_capacity(n / 2);
        let mut sin = Vec::with_capacity(n / 2);
        for c in spec.iter().take(top + 1).skip(1) {
            cos.push(2.0 * c.re / nf);
            sin.push(-2.0 * c.im / nf);
        }
        if n % 2 == 0 {
            // split Nyquist term: contributes cos(n/2 · θ) only
            cos.push(spec[n / 2].re / nf);
            sin.push(0.0);
        }
        Self { period, mean: spec[0].re / nf, cos, sin }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let theta = TAU * s / self.period;
        let (s1, c1) = theta.sin_cos();
        let step = Complex64::new(c1, s1);
        let mut rot = step;
        let mut acc = self.mean;
        for (a, b) in self.cos.iter().zip(&self.sin) {
            acc += a * rot.re + b * rot.im;
            rot *= step;
        }
        acc
    }
}
