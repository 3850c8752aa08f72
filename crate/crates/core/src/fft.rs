//! Free-space discrete convolution on a cell-centred grid.
//!
//! A translation-invariant kernel `K(di, dj)` is applied as
//! `out_i = Σ_j K(i - j) src_j`, either by direct summation or by a
//! zero-padded FFT evaluating the same sum.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

struct Fft2d {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { m, forward: planner.plan_fft_forward(m), inverse: planner.plan_fft_inverse(m) }
    }

    fn process(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let fft = if inverse { &self.inverse } else { &self.forward };
        let m = self.m;
        buf.par_chunks_mut(m).for_each(|row| fft.process(row));
        transpose(buf, m);
        buf.par_chunks_mut(m).for_each(|row| fft.process(row));
        transpose(buf, m);
    }
}

fn transpose(buf: &mut [Complex<f64>], m: usize) {
    for r in 0..m {
        for c in r + 1..m {
            buf.swap(r * m + c, c * m + r);
        }
    }
}

/// Translation-invariant kernel on an `n × n` grid with cached spectrum.
pub(crate) struct Convolution {
    n: usize,
    /// `K(di, dj)` for `di, dj ∈ [-(n-1), n-1]`, stored at `(dj + n - 1) * (2n - 1) + di + n - 1`.
    table: Vec<f64>,
    fft: Fft2d,
    spectrum: Vec<Complex<f64>>,
}

impl Convolution {
    pub(crate) fn new(n: usize, kernel: impl Fn(i64, i64) -> f64 + Sync) -> Self {
        let w = 2 * n - 1;
        let off = n as i64 - 1;
        let table: Vec<f64> = (0..w * w)
            .into_par_iter()
            .map(|k| kernel((k % w) as i64 - off, (k / w) as i64 - off))
            .collect();
        let m = 2 * n;
        let fft = Fft2d::new(m);
        let mut spectrum = vec![Complex::new(0.0, 0.0); m * m];
        for dj in -off..=off {
            for di in -off..=off {
                let v = table[((dj + off) as usize) * w + (di + off) as usize];
                let r = dj.rem_euclid(m as i64) as usize;
                let c = di.rem_euclid(m as i64) as usize;
                spectrum[r * m + c] = Complex::new(v, 0.0);
            }
        }
        fft.process(&mut spectrum, false);
        Self { n, table, fft, spectrum }
    }

    pub(crate) fn kernel(&self, di: i64, dj: i64) -> f64 {
        let off = self.n as i64 - 1;
        self.table[((dj + off) as usize) * (2 * self.n - 1) + (di + off) as usize]
    }

    /// Direct summation; each target accumulates sources in storage order.
    pub(crate) fn apply_direct(&self, src: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = ((k % n) as i64, (k / n) as i64);
                let mut acc = 0.0;
                for sj in 0..n {
                    let row = &src[sj * n..(sj + 1) * n];
                    for (si, &s) in row.iter().enumerate() {
                        if s != 0.0 {
                            acc += self.kernel(i - si as i64, j - sj as i64) * s;
                        }
                    }
                }
                acc
            })
            .collect()
    }

    /// Zero-padded FFT evaluation of the same sum.
    pub(crate) fn apply_fft(&self, src: &[f64]) -> Vec<f64> {
        let n = self.n;
        let m = 2 * n;
        let mut buf = vec![Complex::new(0.0, 0.0); m * m];
        for j in 0..n {
            for i in 0..n {
                buf[j * m + i] = Complex::new(src[j * n + i], 0.0);
            }
        }
        self.fft.process(&mut buf, false);
        buf.iter_mut().zip(&self.spectrum).for_each(|(b, k)| *b *= k);
        self.fft.process(&mut buf, true);
        let scale = 1.0 / (m * m) as f64;
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                out[j * n + i] = buf[j * m + i].re * scale;
            }
        }
        out
    }
}

/// Exact inverse of the five-point `-(∂²_x + ∂²_y)` on an `n × n` block with zero Dirichlet ghosts,
/// by the sine transform in each direction.
pub(crate) struct DirichletPoisson {
    n: usize,
    h: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl DirichletPoisson {
    pub(crate) fn new(n: usize, h: f64) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, h, fft }
    }

    /// In-place DST-I along every row of an `n × n` array.
    fn dst_rows(&self, data: &mut [f64]) {
        let n = self.n;
        let m = 2 * (n + 1);
        data.par_chunks_mut(n).for_each(|row| {
            let mut buf = vec![Complex::new(0.0, 0.0); m];
            for (k, &v) in row.iter().enumerate() {
                buf[k + 1] = Complex::new(v, 0.0);
                buf[m - k - 1] = Complex::new(-v, 0.0);
            }
            self.fft.process(&mut buf);
            for (k, v) in row.iter_mut().enumerate() {
                *v = -0.5 * buf[k + 1].im;
            }
        });
    }

    fn dst2(&self, data: &mut [f64]) {
        let n = self.n;
        self.dst_rows(data);
        for r in 0..n {
            for c in r + 1..n {
                data.swap(r * n + c, c * n + r);
            }
        }
        self.dst_rows(data);
        for r in 0..n {
            for c in r + 1..n {
                data.swap(r * n + c, c * n + r);
            }
        }
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut data = rhs.to_vec();
        self.dst2(&mut data);
        let s: Vec<f64> = (1..=n)
            .map(|p| (p as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin().powi(2))
            .collect();
        let scale = (2.0 / (n + 1) as f64).powi(2);
        let h2 = self.h * self.h;
        for q in 0..n {
            for p in 0..n {
                data[q * n + p] *= scale * h2 / (4.0 * (s[p] + s[q]));
            }
        }
        self.dst2(&mut data);
        data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_matches_direct() {
        let n = 16;
        let conv = Convolution::new(n, |a, b| 1.0 / (1.0 + (a * a + 2 * b * b) as f64) + 0.1 * a as f64);
        let src: Vec<f64> = (0..n * n).map(|k| ((k * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let d = conv.apply_direct(&src);
        let f = conv.apply_fft(&src);
        for (a, b) in d.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn dirichlet_poisson_inverts_stencil() {
        let n = 24;
        let h = 0.3;
        let poisson = DirichletPoisson::new(n, h);
        let rhs: Vec<f64> = (0..n * n).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        let u = poisson.solve(&rhs);
        let at = |i: i64, j: i64| if i < 0 || j < 0 || i >= n as i64 || j >= n as i64 { 0.0 } else { u[j as usize * n + i as usize] };
        for j in 0..n as i64 {
            for i in 0..n as i64 {
                let lap = -(at(i + 1, j) + at(i - 1, j) + at(i, j + 1) + at(i, j - 1) - 4.0 * at(i, j)) / (h * h);
                assert!((lap - rhs[j as usize * n + i as usize]).abs() < 1e-10);
            }
        }
    }
}
