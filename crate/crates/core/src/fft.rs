//! Row/column 2D FFT over a `height × width` row-major buffer.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2d {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2d {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn forward(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.run(data, scratch, &self.row_fwd, &self.col_fwd);
    }

    /// Unnormalized inverse; callers divide by `width * height`.
    pub fn inverse(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.run(data, scratch, &self.row_inv, &self.col_inv);
    }

    fn run(
        &self,
        data: &mut [Complex64],
        scratch: &mut Vec<Complex64>,
        rows: &Arc<dyn Fft<f64>>,
        cols: &Arc<dyn Fft<f64>>,
    ) {
        let (w, h) = (self.width, self.height);
        debug_assert_eq!(data.len(), w * h);
        rows.process(data);
        scratch.resize(w * h, Complex64::default());
        for r in 0..h {
            for c in 0..w {
                scratch[c * h + r] = data[r * w + c];
            }
        }
        cols.process(scratch);
        for c in 0..w {
            for r in 0..h {
                data[r * w + c] = scratch[c * h + r];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_round_trip() {
        let (w, h) = (6, 5);
        let orig: Vec<Complex64> = (0..w * h)
            .map(|i| Complex64::new(i as f64 * 0.25, (i % 3) as f64))
            .collect();
        let fft = Fft2d::new(w, h);
        let mut data = orig.clone();
        let mut scratch = Vec::new();
        fft.forward(&mut data, &mut scratch);
        fft.inverse(&mut data, &mut scratch);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a / (w * h) as f64 - b).norm() < 1e-12);
        }
    }
}
