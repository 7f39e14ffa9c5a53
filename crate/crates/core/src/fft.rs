//! Unnormalized periodic FFTs on `n` (d = 1) or `n × n` (d = 2, row-major) grids.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub struct GridFft {
    d: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl std::fmt::Debug for GridFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFft")
            .field("d", &self.d)
            .field("n", &self.n)
            .finish()
    }
}

impl Clone for GridFft {
    fn clone(&self) -> Self {
        Self {
            d: self.d,
            n: self.n,
            forward: Arc::clone(&self.forward),
            inverse: Arc::clone(&self.inverse),
            scratch: self.scratch.clone(),
            transposed: self.transposed.clone(),
        }
    }
}

impl GridFft {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return Err(Error::Domain(format!("FFT grid dimension {d} unsupported")));
        }
        if n == 0 {
            return Err(Error::Domain("empty FFT grid".into()));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Ok(Self {
            d,
            n,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            transposed: if d == 2 {
                vec![Complex64::default(); n * n]
            } else {
                Vec::new()
            },
        })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `X_k = Σ_j x_j e^{−2πi jk/n}` along every axis.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        let plan = Arc::clone(&self.forward);
        self.run(&*plan, data);
    }

    /// Inverse transform without the `1/n^d` factor.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let plan = Arc::clone(&self.inverse);
        self.run(&*plan, data);
    }

    fn run(&mut self, plan: &dyn Fft<f64>, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len(), "buffer does not match grid");
        plan.process_with_scratch(data, &mut self.scratch);
        if self.d == 2 {
            let n = self.n;
            transpose(data, &mut self.transposed, n);
            plan.process_with_scratch(&mut self.transposed, &mut self.scratch);
            transpose(&self.transposed, data, n);
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}
