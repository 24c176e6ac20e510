//! Planned 2D complex FFTs on row-major arrays, with a process-wide plan cache.
//!
//! Transforms here are unnormalized (plain DFT sums); all physical scaling
//! lives in [`crate::grid`].

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Direction {
    Forward,
    Inverse,
}

type PlanKey = (usize, bool);

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, dir == Direction::Forward);
    let mut guard = cache.lock().unwrap();
    guard
        .entry(key)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            match dir {
                Direction::Forward => planner.plan_fft_forward(n),
                Direction::Inverse => planner.plan_fft_inverse(n),
            }
        })
        .clone()
}

/// Unnormalized 2D DFT in place: rows first, then columns via transpose.
pub fn fft2_inplace(values: &mut Array2<Complex64>, dir: Direction) {
    let (rows, cols) = values.dim();
    let row_fft = plan(cols, dir);
    for mut row in values.rows_mut() {
        let slice = row.as_slice_mut().expect("row-major layout");
        row_fft.process(slice);
    }
    let col_fft = plan(rows, dir);
    let mut transposed = Array2::<Complex64>::zeros((cols, rows));
    for i in 0..rows {
        for j in 0..cols {
            transposed[(j, i)] = values[(i, j)];
        }
    }
    for mut row in transposed.rows_mut() {
        let slice = row.as_slice_mut().expect("row-major layout");
        col_fft.process(slice);
    }
    for i in 0..rows {
        for j in 0..cols {
            values[(i, j)] = transposed[(j, i)];
        }
    }
}

/// Next FFT-friendly size >= `n` (factors 2, 3, 5, 7 only).
pub fn next_fast_size(n: usize) -> usize {
    let mut m = n.max(2);
    loop {
        let mut r = m;
        for p in [2usize, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Compensated (Neumaier) summation; keeps large reductions order-stable.
#[derive(Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn kahan_sum(iter: impl Iterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::default();
    for x in iter {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_sizes_are_smooth() {
        assert_eq!(next_fast_size(17), 18);
        assert_eq!(next_fast_size(128), 128);
        assert_eq!(next_fast_size(211), 216);
    }

    #[test]
    fn kahan_is_stable_for_ill_conditioned_sums() {
        let xs = [1.0e16, 1.0, -1.0e16, 1.0];
        assert_eq!(kahan_sum(xs.iter().copied()), 2.0);
    }

    #[test]
    fn roundtrip_unnormalized() {
        let mut a = Array2::from_shape_fn((8, 8), |(i, j)| {
            Complex64::new((i * 3 + j) as f64, (i as f64) - (j as f64))
        });
        let orig = a.clone();
        fft2_inplace(&mut a, Direction::Forward);
        fft2_inplace(&mut a, Direction::Inverse);
        let scale = 64.0;
        for (x, y) in a.iter().zip(orig.iter()) {
            assert!((x / scale - y).norm() < 1e-12);
        }
    }
}
