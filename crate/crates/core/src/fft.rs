//! Centered, unitary 1D DFT along an arbitrary tensor axis.
//!
//! The DC term sits at index `n / 2` (floor) in both domains and both
//! directions are scaled by `1/sqrt(n)`, so the transform is unitary for
//! every length, odd lengths included.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{row_major_strides, AxisLabel, ComplexTensor, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        match dir {
            Direction::Forward => p.plan_fft_forward(n),
            Direction::Inverse => p.plan_fft_inverse(n),
        }
    })
}

/// Transforms every line of `data` along `axis` in place.
pub fn transform_axis(data: &mut [C64], extents: &[usize], axis: usize, dir: Direction) {
    let n = extents[axis];
    if n == 1 {
        return;
    }
    let strides = row_major_strides(extents);
    let stride = strides[axis];
    let outer: usize = extents[..axis].iter().product();
    let block = n * stride;
    let fft = plan(n, dir);
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut line = vec![C64::new(0.0, 0.0); n];
    let half = n / 2;
    let scale = 1.0 / (n as f64).sqrt();
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * block + inner;
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + ((i + half) % n) * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (k, v) in line.iter().enumerate() {
                data[base + ((k + half) % n) * stride] = v * scale;
            }
        }
    }
}

/// Centered unitary DFT along the axis labeled `label`.
pub fn fft1d(t: &ComplexTensor, label: AxisLabel) -> Result<ComplexTensor> {
    along(t, label, Direction::Forward)
}

/// Inverse of [`fft1d`].
pub fn ifft1d(t: &ComplexTensor, label: AxisLabel) -> Result<ComplexTensor> {
    along(t, label, Direction::Inverse)
}

fn along(t: &ComplexTensor, label: AxisLabel, dir: Direction) -> Result<ComplexTensor> {
    let axis = t
        .axis(label)
        .ok_or_else(|| Error::Axis(format!("no {label} axis in {:?}", t.labels())))?;
    let mut data = t.data().to_vec();
    transform_axis(&mut data, t.extents(), axis, dir);
    t.with_data(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec1(v: &[f64]) -> ComplexTensor {
        ComplexTensor::new(vec![v.len()], vec![AxisLabel::Pe], v.iter().map(|&x| C64::new(x, 0.0)).collect()).unwrap()
    }

    /// Direct O(n²) centered unitary DFT.
    fn naive(x: &[C64], inverse: bool) -> Vec<C64> {
        let n = x.len();
        let c = (n / 2) as f64;
        let sign = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                let mut acc = C64::new(0.0, 0.0);
                for (i, xi) in x.iter().enumerate() {
                    let ph = sign * 2.0 * std::f64::consts::PI * (k as f64 - c) * (i as f64 - c) / n as f64;
                    acc += xi * C64::from_polar(1.0, ph);
                }
                acc / (n as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn centered_impulse_gives_constant() {
        let y = fft1d(&vec1(&[0.0, 0.0, 1.0, 0.0]), AxisLabel::Pe).unwrap();
        for z in y.data() {
            assert!((z - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_maps_to_center() {
        let y = fft1d(&vec1(&[1.0; 4]), AxisLabel::Pe).unwrap();
        let expected = [0.0, 0.0, 2.0, 0.0];
        for (z, e) in y.data().iter().zip(expected) {
            assert!((z - C64::new(e, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn matches_naive_dft_all_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=17 {
            let x: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let t = ComplexTensor::new(vec![n], vec![AxisLabel::Time], x.clone()).unwrap();
            for (inverse, got) in [(false, fft1d(&t, AxisLabel::Time).unwrap()), (true, ifft1d(&t, AxisLabel::Time).unwrap())] {
                let want = naive(&x, inverse);
                for (a, b) in got.data().iter().zip(&want) {
                    assert!((a - b).norm() < 1e-12, "n={n} inverse={inverse}");
                }
            }
        }
    }

    #[test]
    fn parseval_and_inverse_along_each_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ext = vec![3, 5, 4];
        let labels = vec![AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Time];
        let t = ComplexTensor::from_fn(ext, labels.clone(), |_| C64::new(rng.random::<f64>(), rng.random::<f64>())).unwrap();
        for l in labels {
            let f = fft1d(&t, l).unwrap();
            assert!((f.norm() - t.norm()).abs() / t.norm() < 1e-12);
            let back = ifft1d(&f, l).unwrap();
            let err: f64 = back.data().iter().zip(t.data()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err / t.norm() < 1e-12);
        }
        assert!(fft1d(&t, AxisLabel::Coil).is_err());
    }
}
