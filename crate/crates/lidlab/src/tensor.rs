//! Dense f64 tensors and the closed-interval box constraint.
//!
//! Everything in this crate flows through [`Tensor`]: images are 1-D tensors
//! of length 784, layer activations are 1-D tensors, perturbations are the
//! elementwise difference of two tensors. The struct is deliberately plain —
//! a shape vector plus row-major data — because nothing here needs strides,
//! views, or broadcasting.

use crate::error::{Error, Result};

/// Dense tensor: row-major `data` with `shape.iter().product() == data.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, validating that the shape matches the data length and
    /// that every entry is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} implies {} elements, data has {}",
                shape,
                expected,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "Tensor::new",
            });
        }
        Ok(Tensor { shape, data })
    }

    /// 1-D tensor from a vector of finite values.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let shape = vec![data.len()];
        Tensor::new(shape, data)
    }

    /// 1-D zero tensor of the given length.
    pub fn zeros(len: usize) -> Self {
        Tensor {
            shape: vec![len],
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Elementwise difference `self - other`.
    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "cannot subtract shape {:?} from {:?}",
                other.shape, self.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Elementwise sum `self + other`.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "cannot add shape {:?} to {:?}",
                other.shape, self.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Sum of absolute values.
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Euclidean norm.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Squared Euclidean norm (no square root; used by the elastic-net score).
    pub fn l2_norm_squared(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Euclidean distance to another tensor of the same shape.
    pub fn euclidean_distance(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "distance between shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum.sqrt())
    }

    /// Clamp every entry into the interval.
    pub fn clamp(&self, interval: Interval) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| interval.clamp(*v)).collect(),
        }
    }
}

/// Closed interval `[lo, hi]`, the box constraint for valid pixel values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::Config(format!(
                "interval requires finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Dot product with four independent accumulators. The interleaving keeps
/// the FP add chains short enough for the CPU to pipeline; the summation
/// order is fixed, so results are reproducible bit-for-bit.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4 * 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < chunks {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut tail = 0.0;
    while i < a.len() {
        tail += a[i] * b[i];
        i += 1;
    }
    (s0 + s1) + (s2 + s3) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn new_rejects_shape_data_mismatch() {
        let err = Tensor::new(vec![2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn new_rejects_non_finite_entries() {
        for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            let err = Tensor::new(vec![2], vec![1.0, bad]).unwrap_err();
            assert!(matches!(err, Error::NonFinite { .. }));
        }
    }

    #[test]
    fn norms_match_hand_computed_values() {
        let t = Tensor::vector(vec![3.0, -4.0]).unwrap();
        assert_eq!(t.l2_norm(), 5.0);
        assert_eq!(t.l1_norm(), 7.0);
        assert_eq!(t.l2_norm_squared(), 25.0);
    }

    #[test]
    fn zero_tensor_has_zero_norms() {
        let t = Tensor::zeros(10);
        assert_eq!(t.l1_norm(), 0.0);
        assert_eq!(t.l2_norm(), 0.0);
    }

    #[test]
    fn sub_and_distance_agree() {
        let a = Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::vector(vec![0.0, 0.0, 0.0]).unwrap();
        let d = a.sub(&b).unwrap();
        assert_eq!(d.data, vec![1.0, 2.0, 3.0]);
        assert_eq!(a.euclidean_distance(&b).unwrap(), d.l2_norm());
    }

    #[test]
    fn sub_rejects_mismatched_shapes() {
        let a = Tensor::zeros(3);
        let b = Tensor::zeros(4);
        assert!(a.sub(&b).is_err());
    }

    #[test]
    fn clamp_pins_values_to_interval() {
        let t = Tensor::vector(vec![-0.5, 0.25, 1.5]).unwrap();
        let c = t.clamp(Interval::UNIT);
        assert_eq!(c.data, vec![0.0, 0.25, 1.0]);
    }

    #[test]
    fn interval_rejects_degenerate_bounds() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn dot_matches_naive_summation() {
        // Lengths around the unroll boundary.
        for n in [0, 1, 3, 4, 5, 7, 8, 11] {
            let a: Vec<f64> = (0..n).map(|i| (i as f64) * 0.5 - 1.0).collect();
            let b: Vec<f64> = (0..n).map(|i| 1.0 / (i as f64 + 1.0)).collect();
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - naive).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn l2_never_exceeds_l1(data in proptest::collection::vec(-1e3..1e3f64, 1..64)) {
            let t = Tensor::vector(data).unwrap();
            prop_assert!(t.l2_norm() <= t.l1_norm() + 1e-9);
        }

        #[test]
        fn triangle_inequality(
            a in proptest::collection::vec(-1e3..1e3f64, 8),
            b in proptest::collection::vec(-1e3..1e3f64, 8),
        ) {
            let ta = Tensor::vector(a).unwrap();
            let tb = Tensor::vector(b).unwrap();
            let sum = ta.add(&tb).unwrap();
            prop_assert!(sum.l2_norm() <= ta.l2_norm() + tb.l2_norm() + 1e-9);
        }

        #[test]
        fn clamped_values_stay_in_box(data in proptest::collection::vec(-10.0..10.0f64, 1..32)) {
            let t = Tensor::vector(data).unwrap();
            let c = t.clamp(Interval::UNIT);
            prop_assert!(c.data.iter().all(|v| Interval::UNIT.contains(*v)));
        }
    }
}
