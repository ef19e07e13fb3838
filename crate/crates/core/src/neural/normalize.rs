use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::NeuralError;

/// Per-feature affine scaling: `x_norm = (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer<T> {
    pub input_shift: Vec<T>,
    pub input_scale: Vec<T>,
    pub output_shift: Vec<T>,
    pub output_scale: Vec<T>,
}

fn min_max<T: Scalar>(rows: &[Vec<T>], dim: usize) -> (Vec<T>, Vec<T>) {
    let mut lo = vec![T::infinity(); dim];
    let mut hi = vec![T::neg_infinity(); dim];
    for r in rows {
        for k in 0..dim {
            lo[k] = lo[k].min(r[k]);
            hi[k] = hi[k].max(r[k]);
        }
    }
    let scale = lo
        .iter()
        .zip(&hi)
        .map(|(&l, &h)| if h > l { h - l } else { T::one() })
        .collect();
    (lo, scale)
}

impl<T: Scalar> Normalizer<T> {
    pub fn identity(n_in: usize, n_out: usize) -> Self {
        Self {
            input_shift: vec![T::zero(); n_in],
            input_scale: vec![T::one(); n_in],
            output_shift: vec![T::zero(); n_out],
            output_scale: vec![T::one(); n_out],
        }
    }

    /// Min-max scaling onto `[0, 1]`; constant columns get unit scale.
    pub fn fit(xs: &[Vec<T>], ys: &[Vec<T>]) -> Result<Self, NeuralError> {
        let (Some(x0), Some(y0)) = (xs.first(), ys.first()) else {
            return Err(NeuralError::EmptySlice);
        };
        let (input_shift, input_scale) = min_max(xs, x0.len());
        let (output_shift, output_scale) = min_max(ys, y0.len());
        let n = Self {
            input_shift,
            input_scale,
            output_shift,
            output_scale,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.input_shift.len() != self.input_scale.len() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.input_shift.len(),
                found: self.input_scale.len(),
            });
        }
        if self.output_shift.len() != self.output_scale.len() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.output_shift.len(),
                found: self.output_scale.len(),
            });
        }
        let all = self
            .input_shift
            .iter()
            .chain(&self.input_scale)
            .chain(&self.output_shift)
            .chain(&self.output_scale);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite);
        }
        if self
            .input_scale
            .iter()
            .chain(&self.output_scale)
            .any(|&s| s <= T::zero())
        {
            return Err(NeuralError::ZeroScale);
        }
        Ok(())
    }

    pub fn normalize_input(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.input_shift.iter().zip(&self.input_scale))
            .map(|(&v, (&s, &c))| (v - s) / c)
            .collect()
    }

    pub fn normalize_output(&self, y: &[T]) -> Vec<T> {
        y.iter()
            .zip(self.output_shift.iter().zip(&self.output_scale))
            .map(|(&v, (&s, &c))| (v - s) / c)
            .collect()
    }

    pub fn denormalize_output(&self, y: &[T]) -> Vec<T> {
        y.iter()
            .zip(self.output_shift.iter().zip(&self.output_scale))
            .map(|(&v, (&s, &c))| v * c + s)
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Normalizer<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect();
        Normalizer {
            input_shift: c(&self.input_shift),
            input_scale: c(&self.input_scale),
            output_shift: c(&self.output_shift),
            output_scale: c(&self.output_scale),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_maps_to_unit_interval() {
        let xs = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![2.0, 5.0]];
        let ys = vec![vec![-1.0, 59.0], vec![0.0, 60.0], vec![-0.5, 59.5]];
        let n = Normalizer::fit(&xs, &ys).unwrap();
        assert_eq!(n.normalize_input(&[3.0, 5.0]), vec![1.0, 0.0]);
        assert_eq!(n.input_scale[1], 1.0);
        let y = n.normalize_output(&[-0.5, 59.5]);
        assert_eq!(n.denormalize_output(&y), vec![-0.5, 59.5]);
    }

    #[test]
    fn empty_fit_fails() {
        assert!(Normalizer::<f64>::fit(&[], &[]).is_err());
    }
}
