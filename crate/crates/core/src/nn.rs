//! Small numeric helpers shared by the layers.

use ndarray::{Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// Random source for initialization and dropout.
pub type ModelRng = ChaCha8Rng;

/// Range used for the char embeddings and highway weights.
pub const UNIFORM_INIT: f64 = 0.05;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Glorot normal: `std = sqrt(2 / (fan_in + fan_out))`.
pub fn xavier_normal(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Array2<f64> {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(rng))
}

pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-bound, bound).expect("valid range");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Row-wise softmax in place. Entries equal to `-inf` receive zero weight.
pub fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            row.fill(0.0);
            continue;
        }
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Inverted dropout: each entry is `0` or `1 / (1 - p)`.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut impl Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < p { 0.0 } else { keep })
}

/// Applies a fresh dropout mask when training; returns the mask for the backward pass.
pub fn maybe_dropout(
    x: Array2<f64>,
    p: f64,
    rng: Option<&mut ModelRng>,
) -> (Array2<f64>, Option<Array2<f64>>) {
    match rng {
        Some(rng) if p > 0.0 => {
            let mask = dropout_mask(x.nrows(), x.ncols(), p, rng);
            (x * &mask, Some(mask))
        }
        _ => (x, None),
    }
}

pub fn apply_mask(grad: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => grad * m,
        None => grad,
    }
}

pub fn column_sums(m: &Array2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(0))
}

pub fn concat_cols(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    a.iter().chain(b.iter()).copied().collect()
}

/// A tensor exposed by a layer, with the group used for freezing.
pub struct NamedTensor<'a> {
    pub name: String,
    pub group: crate::model::LayerGroup,
    pub value: ArrayViewD<'a, f64>,
}

pub struct NamedTensorMut<'a> {
    pub name: String,
    pub group: crate::model::LayerGroup,
    pub value: ArrayViewMutD<'a, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn softmax_rows_normalize_and_skip_neg_inf() {
        let mut m = array![[0.0, 0.0, f64::NEG_INFINITY], [1.0, 2.0, 3.0]];
        softmax_rows(&mut m);
        assert_eq!(m[[0, 2]], 0.0);
        assert!((m[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((m.row(1).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn xavier_spread() {
        let mut rng = ModelRng::seed_from_u64(0);
        let w = xavier_normal(200, 200, &mut rng);
        let var = w.mapv(|v| v * v).mean().unwrap();
        assert!((var - 2.0 / 400.0).abs() < 5e-4, "{var}");
    }
}
