//! From-scratch LSTM forecaster for observation vectors.
//!
//! One recurrent cell with forget/update/output gates is unrolled over a
//! lookback window of past observation rows; a small dense head maps the
//! final recurrent state to the next observation vector. Training is
//! full-batch Adam on a mean-squared-error loss, with exact gradients by
//! backpropagation through time. Everything is deterministic given the
//! seed: weights come from a splitmix64 stream and batch gradients are
//! summed in sample order.

mod checkpoint;
mod net;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use net::{forward, lstm_step, DenseLayer, LstmParams};
pub use train::{
    adam_step, batch_loss, gradient, rollout, slide_window, train, AdamHyper, AdamState, ParamGrads,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::observation::ObservationSeries;

/// Training hyperparameters and architecture description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// How many previous observation rows feed one prediction.
    pub lookback: usize,
    pub hidden: usize,
    /// Widths of the dense hidden layers (tanh); a linear output layer of
    /// width M is appended automatically.
    pub dense_widths: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 1,
            hidden: 32,
            dense_widths: vec![32, 32],
            learning_rate: 1e-2,
            epochs: 10000,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 || self.hidden == 0 {
            return Err(Error::Format(
                "lookback and hidden size must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Format(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-feature affine statistics: x_norm = (x - mean) / scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: DVector<f64>,
    pub scale: DVector<f64>,
}

/// Scales below this are clamped so constant features stay finite.
pub const SCALE_FLOOR: f64 = 1e-12;

impl Normalization {
    /// Statistics of a row set (population standard deviation, floored).
    pub fn fit(rows: &[DVector<f64>]) -> Self {
        let m = rows[0].len();
        let count = rows.len() as f64;
        let mut mean = DVector::zeros(m);
        for r in rows {
            mean += r;
        }
        mean /= count;
        let mut var: DVector<f64> = DVector::zeros(m);
        for r in rows {
            for i in 0..m {
                var[i] += (r[i] - mean[i]).powi(2);
            }
        }
        let scale =
            DVector::from_iterator(m, (0..m).map(|i| (var[i] / count).sqrt().max(SCALE_FLOOR)));
        Self { mean, scale }
    }

    pub fn normalize(&self, row: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            row.len(),
            row.iter()
                .enumerate()
                .map(|(i, &v)| (v - self.mean[i]) / self.scale[i]),
        )
    }

    pub fn denormalize(&self, row: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            row.len(),
            row.iter()
                .enumerate()
                .map(|(i, &v)| v * self.scale[i] + self.mean[i]),
        )
    }
}

/// Sliding-window training pairs drawn from the leading rows of an
/// observation series, plus the normalization fitted on those rows.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// Raw lookback windows, one `lb x M` matrix per pair (rows = time).
    pub inputs: Vec<DMatrix<f64>>,
    /// Raw target rows.
    pub targets: Vec<DVector<f64>>,
    pub norm: Normalization,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Build sliding windows over the first `rows` rows of the series.
///
/// With rows indexed 0..rows-1 and lookback lb this yields rows - lb pairs;
/// the window starting at row s predicts row s + lb.
pub fn build_training_set(
    series: &ObservationSeries,
    rows: usize,
    lookback: usize,
) -> Result<TrainingSet> {
    if rows > series.len() {
        return Err(Error::Format(format!(
            "requested {rows} training rows but the series has {}",
            series.len()
        )));
    }
    if lookback == 0 || lookback + 1 > rows {
        return Err(Error::LookbackTooLarge { lookback, rows });
    }
    let m = series.sensor_count();
    let norm = Normalization::fit(&series.rows[..rows]);
    let mut inputs = Vec::with_capacity(rows - lookback);
    let mut targets = Vec::with_capacity(rows - lookback);
    for start in 0..(rows - lookback) {
        let mut window = DMatrix::zeros(lookback, m);
        for j in 0..lookback {
            window
                .row_mut(j)
                .copy_from(&series.rows[start + j].transpose());
        }
        inputs.push(window);
        targets.push(series.rows[start + lookback].clone());
    }
    Ok(TrainingSet {
        inputs,
        targets,
        norm,
    })
}

/// The trained forecaster.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub lstm: LstmParams,
    pub dense: Vec<DenseLayer>,
    pub norm: Normalization,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Per-epoch training losses (not persisted in checkpoints).
    pub loss_history: Vec<f64>,
}

impl Model {
    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let h = self.config.hidden;
        let m = self.input_dim;
        let lstm = 4 * h * (h + m) + 4 * h;
        let dense: usize = self
            .dense
            .iter()
            .map(|l| l.weight.nrows() * l.weight.ncols() + l.bias.len())
            .sum();
        lstm + dense
    }
}

/// Mean squared error over the components of two vectors.
pub fn loss_mse(pred: &DVector<f64>, target: &DVector<f64>) -> f64 {
    assert_eq!(pred.len(), target.len());
    let mut acc = 0.0;
    for i in 0..pred.len() {
        acc += (pred[i] - target[i]).powi(2);
    }
    acc / pred.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_with(rows: usize, m: usize) -> ObservationSeries {
        ObservationSeries {
            times: (0..rows).map(|k| k as f64).collect(),
            rows: (0..rows)
                .map(|k| DVector::from_fn(m, |i, _| (k * m + i) as f64))
                .collect(),
        }
    }

    #[test]
    fn pair_counts_match_lookback_arithmetic() {
        let series = series_with(60, 3);
        // k_off = 50 rows: lb = 1 gives 49 pairs, lb = 49 gives a single pair
        assert_eq!(build_training_set(&series, 50, 1).unwrap().len(), 49);
        assert_eq!(build_training_set(&series, 50, 49).unwrap().len(), 1);
        assert!(matches!(
            build_training_set(&series, 50, 50),
            Err(Error::LookbackTooLarge {
                lookback: 50,
                rows: 50
            })
        ));
    }

    #[test]
    fn window_contents_enumerated() {
        let series = series_with(3, 2);
        let tset = build_training_set(&series, 3, 2).unwrap();
        assert_eq!(tset.len(), 1);
        // input rows 0 and 1, target row 2
        assert_eq!(tset.inputs[0][(0, 0)], 0.0);
        assert_eq!(tset.inputs[0][(0, 1)], 1.0);
        assert_eq!(tset.inputs[0][(1, 0)], 2.0);
        assert_eq!(tset.inputs[0][(1, 1)], 3.0);
        assert_eq!(tset.targets[0].as_slice(), &[4.0, 5.0]);
    }

    #[test]
    fn normalization_round_trip() {
        let series = series_with(20, 4);
        let norm = Normalization::fit(&series.rows);
        for r in &series.rows {
            let back = norm.denormalize(&norm.normalize(r));
            for i in 0..r.len() {
                assert!((back[i] - r[i]).abs() <= 1e-12 * r[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_feature_scale_floored() {
        let rows: Vec<DVector<f64>> = (0..5).map(|_| DVector::from_element(3, 7.0)).collect();
        let norm = Normalization::fit(&rows);
        for i in 0..3 {
            assert_eq!(norm.scale[i], SCALE_FLOOR);
            assert_eq!(norm.normalize(&rows[0])[i], 0.0);
        }
    }

    #[test]
    fn mse_values() {
        let p = DVector::from_vec(vec![1.0, 3.0]);
        let t = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(loss_mse(&p, &t), 2.5);
        assert_eq!(loss_mse(&t, &t), 0.0);
        let mut rng = crate::rng::SplitMix64::new(6);
        for _ in 0..20 {
            let a = DVector::from_fn(5, |_, _| rng.next_symmetric(3.0));
            let b = DVector::from_fn(5, |_, _| rng.next_symmetric(3.0));
            assert!(loss_mse(&a, &b) >= 0.0);
        }
    }
}
