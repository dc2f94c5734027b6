//! Forward and reverse passes of the recurrent cell and dense head.

use nalgebra::{DMatrix, DVector};

use crate::rng::SplitMix64;

use super::{Model, ModelConfig, Normalization};

/// Gate weights and biases of the recurrent cell. Each weight matrix has
/// shape hidden x (hidden + input): it acts on the concatenation of the
/// previous recurrent state and the current input row.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_forget: DMatrix<f64>,
    pub w_update: DMatrix<f64>,
    pub w_output: DMatrix<f64>,
    pub w_candidate: DMatrix<f64>,
    pub b_forget: DVector<f64>,
    pub b_update: DVector<f64>,
    pub b_output: DVector<f64>,
    pub b_candidate: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    /// tanh for hidden layers, identity for the output layer.
    pub tanh_activation: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One cell update: gates from the concatenated [h; x], then
/// c' = f (*) c + u (*) c~ and h' = o (*) tanh c'.
pub fn lstm_step(
    x: &DVector<f64>,
    h: &DVector<f64>,
    c: &DVector<f64>,
    params: &LstmParams,
) -> (DVector<f64>, DVector<f64>) {
    let hidden = h.len();
    let mut xhat = DVector::zeros(hidden + x.len());
    xhat.rows_mut(0, hidden).copy_from(h);
    xhat.rows_mut(hidden, x.len()).copy_from(x);

    let f = (&params.w_forget * &xhat + &params.b_forget).map(sigmoid);
    let u = (&params.w_update * &xhat + &params.b_update).map(sigmoid);
    let o = (&params.w_output * &xhat + &params.b_output).map(sigmoid);
    let g = (&params.w_candidate * &xhat + &params.b_candidate).map(f64::tanh);

    let c_new = f.component_mul(c) + u.component_mul(&g);
    let h_new = o.component_mul(&c_new.map(f64::tanh));
    (h_new, c_new)
}

/// Network output for one normalized window; no denormalization.
pub(super) fn forward_normalized(window_norm: &DMatrix<f64>, model: &Model) -> DVector<f64> {
    let hidden = model.config.hidden;
    let mut h = DVector::zeros(hidden);
    let mut c = DVector::zeros(hidden);
    for j in 0..window_norm.nrows() {
        let x = window_norm.row(j).transpose();
        let (h2, c2) = lstm_step(&x, &h, &c, &model.lstm);
        h = h2;
        c = c2;
    }
    let mut act = h;
    for layer in &model.dense {
        act = &layer.weight * &act + &layer.bias;
        if layer.tanh_activation {
            act = act.map(f64::tanh);
        }
    }
    act
}

/// Predict the next observation row from a raw lookback window: rows are
/// normalized with the model statistics, the network runs in normalized
/// space, and the output is mapped back to physical units.
pub fn forward(window: &DMatrix<f64>, model: &Model) -> DVector<f64> {
    let norm_window = normalize_window(window, &model.norm);
    let y = forward_normalized(&norm_window, model);
    model.norm.denormalize(&y)
}

pub(super) fn normalize_window(window: &DMatrix<f64>, norm: &Normalization) -> DMatrix<f64> {
    let mut out = window.clone();
    for j in 0..window.nrows() {
        for i in 0..window.ncols() {
            out[(j, i)] = (window[(j, i)] - norm.mean[i]) / norm.scale[i];
        }
    }
    out
}

/// Fresh model with splitmix-initialized weights (uniform in [-s, s] with
/// s = 1/sqrt(fan-in), drawn in a fixed tensor order) and zero biases.
pub fn init_model(config: &ModelConfig, input_dim: usize, norm: Normalization) -> Model {
    let h = config.hidden;
    let mut rng = SplitMix64::new(config.seed);
    let lstm_scale = 1.0 / ((h + input_dim) as f64).sqrt();
    let gate = |rng: &mut SplitMix64| {
        DMatrix::from_fn(h, h + input_dim, |_, _| rng.next_symmetric(lstm_scale))
    };
    let w_forget = gate(&mut rng);
    let w_update = gate(&mut rng);
    let w_output = gate(&mut rng);
    let w_candidate = gate(&mut rng);
    let lstm = LstmParams {
        w_forget,
        w_update,
        w_output,
        w_candidate,
        b_forget: DVector::zeros(h),
        b_update: DVector::zeros(h),
        b_output: DVector::zeros(h),
        b_candidate: DVector::zeros(h),
    };
    let mut dense = Vec::new();
    let mut in_width = h;
    let mut widths = config.dense_widths.clone();
    widths.push(input_dim);
    for (li, &w) in widths.iter().enumerate() {
        let scale = 1.0 / (in_width as f64).sqrt();
        dense.push(DenseLayer {
            weight: DMatrix::from_fn(w, in_width, |_, _| rng.next_symmetric(scale)),
            bias: DVector::zeros(w),
            tanh_activation: li + 1 < widths.len(),
        });
        in_width = w;
    }
    Model {
        config: config.clone(),
        input_dim,
        lstm,
        dense,
        norm,
        initial_loss: f64::NAN,
        final_loss: f64::NAN,
        loss_history: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(hidden: usize, input: usize) -> LstmParams {
        LstmParams {
            w_forget: DMatrix::zeros(hidden, hidden + input),
            w_update: DMatrix::zeros(hidden, hidden + input),
            w_output: DMatrix::zeros(hidden, hidden + input),
            w_candidate: DMatrix::zeros(hidden, hidden + input),
            b_forget: DVector::zeros(hidden),
            b_update: DVector::zeros(hidden),
            b_output: DVector::zeros(hidden),
            b_candidate: DVector::zeros(hidden),
        }
    }

    #[test]
    fn zero_parameters_zero_cell_state() {
        // sigma(0) = 1/2 and tanh(0) = 0, so c' = 0 and h' = 0
        let params = zero_params(3, 2);
        let x = DVector::from_vec(vec![1.5, -0.3]);
        let h = DVector::from_vec(vec![0.2, -0.1, 0.4]);
        let c = DVector::zeros(3);
        let (h2, c2) = lstm_step(&x, &h, &c, &params);
        assert!(h2.norm() < 1e-15);
        assert!(c2.norm() < 1e-15);
    }

    #[test]
    fn scalar_hand_evaluation() {
        // W = [1, 0] picks up only h = 0: gates 1/2, candidate 0,
        // c' = 1/2, h' = 1/2 tanh(1/2)
        let mut params = zero_params(1, 1);
        for w in [
            &mut params.w_forget,
            &mut params.w_update,
            &mut params.w_output,
            &mut params.w_candidate,
        ] {
            w[(0, 0)] = 1.0;
        }
        let (h2, c2) = lstm_step(
            &DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![1.0]),
            &params,
        );
        assert!((c2[0] - 0.5).abs() < 1e-15);
        assert!((h2[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-12);
        assert!((h2[0] - 0.231_058_578_63).abs() < 1e-10);
    }

    #[test]
    fn cell_state_growth_bounded() {
        let mut rng = SplitMix64::new(12);
        let mut params = zero_params(4, 3);
        for w in [
            &mut params.w_forget,
            &mut params.w_update,
            &mut params.w_output,
            &mut params.w_candidate,
        ] {
            *w = DMatrix::from_fn(4, 7, |_, _| rng.next_symmetric(2.0));
        }
        for _ in 0..50 {
            let x = DVector::from_fn(3, |_, _| rng.next_symmetric(3.0));
            let h = DVector::from_fn(4, |_, _| rng.next_symmetric(1.0));
            let c = DVector::from_fn(4, |_, _| rng.next_symmetric(5.0));
            let (_, c2) = lstm_step(&x, &h, &c, &params);
            for i in 0..4 {
                assert!(c2[i].abs() <= c[i].abs() + 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn zero_model_forward_returns_feature_means() {
        let config = ModelConfig {
            hidden: 4,
            dense_widths: vec![5],
            ..Default::default()
        };
        let norm = Normalization {
            mean: DVector::from_vec(vec![280.0, 300.0]),
            scale: DVector::from_vec(vec![2.0, 3.0]),
        };
        let mut model = init_model(&config, 2, norm);
        // wipe the random weights
        for w in [
            &mut model.lstm.w_forget,
            &mut model.lstm.w_update,
            &mut model.lstm.w_output,
            &mut model.lstm.w_candidate,
        ] {
            w.fill(0.0);
        }
        for l in &mut model.dense {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let window = DMatrix::from_row_slice(1, 2, &[123.0, 456.0]);
        let y = forward(&window, &model);
        assert!((y[0] - 280.0).abs() < 1e-12);
        assert!((y[1] - 300.0).abs() < 1e-12);
    }

    #[test]
    fn forward_deterministic_and_lookback_one_composition() {
        let config = ModelConfig {
            hidden: 3,
            dense_widths: vec![4],
            seed: 9,
            ..Default::default()
        };
        let norm = Normalization {
            mean: DVector::zeros(2),
            scale: DVector::from_element(2, 1.0),
        };
        let model = init_model(&config, 2, norm);
        let window = DMatrix::from_row_slice(1, 2, &[0.3, -0.8]);
        let y1 = forward(&window, &model);
        let y2 = forward(&window, &model);
        assert_eq!(y1.as_slice(), y2.as_slice()); // bit-identical

        // lookback 1 is one cell step plus the dense head
        let x = window.row(0).transpose();
        let (h, _) = lstm_step(&x, &DVector::zeros(3), &DVector::zeros(3), &model.lstm);
        let mut act = h;
        for layer in &model.dense {
            act = &layer.weight * &act + &layer.bias;
            if layer.tanh_activation {
                act = act.map(f64::tanh);
            }
        }
        assert_eq!(y1.as_slice(), act.as_slice());
    }

    #[test]
    fn parameter_count_formula() {
        let config = ModelConfig {
            hidden: 5,
            dense_widths: vec![7, 6],
            ..Default::default()
        };
        let norm = Normalization {
            mean: DVector::zeros(3),
            scale: DVector::from_element(3, 1.0),
        };
        let model = init_model(&config, 3, norm);
        let h = 5;
        let m = 3;
        let expected = 4 * h * (h + m) + 4 * h + (7 * h + 7) + (6 * 7 + 6) + (m * 6 + m);
        assert_eq!(model.parameter_count(), expected);
    }
}
