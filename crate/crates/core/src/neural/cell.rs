use ndarray::Array1;

use super::params::LayerParams;
use super::NeuralError;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activations of one cell step, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub forget: Array1<f64>,
    pub input: Array1<f64>,
    pub candidate: Array1<f64>,
    pub output: Array1<f64>,
    pub c: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
}

fn check_len(tensor: &str, v: &Array1<f64>, expected: usize) -> Result<(), NeuralError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(NeuralError::Shape {
            tensor: tensor.into(),
            expected: vec![expected],
            found: vec![v.len()],
        })
    }
}

/// One LSTM recurrence without peepholes:
///
/// ```text
/// f = σ(W_f x + U_f h + b_f)    i = σ(W_i x + U_i h + b_i)
/// g = tanh(W_c x + U_c h + b_c) o = σ(W_o x + U_o h + b_o)
/// c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
/// ```
pub fn lstm_cell_step(
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
    params: &LayerParams,
) -> Result<(Array1<f64>, Array1<f64>), NeuralError> {
    let cache = cell_forward(x, h_prev, c_prev, params)?;
    Ok((cache.h, cache.c))
}

pub(crate) fn cell_forward(
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
    params: &LayerParams,
) -> Result<CellCache, NeuralError> {
    let hidden = params.hidden();
    check_len("x", x, params.input_dim())?;
    check_len("h_prev", h_prev, hidden)?;
    check_len("c_prev", c_prev, hidden)?;

    let forget = params.forget.preactivation(x, h_prev).mapv(sigmoid);
    let input = params.input.preactivation(x, h_prev).mapv(sigmoid);
    let candidate = params.candidate.preactivation(x, h_prev).mapv(f64::tanh);
    let output = params.output.preactivation(x, h_prev).mapv(sigmoid);
    let c = &forget * c_prev + &input * &candidate;
    let tanh_c = c.mapv(f64::tanh);
    let h = &output * &tanh_c;

    Ok(CellCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        forget,
        input,
        candidate,
        output,
        c,
        tanh_c,
        h,
    })
}
