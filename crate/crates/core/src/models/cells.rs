//! Recurrent cells. Each step reads the previous state `h` and the encoded
//! instance `u`, both `[batch, hidden]`.

use super::{Model, ModelError};
use crate::autodiff::{Activation, Tape, Var};

/// `h' = tanh(W [h, u] + b)`
pub(super) fn rnn_step(model: &Model, tape: &mut Tape, h: Var, u: Var) -> Result<Var, ModelError> {
    let hu = tape.concat(h, u)?;
    let pre = model.dense(tape, "cell", hu)?;
    Ok(tape.activation(Activation::Tanh, pre))
}

/// GRU step:
///
/// ```text
/// z, r = sigmoid(W_g [h, u] + b_g)
/// n    = tanh(W_c [r * h, u] + b_c)
/// h'   = z * h + (1 - z) * n
/// ```
pub(super) fn gru_step(model: &Model, tape: &mut Tape, h: Var, u: Var) -> Result<Var, ModelError> {
    let d = tape.value(h).shape()[1];
    let hu = tape.concat(h, u)?;
    let gates = model.dense(tape, "cell.gates", hu)?;
    let gates = tape.activation(Activation::Sigmoid, gates);
    let z = tape.slice_cols(gates, 0, d)?;
    let r = tape.slice_cols(gates, d, d)?;
    let rh = tape.mul(r, h)?;
    let rhu = tape.concat(rh, u)?;
    let cand = model.dense(tape, "cell.cand", rhu)?;
    let cand = tape.activation(Activation::Tanh, cand);
    // z * h + (1 - z) * n == n + z * (h - n)
    let diff = tape.sub(h, cand)?;
    let keep = tape.mul(z, diff)?;
    Ok(tape.add(cand, keep)?)
}

/// LSTM step with input, forget and output gates:
///
/// ```text
/// i, f, g, o = W [h, u] + b
/// c' = sigmoid(f) * c + sigmoid(i) * tanh(g)
/// h' = sigmoid(o) * tanh(c')
/// ```
pub(super) fn lstm_step(
    model: &Model,
    tape: &mut Tape,
    h: Var,
    c: Var,
    u: Var,
) -> Result<(Var, Var), ModelError> {
    let d = tape.value(h).shape()[1];
    let hu = tape.concat(h, u)?;
    let pre = model.dense(tape, "cell", hu)?;
    let if_pre = tape.slice_cols(pre, 0, 2 * d)?;
    let if_gates = tape.activation(Activation::Sigmoid, if_pre);
    let i = tape.slice_cols(if_gates, 0, d)?;
    let f = tape.slice_cols(if_gates, d, d)?;
    let g = tape.slice_cols(pre, 2 * d, d)?;
    let g = tape.activation(Activation::Tanh, g);
    let o = tape.slice_cols(pre, 3 * d, d)?;
    let o = tape.activation(Activation::Sigmoid, o);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.activation(Activation::Tanh, c_next);
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}
