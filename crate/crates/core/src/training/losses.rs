//! Per-sample losses and their gradients with respect to network outputs.

use alloc::vec::Vec;

use crate::math;
use crate::nn::{self, Mlp};
use crate::{Error, Result};

/// `δ = r + γ(1 - done)·V(υ') - V(υ)`.
pub fn td_error(
    net: &Mlp,
    reward: f64,
    upsilon: &[f64],
    next_upsilon: &[f64],
    done: bool,
    gamma: f64,
) -> Result<f64> {
    let v = net.forward(upsilon)?[0];
    let bootstrap = if done { 0.0 } else { net.forward(next_upsilon)?[0] };
    Ok(reward + gamma * bootstrap - v)
}

/// Squared TD error `δ²` and `dL/dV(υ) = -2δ` (the target is held fixed).
pub fn value_loss(delta: f64) -> (f64, [f64; 1]) {
    (delta * delta, [-2.0 * delta])
}

/// Policy-gradient loss `-ln π[a]·δ - α·H(π)` for a categorical head.
///
/// Returns the loss and its gradient with respect to the probabilities, ready
/// to be fed back through the softmax output layer. `δ` is treated as a
/// constant.
pub fn policy_loss(probs: &[f64], action: usize, delta: f64, alpha: f64) -> Result<(f64, Vec<f64>)> {
    nn::check_distribution(probs)?;
    let pa = *probs.get(action).ok_or(Error::InvalidAction(action))?;
    if pa <= 0.0 {
        return Err(Error::InvalidDistribution);
    }
    let entropy = nn::categorical_entropy(probs);
    let loss = -math::ln(pa) * delta - alpha * entropy;
    let upstream = probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let pg = if k == action { -delta / pa } else { 0.0 };
            pg + alpha * (math::ln(p.max(f64::MIN_POSITIVE)) + 1.0)
        })
        .collect();
    Ok((loss, upstream))
}

/// `r' = r - λ·g`.
pub fn shaped_reward(reward: f64, lambda: f64, gate: u8) -> f64 {
    reward - lambda * gate as f64
}

/// Penalty TD error `g + γ·V_p(υ') - V_p(υ)`.
///
/// With `episodic` the bootstrap is cut at episode ends; otherwise the penalty
/// is treated as a continuing per-step cost, so `V_p` estimates the
/// discounted sending rate regardless of episode length.
pub fn penalty_td_error(
    net: &Mlp,
    gate: u8,
    upsilon: &[f64],
    next_upsilon: &[f64],
    done: bool,
    gamma: f64,
    episodic: bool,
) -> Result<f64> {
    td_error(net, gate as f64, upsilon, next_upsilon, done && episodic, gamma)
}

/// Dual ascent on the constraint `V_p ≤ C_sup`: `λ' = max(0, λ - η(C_sup - V_p))`.
pub fn lambda_update(lambda: f64, v_penalty: f64, c_sup: f64, eta: f64) -> f64 {
    (lambda - eta * (-v_penalty + c_sup)).max(0.0)
}
