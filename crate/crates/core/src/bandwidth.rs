//! Channel budget arithmetic.
//!
//! A noiseless channel of bandwidth `B` with `K` signal levels carries at most
//! `2B log2 K` bits per second. Bounding the message entropy by that of a
//! Gaussian with the observed variance, `ln(2πeσ²)`, gives a ceiling on the
//! symbol rate `n_max = 4B log2 K / ln(2πeσ²)`. With `N` agents broadcasting
//! `L`-symbol messages at `F` steps per second and per-step sending probability
//! `p`, the channel sees `N(N-1)LFp` symbols per second, so
//!
//! ```text
//! p_sup = clip(n_max / (N(N-1)LF), 0, 1)
//! C_sup = p_sup / (1 - γ)
//! ```
//!
//! where `C_sup` bounds the expected discounted number of sends.

use alloc::collections::VecDeque;

use crate::math;
use crate::{Error, Result};

/// Inputs of the budget derivation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BudgetInputs {
    /// Channel bandwidth in Hz.
    pub bandwidth: f64,
    /// Number of discrete signal levels.
    pub levels: u32,
    /// Message length in symbols.
    pub msg_len: usize,
    /// System sampling frequency in Hz (environment steps per second).
    pub freq: f64,
    pub agents: usize,
    /// Pooled message variance.
    pub sigma2: f64,
    pub gamma: f64,
}

/// Full derivation, from inputs to the penalty threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BandwidthBudget {
    pub inputs: BudgetInputs,
    /// Gaussian entropy bound `ln(2πeσ²)` in nats.
    pub entropy_bound: f64,
    /// Maximum data rate `2B log2 K` in bits per second.
    pub max_bit_rate: f64,
    /// Maximum symbol rate `n_max`; infinite when the entropy bound is not positive.
    pub n_max: f64,
    /// Symbols per second with every agent sending every step, `N(N-1)LF`.
    pub full_rate: f64,
    /// Ceiling before clipping.
    pub p_unclipped: f64,
    pub p_sup: f64,
    pub c_sup: f64,
    /// The Gaussian bound was not positive, so `p_sup` was forced to 1.
    pub degenerate: bool,
}

impl BudgetInputs {
    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite and > 0",
                })
            }
        };
        // bandwidth may be +inf (unconstrained channel)
        if !(self.bandwidth > 0.0) {
            return Err(Error::InvalidParameter {
                name: "bandwidth",
                reason: "must be > 0",
            });
        }
        if self.levels < 2 {
            return Err(Error::InvalidParameter {
                name: "levels",
                reason: "need at least 2 signal levels",
            });
        }
        if self.msg_len == 0 {
            return Err(Error::InvalidParameter {
                name: "msg_len",
                reason: "must be > 0",
            });
        }
        if self.agents == 0 {
            return Err(Error::InvalidParameter {
                name: "agents",
                reason: "must be > 0",
            });
        }
        positive("freq", self.freq)?;
        positive("sigma2", self.sigma2)?;
        check_gamma(self.gamma)
    }

    pub fn derive(&self) -> Result<BandwidthBudget> {
        self.validate()?;
        let entropy_bound = gaussian_entropy_bound(self.sigma2)?;
        let max_bit_rate = 2.0 * self.bandwidth * math::log2(self.levels as f64);
        let n = self.agents as f64;
        let full_rate = n * (n - 1.0) * self.msg_len as f64 * self.freq;
        let degenerate = entropy_bound <= 0.0;
        let n_max = if degenerate {
            f64::INFINITY
        } else {
            max_bit_rate / (0.5 * entropy_bound)
        };
        let p_unclipped = if full_rate == 0.0 {
            f64::INFINITY
        } else {
            n_max / full_rate
        };
        let p_sup = p_unclipped.clamp(0.0, 1.0);
        Ok(BandwidthBudget {
            inputs: *self,
            entropy_bound,
            max_bit_rate,
            n_max,
            full_rate,
            p_unclipped,
            p_sup,
            c_sup: penalty_threshold(p_sup, self.gamma)?,
            degenerate,
        })
    }

    /// Same inputs with a new variance estimate.
    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        BudgetInputs { sigma2, ..*self }
    }
}

/// `ln(2πeσ²)`, the entropy bound on a message component with variance σ².
pub fn gaussian_entropy_bound(sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: "must be finite and > 0",
        });
    }
    Ok(math::ln(2.0 * core::f64::consts::PI * core::f64::consts::E * sigma2))
}

/// Per-step sending-probability ceiling `p_sup`.
pub fn sending_probability_bound(inputs: &BudgetInputs) -> Result<f64> {
    inputs.derive().map(|b| b.p_sup)
}

/// `C_sup = p_sup / (1 - γ)`.
pub fn penalty_threshold(p_sup: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_sup) {
        return Err(Error::InvalidParameter {
            name: "p_sup",
            reason: "must lie in [0, 1]",
        });
    }
    check_gamma(gamma)?;
    Ok(p_sup / (1.0 - gamma))
}

/// Bandwidth at which `p_sup` equals `p` (inverse of the ceiling formula).
pub fn bandwidth_for_probability(p: f64, inputs: &BudgetInputs) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: "must lie in (0, 1]",
        });
    }
    let entropy = gaussian_entropy_bound(inputs.sigma2)?;
    if entropy <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: "Gaussian entropy bound is not positive",
        });
    }
    let n = inputs.agents as f64;
    Ok(p * entropy * n * (n - 1.0) * inputs.msg_len as f64 * inputs.freq
        / (4.0 * math::log2(inputs.levels as f64)))
}

pub fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "gamma",
            reason: "must lie in [0, 1)",
        })
    }
}

/// Empirical channel occupancy.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelStats {
    /// Sends per agent per step.
    pub probability: f64,
    /// Symbols per second on the channel.
    pub symbol_rate: f64,
    pub within_budget: bool,
}

/// `p̂ = triggers / (N·steps)`, `rate = N(N-1)LF·p̂`.
pub fn channel_stats(triggers: u64, steps: u64, budget: &BandwidthBudget) -> Result<ChannelStats> {
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "must be > 0",
        });
    }
    let probability = triggers as f64 / (budget.inputs.agents as f64 * steps as f64);
    let symbol_rate = budget.full_rate * probability;
    Ok(ChannelStats {
        probability,
        symbol_rate,
        within_budget: symbol_rate <= budget.n_max,
    })
}

/// `Σ_t γ^t g_t` over one episode's gate sequence.
pub fn discounted_penalty(gates: &[u8], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for &g in gates {
        total += discount * g as f64;
        discount *= gamma;
    }
    total
}

/// Sliding-window population variance of message components, pooled over
/// agents and vector dimensions.
#[derive(Debug, Clone)]
pub struct VarianceEstimator {
    window: VecDeque<f64>,
    capacity: usize,
    sigma2: f64,
}

impl VarianceEstimator {
    pub fn new(capacity: usize, initial_sigma2: f64) -> Self {
        VarianceEstimator {
            window: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            sigma2: initial_sigma2,
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Appends components (evicting the oldest) without recomputing σ².
    pub fn push(&mut self, message: &[f64]) {
        for &v in message {
            if self.window.len() == self.capacity {
                self.window.pop_front();
            }
            self.window.push_back(v);
        }
    }

    /// Recomputes σ² from the window; keeps the previous value with fewer
    /// than two components.
    pub fn refresh(&mut self) -> f64 {
        let n = self.window.len();
        if n >= 2 {
            let mean = self.window.iter().sum::<f64>() / n as f64;
            self.sigma2 = self.window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        }
        self.sigma2
    }

    /// Appends a batch of messages and returns the refreshed σ².
    pub fn update<'a, I>(&mut self, messages: I) -> f64
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        for m in messages {
            self.push(m);
        }
        self.refresh()
    }
}
