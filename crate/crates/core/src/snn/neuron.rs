//! Discrete current-based LIF neurons.
//!
//! ```text
//! i[t] = α·i[t-1] + x[t]
//! y[t] = β·y[t-1] + (1-β)·i[t] - ϑ·s[t-1]
//! s[t] = H(y[t] - ϑ),  H(0) = 1
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{param, shape, Result};
use crate::train::surrogate::{relaxed_spike, surrogate_grad};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubaParams {
    /// Synaptic current retention per step.
    pub alpha: f64,
    /// Membrane voltage retention per step.
    pub beta: f64,
    pub theta: f64,
    pub surrogate_slope: f64,
    pub surrogate_width: f64,
}

impl Default for CubaParams {
    fn default() -> Self {
        NeuronConfig::default()
            .params()
            .expect("default neuron config is valid")
    }
}

impl CubaParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return param("alpha and beta must lie in [0, 1]");
        }
        if !(self.theta > 0.0) {
            return param("theta must be positive");
        }
        if !(self.surrogate_slope > 0.0 && self.surrogate_width > 0.0) {
            return param("surrogate slope and width must be positive");
        }
        Ok(())
    }
}

/// Neuron settings as written in configs: raw decay values plus how to read them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuronConfig {
    pub threshold: f64,
    pub current_decay: f64,
    pub voltage_decay: f64,
    /// When false (the default) a decay `d` becomes retention `1 - d`;
    /// when true the decay values are used as retentions directly.
    pub decay_is_retention: bool,
    pub surrogate_slope: f64,
    pub surrogate_width: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        NeuronConfig {
            threshold: 1.25,
            current_decay: 0.25,
            voltage_decay: 0.03,
            decay_is_retention: false,
            surrogate_slope: 3.0,
            surrogate_width: 0.03,
        }
    }
}

impl NeuronConfig {
    pub fn params(&self) -> Result<CubaParams> {
        let (alpha, beta) = if self.decay_is_retention {
            (self.current_decay, self.voltage_decay)
        } else {
            (1.0 - self.current_decay, 1.0 - self.voltage_decay)
        };
        let p = CubaParams {
            alpha,
            beta,
            theta: self.threshold,
            surrogate_slope: self.surrogate_slope,
            surrogate_width: self.surrogate_width,
        };
        p.validate()?;
        Ok(p)
    }
}

/// How the spike nonlinearity is evaluated in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeMode {
    /// Binary Heaviside; backward uses the surrogate derivative.
    #[default]
    Heaviside,
    /// Smooth relaxation whose exact derivative is `surrogate_grad / slope`.
    /// Used to check BPTT against finite differences.
    Relaxed,
}

impl SpikeMode {
    #[inline]
    pub fn spike(self, y: f64, p: &CubaParams) -> f64 {
        match self {
            SpikeMode::Heaviside => {
                if y >= p.theta {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeMode::Relaxed => relaxed_spike(y, p.theta, p.surrogate_width),
        }
    }

    /// Derivative used by backprop for `ds/dy`.
    #[inline]
    pub fn derivative(self, y: f64, p: &CubaParams) -> f64 {
        let g = surrogate_grad(y, p.theta, p.surrogate_slope, p.surrogate_width);
        match self {
            SpikeMode::Heaviside => g,
            SpikeMode::Relaxed => g / p.surrogate_slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronState {
    pub i: Vec<f64>,
    pub y: Vec<f64>,
    pub s_prev: Vec<f64>,
}

impl NeuronState {
    pub fn zeros(n: usize) -> Self {
        NeuronState {
            i: vec![0.0; n],
            y: vec![0.0; n],
            s_prev: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    /// Advances one step in place and returns this step's spikes.
    pub fn step(&mut self, x: &[f64], p: &CubaParams, mode: SpikeMode) -> &[f64] {
        let leak_in = 1.0 - p.beta;
        for n in 0..self.i.len() {
            let i = p.alpha * self.i[n] + x[n];
            let y = p.beta * self.y[n] + leak_in * i - p.theta * self.s_prev[n];
            self.i[n] = i;
            self.y[n] = y;
            self.s_prev[n] = mode.spike(y, p);
        }
        &self.s_prev
    }
}

/// One step of the recurrences; returns the new state and its spikes.
pub fn cuba_step(
    state: &NeuronState,
    x: &[f64],
    params: &CubaParams,
) -> Result<(NeuronState, Vec<f64>)> {
    if x.len() != state.len() {
        return shape(format!(
            "input has {} currents for {} neurons",
            x.len(),
            state.len()
        ));
    }
    let mut next = state.clone();
    let spikes = next.step(x, params, SpikeMode::Heaviside).to_vec();
    Ok((next, spikes))
}
