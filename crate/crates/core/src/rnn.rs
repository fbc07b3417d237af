//! Random neural network gates used by the packet-routing engine. Each
//! routing node owns one network with a neuron per incident edge; steady-state
//! excitation probabilities rank the outgoing choices and reinforcement
//! learning shifts weight toward hops that earned good rewards.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Excitations are clamped below saturation to keep ordering meaningful.
pub const EXCITATION_CLAMP: f64 = 0.9999;
pub const MAX_FIXED_POINT_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RnnParams {
    /// Exploration rate for packet forwarding decisions.
    pub epsilon: f64,
    /// Smoothing factor `a` for the reward threshold: `T <- a*T + (1-a)*R`.
    pub threshold_smoothing_a: f64,
    pub fixed_point_tolerance: f64,
}

impl Default for RnnParams {
    fn default() -> Self {
        RnnParams {
            epsilon: 0.1,
            threshold_smoothing_a: 0.8,
            fixed_point_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Error)]
pub enum RnnError {
    #[error("network must have at least one neuron")]
    EmptyNetwork,
    #[error("fixed point iteration did not converge (residual {residual})")]
    NoConvergence { residual: f64 },
    #[error("winner index {winner} out of range for {neurons} neurons")]
    WinnerOutOfRange { winner: usize, neurons: usize },
    #[error("every neuron is forbidden")]
    AllForbidden,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomNeuralNetwork {
    m: usize,
    w_plus: Vec<f64>,
    w_minus: Vec<f64>,
    lambda_ext: Vec<f64>,
    lambda_inh: Vec<f64>,
    q: Vec<f64>,
    threshold: f64,
    smoothing_a: f64,
    tolerance: f64,
}

impl RandomNeuralNetwork {
    /// Fresh symmetric network: off-diagonal weights 0.5, unit external
    /// excitation, zero external inhibition, threshold 0, excitations solved.
    pub fn new(m: usize, params: &RnnParams) -> Result<RandomNeuralNetwork, RnnError> {
        if m == 0 {
            return Err(RnnError::EmptyNetwork);
        }
        let mut w_plus = vec![0.5; m * m];
        let mut w_minus = vec![0.5; m * m];
        for i in 0..m {
            w_plus[i * m + i] = 0.0;
            w_minus[i * m + i] = 0.0;
        }
        let mut net = RandomNeuralNetwork {
            m,
            w_plus,
            w_minus,
            lambda_ext: vec![1.0; m],
            lambda_inh: vec![0.0; m],
            q: vec![0.0; m],
            threshold: 0.0,
            smoothing_a: params.threshold_smoothing_a,
            tolerance: params.fixed_point_tolerance,
        };
        net.solve_excitations()?;
        Ok(net)
    }

    /// Build from explicit weights and external rates (diagonals ignored).
    pub fn from_weights(
        w_plus: Vec<f64>,
        w_minus: Vec<f64>,
        lambda_ext: Vec<f64>,
        lambda_inh: Vec<f64>,
        params: &RnnParams,
    ) -> Result<RandomNeuralNetwork, RnnError> {
        let m = lambda_ext.len();
        if m == 0 || w_plus.len() != m * m || w_minus.len() != m * m || lambda_inh.len() != m {
            return Err(RnnError::EmptyNetwork);
        }
        let mut net = RandomNeuralNetwork {
            m,
            w_plus,
            w_minus,
            lambda_ext,
            lambda_inh,
            q: vec![0.0; m],
            threshold: 0.0,
            smoothing_a: params.threshold_smoothing_a,
            tolerance: params.fixed_point_tolerance,
        };
        for i in 0..m {
            net.w_plus[i * m + i] = 0.0;
            net.w_minus[i * m + i] = 0.0;
        }
        net.solve_excitations()?;
        Ok(net)
    }

    pub fn neuron_count(&self) -> usize {
        self.m
    }

    pub fn excitations(&self) -> &[f64] {
        &self.q
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn weight_plus(&self, i: usize, j: usize) -> f64 {
        self.w_plus[i * self.m + j]
    }

    pub fn weight_minus(&self, i: usize, j: usize) -> f64 {
        self.w_minus[i * self.m + j]
    }

    /// Total outgoing rate of neuron `i`.
    pub fn firing_rate(&self, i: usize) -> f64 {
        let mut r = 0.0;
        for j in 0..self.m {
            r += self.w_plus[i * self.m + j] + self.w_minus[i * self.m + j];
        }
        r
    }

    /// Jacobi iteration of the steady-state equations
    /// `q(i) = lambda_plus(i) / (r(i) + lambda_minus(i))`, clamped to
    /// `EXCITATION_CLAMP`, until the largest change drops below tolerance.
    pub fn solve_excitations(&mut self) -> Result<(), RnnError> {
        let m = self.m;
        let rates: Vec<f64> = (0..m).map(|i| self.firing_rate(i)).collect();
        let mut next = vec![0.0; m];
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_FIXED_POINT_ITERS {
            for i in 0..m {
                let mut arriving_plus = self.lambda_ext[i];
                let mut arriving_minus = self.lambda_inh[i];
                for j in 0..m {
                    arriving_plus += self.q[j] * self.w_plus[j * m + i];
                    arriving_minus += self.q[j] * self.w_minus[j * m + i];
                }
                let denom = rates[i] + arriving_minus;
                let v = if denom > 0.0 {
                    arriving_plus / denom
                } else {
                    f64::INFINITY
                };
                next[i] = v.min(EXCITATION_CLAMP);
            }
            residual = self
                .q
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            self.q.copy_from_slice(&next);
            if residual < self.tolerance {
                return Ok(());
            }
        }
        Err(RnnError::NoConvergence { residual })
    }

    /// Reward-threshold reinforcement. For `reward >= T` the winner's incoming
    /// excitatory weights grow and inhibition spreads over the losers; below
    /// threshold the update is mirrored. Every touched row is renormalized to
    /// its previous firing rate, the threshold is smoothed toward the reward,
    /// and the excitations are re-solved.
    pub fn reinforce(&mut self, winner: usize, reward: f64) -> Result<(), RnnError> {
        let m = self.m;
        if winner >= m {
            return Err(RnnError::WinnerOutOfRange { winner, neurons: m });
        }
        let rewarding = reward >= self.threshold;
        self.threshold =
            self.smoothing_a * self.threshold + (1.0 - self.smoothing_a) * reward;
        if m == 1 {
            // no alternatives to shift weight between; threshold still adapts
            return Ok(());
        }
        let spread = reward / (m as f64 - 1.0);
        for i in 0..m {
            if i == winner {
                continue;
            }
            let rate_before = self.firing_rate(i);
            if rewarding {
                self.w_plus[i * m + winner] += reward;
                for k in 0..m {
                    if k != i && k != winner {
                        self.w_minus[i * m + k] += spread;
                    }
                }
            } else {
                self.w_minus[i * m + winner] += reward;
                for k in 0..m {
                    if k != i && k != winner {
                        self.w_plus[i * m + k] += spread;
                    }
                }
            }
            let rate_after = self.firing_rate(i);
            if rate_after > 0.0 && rate_before > 0.0 {
                let scale = rate_before / rate_after;
                for k in 0..m {
                    self.w_plus[i * m + k] *= scale;
                    self.w_minus[i * m + k] *= scale;
                }
            } else if rate_after > 0.0 {
                // a silent row stays silent: undo the update entirely
                for k in 0..m {
                    if rewarding {
                        if k == winner {
                            self.w_plus[i * m + k] -= reward;
                        } else if k != i {
                            self.w_minus[i * m + k] -= spread;
                        }
                    } else if k == winner {
                        self.w_minus[i * m + k] -= reward;
                    } else if k != i {
                        self.w_plus[i * m + k] -= spread;
                    }
                }
            }
        }
        self.solve_excitations()
    }

    /// Epsilon-greedy choice over the allowed neurons: exploit the highest
    /// excitation (ties to the smallest index) or explore uniformly.
    pub fn select_next<R: Rng + ?Sized>(
        &self,
        epsilon: f64,
        forbidden: &[bool],
        rng: &mut R,
    ) -> Result<usize, RnnError> {
        let allowed: Vec<usize> = (0..self.m)
            .filter(|&i| !forbidden.get(i).copied().unwrap_or(false))
            .collect();
        if allowed.is_empty() {
            return Err(RnnError::AllForbidden);
        }
        if rng.gen::<f64>() < epsilon {
            return Ok(allowed[rng.gen_range(0..allowed.len())]);
        }
        let mut best = allowed[0];
        for &i in &allowed[1..] {
            if self.q[i] > self.q[best] {
                best = i;
            }
        }
        Ok(best)
    }
}
