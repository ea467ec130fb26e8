use rand::Rng;

use crate::error::{AbcError, Result};
use crate::kernel::SmoothingKernel;
use crate::model::{GenerativeModel, ProposalKernel};
use crate::rng::StreamRng;
use crate::types::{ParamVector, SummaryVector};

/// A discrete fixture: θ ∈ {0, 1, 2} with a uniform prior and a
/// Binomial(3, p_θ) summary, small enough to enumerate exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeStateModel {
    pub success: [f64; 3],
    pub s_obs: f64,
}

impl Default for ThreeStateModel {
    fn default() -> Self {
        Self { success: [0.2, 0.5, 0.8], s_obs: 2.0 }
    }
}

const TRIALS: u32 = 3;

fn state_of(theta: &ParamVector) -> Option<usize> {
    let t = theta[0];
    (0..3).find(|&k| t == k as f64)
}

impl ThreeStateModel {
    pub fn new(success: [f64; 3], s_obs: f64) -> Result<Self> {
        if success.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(AbcError::Config("success probabilities must lie in [0,1]".into()));
        }
        Ok(Self { success, s_obs })
    }

    /// `P(s = k | θ = state)`.
    pub fn summary_pmf(&self, state: usize, k: u32) -> f64 {
        let p = self.success[state];
        let choose = [1.0, 3.0, 3.0, 1.0][k as usize];
        choose * p.powi(k as i32) * (1.0 - p).powi((TRIALS - k) as i32)
    }

    fn kernel_at(&self, kernel: &SmoothingKernel, k: u32) -> f64 {
        kernel.eval_unchecked(k as f64 - self.s_obs)
    }

    /// Exact ABC posterior over the three states.
    pub fn abc_posterior(&self, kernel: &SmoothingKernel) -> [f64; 3] {
        let mut w = [0.0; 3];
        for (a, wa) in w.iter_mut().enumerate() {
            *wa = (0..=TRIALS).map(|k| self.summary_pmf(a, k) * self.kernel_at(kernel, k)).sum();
        }
        let total: f64 = w.iter().sum();
        w.map(|x| x / total)
    }

    /// Stationary flows `π(a) P(a, b)` of the single-replicate ABC-MCMC chain
    /// with the [`StateJump`] proposal.
    pub fn exact_flows(&self, kernel: &SmoothingKernel) -> [[f64; 3]; 3] {
        let mut joint = [[0.0; 4]; 3];
        let mut total = 0.0;
        for (a, row) in joint.iter_mut().enumerate() {
            for k in 0..=TRIALS {
                row[k as usize] = self.summary_pmf(a, k) * self.kernel_at(kernel, k);
                total += row[k as usize];
            }
        }
        let mut flows = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in (0..3).filter(|&b| b != a) {
                let mut f = 0.0;
                for k in 0..=TRIALS {
                    let current = self.kernel_at(kernel, k);
                    if joint[a][k as usize] == 0.0 {
                        continue;
                    }
                    let accept: f64 = (0..=TRIALS)
                        .map(|k2| self.summary_pmf(b, k2) * (self.kernel_at(kernel, k2) / current).min(1.0))
                        .sum();
                    f += joint[a][k as usize] / total * 0.5 * accept;
                }
                flows[a][b] = f;
            }
        }
        flows
    }
}

impl GenerativeModel for ThreeStateModel {
    fn name(&self) -> &str {
        "three_state"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn summary_dim(&self) -> usize {
        1
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> ParamVector {
        ParamVector::scalar(rng.random_range(0..3u32) as f64)
    }

    fn prior_density(&self, theta: &ParamVector) -> f64 {
        if state_of(theta).is_some() {
            1.0 / 3.0
        } else {
            0.0
        }
    }

    fn simulate_summary(&self, theta: &ParamVector, rng: &mut StreamRng) -> Result<SummaryVector> {
        let state = state_of(theta).ok_or_else(|| AbcError::InvalidInput(format!("θ = {} is not a state", theta[0])))?;
        let hits = (0..TRIALS).filter(|_| rng.random::<f64>() < self.success[state]).count();
        Ok(SummaryVector::scalar(hits as f64))
    }

    fn observed_summary(&self) -> Option<SummaryVector> {
        Some(SummaryVector::scalar(self.s_obs))
    }
}

/// Jump uniformly to one of the two other states.
#[derive(Debug, Clone, Copy, Default)]
pub struct StateJump;

impl ProposalKernel for StateJump {
    fn sample(&self, from: &ParamVector, rng: &mut StreamRng) -> ParamVector {
        let current = state_of(from).unwrap_or(0);
        let offset = rng.random_range(1..3usize);
        ParamVector::scalar(((current + offset) % 3) as f64)
    }

    fn log_density(&self, from: &ParamVector, to: &ParamVector) -> f64 {
        match (state_of(from), state_of(to)) {
            (Some(a), Some(b)) if a != b => 0.5f64.ln(),
            _ => f64::NEG_INFINITY,
        }
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}
