//! Adamax (the infinity-norm variant of Adam).

use serde::{Deserialize, Serialize};

use crate::tensor::{Gradients, ParamStore, Scalar, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamaxConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamaxConfig {
    fn default() -> Self {
        Self {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("invalid optimizer setting: {0}")]
    Config(String),
    #[error("no gradient for parameter {0}")]
    MissingGradient(String),
    #[error("gradient of {name} has shape {got:?}, parameter {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite gradient for parameter {0}")]
    NonFinite(String),
    #[error("optimizer state covers {state} parameters, store has {store}")]
    StateMismatch { state: usize, store: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl AdamaxConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let ok = self.lr.is_finite()
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps.is_finite()
            && self.eps >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(OptimError::Config(format!("{self:?}")))
        }
    }
}

/// Optimizer state. Moments are kept in `f64` whatever the parameter type.
#[derive(Debug, Clone, PartialEq)]
pub struct Adamax {
    pub config: AdamaxConfig,
    /// Number of completed steps.
    pub step: u64,
    /// First moment per parameter.
    pub m: Vec<Vec<f64>>,
    /// Exponentially weighted infinity norm per parameter.
    pub u: Vec<Vec<f64>>,
}

impl Adamax {
    pub fn new<T: Scalar>(
        config: AdamaxConfig,
        params: &ParamStore<T>,
    ) -> Result<Self, OptimError> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Ok(Self {
            config,
            step: 0,
            m: zeros.clone(),
            u: zeros,
        })
    }

    /// Applies one update. Every parameter must have a finite gradient;
    /// nothing is modified if any check fails.
    pub fn step<T: Scalar>(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &Gradients<T>,
    ) -> Result<(), OptimError> {
        if self.m.len() != params.len() || self.u.len() != params.len() {
            return Err(OptimError::StateMismatch {
                state: self.m.len(),
                store: params.len(),
            });
        }
        let mut checked: Vec<&Tensor<T>> = Vec::with_capacity(params.len());
        for (id, name, p) in params.iter() {
            let g = grads
                .param(id)
                .ok_or_else(|| OptimError::MissingGradient(name.to_string()))?;
            if g.shape() != p.shape() || self.m[id.0].len() != p.len() {
                return Err(OptimError::Shape {
                    name: name.to_string(),
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(OptimError::NonFinite(name.to_string()));
            }
            checked.push(g);
        }
        let AdamaxConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step + 1;
        let step_size = lr / (1.0 - beta1.powf(t as f64));
        let ids: Vec<_> = params.ids().collect();
        for (id, g) in ids.into_iter().zip(checked) {
            let (m, u) = (&mut self.m[id.0], &mut self.u[id.0]);
            let p = params.get_mut(id).data_mut();
            for (((p, &g), m), u) in p
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(u.iter_mut())
            {
                let g = g.to_f64().unwrap_or(f64::NAN);
                *m = beta1 * *m + (1.0 - beta1) * g;
                *u = (beta2 * *u).max(g.abs());
                let update = step_size * *m / (*u + eps);
                // a zero moment with eps = 0 leaves the parameter alone
                if update.is_finite() {
                    *p = T::lit(p.to_f64().unwrap_or(f64::NAN) - update);
                }
            }
        }
        self.step = t;
        Ok(())
    }
}
