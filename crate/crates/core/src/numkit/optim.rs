//! Trainable parameters and the AdamW update.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{NumError, Tensor};

#[derive(Debug, Clone)]
struct Slot {
    value: Tensor,
    grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Named map of trainable tensors with AdamW moment buffers. Iteration is
/// ordered by name, so updates and serialization are deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
    step: u64,
    grads_populated: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; <= 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
            clip_norm: 1.0,
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) {
        let n = value.numel();
        let prev = self.slots.insert(
            name.to_string(),
            Slot { value, grad: vec![0.0; n], m: vec![0.0; n], v: vec![0.0; n] },
        );
        assert!(prev.is_none(), "parameter {name} registered twice");
    }

    /// Replaces a value, keeping moments only if the shape is unchanged.
    pub fn set_value(&mut self, name: &str, value: Tensor) {
        match self.slots.get_mut(name) {
            Some(slot) if slot.value.shape() == value.shape() => slot.value = value,
            _ => {
                self.slots.remove(name);
                self.register(name, value);
            }
        }
    }

    pub fn value(&self, name: &str) -> Option<Tensor> {
        self.slots.get(name).map(|s| s.value.clone())
    }

    pub fn grad(&self, name: &str) -> Option<&[f64]> {
        self.slots.get(name).map(|s| s.grad.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&mut self) {
        for slot in self.slots.values_mut() {
            slot.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.grads_populated = false;
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, delta: &[f64]) {
        let slot = self.slots.get_mut(name).expect("gradient for known parameter");
        debug_assert_eq!(slot.grad.len(), delta.len());
        for (g, &d) in slot.grad.iter_mut().zip(delta) {
            *g += d;
        }
        self.grads_populated = true;
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for slot in self.slots.values_mut() {
            slot.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Total gradient and parameter element counts, for audits.
    pub fn grad_l2_norm(&self) -> f64 {
        self.slots
            .values()
            .flat_map(|s| s.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// One AdamW step: global-norm clipping first, then bias-corrected
    /// adaptive moments, with weight decay applied directly to parameters.
    pub fn adamw_step(&mut self, hyper: &AdamHyper) -> Result<(), NumError> {
        if !self.grads_populated {
            return Err(NumError::MissingGradients("no backward pass recorded".into()));
        }
        let scale = if hyper.clip_norm > 0.0 {
            let norm = self.grad_l2_norm();
            if norm > hyper.clip_norm {
                hyper.clip_norm / norm
            } else {
                1.0
            }
        } else {
            1.0
        };
        self.step += 1;
        let bc1 = 1.0 - hyper.beta1.powi(self.step as i32);
        let bc2 = 1.0 - hyper.beta2.powi(self.step as i32);
        for slot in self.slots.values_mut() {
            let values = Arc::make_mut(&mut slot.value.data);
            for i in 0..values.len() {
                let g = slot.grad[i] * scale;
                slot.m[i] = hyper.beta1 * slot.m[i] + (1.0 - hyper.beta1) * g;
                slot.v[i] = hyper.beta2 * slot.v[i] + (1.0 - hyper.beta2) * g * g;
                let mhat = slot.m[i] / bc1;
                let vhat = slot.v[i] / bc2;
                values[i] -=
                    hyper.lr * (mhat / (vhat.sqrt() + hyper.eps) + hyper.weight_decay * values[i]);
            }
        }
        Ok(())
    }

    /// Nudge one element, used by the finite-difference checker.
    pub fn perturb(&mut self, name: &str, index: usize, delta: f64) {
        let slot = self.slots.get_mut(name).expect("known parameter");
        Arc::make_mut(&mut slot.value.data)[index] += delta;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_scalar(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.register("p", Tensor::scalar(v));
        s
    }

    #[test]
    fn zero_grads_zero_decay_is_identity() {
        let mut s = store_scalar(3.0);
        s.accumulate_grad("p", &[0.0]);
        let hyper = AdamHyper { weight_decay: 0.0, ..AdamHyper::default() };
        s.adamw_step(&hyper).unwrap();
        assert_eq!(s.value("p").unwrap().item(), 3.0);
    }

    #[test]
    fn first_step_size_is_about_lr() {
        let mut s = store_scalar(1.0);
        s.accumulate_grad("p", &[0.37]);
        let hyper = AdamHyper { lr: 1e-3, weight_decay: 0.0, clip_norm: 0.0, ..AdamHyper::default() };
        s.adamw_step(&hyper).unwrap();
        let moved = 1.0 - s.value("p").unwrap().item();
        assert!((moved - 1e-3).abs() < 1e-6, "first step was {moved}");
    }

    #[test]
    fn clipping_scales_gradient() {
        // norm 10 with clip 1 -> applied gradient 1/10 of raw
        let mut a = store_scalar(0.0);
        a.accumulate_grad("p", &[10.0]);
        let unclipped = AdamHyper { clip_norm: 0.0, weight_decay: 0.0, ..AdamHyper::default() };
        a.adamw_step(&unclipped).unwrap();

        let mut b = store_scalar(0.0);
        b.accumulate_grad("p", &[10.0]);
        let clipped = AdamHyper { clip_norm: 1.0, weight_decay: 0.0, ..AdamHyper::default() };
        b.adamw_step(&clipped).unwrap();

        // Adam normalizes by sqrt(v), so equal signs move equally; verify the
        // internal scaled gradient by checking the first moments differ 10x
        assert!((a.slots["p"].m[0] - 10.0 * b.slots["p"].m[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let mut s = store_scalar(2.5);
        s.accumulate_grad("p", &[1.0]);
        let hyper = AdamHyper { lr: 0.0, weight_decay: 0.0, ..AdamHyper::default() };
        s.adamw_step(&hyper).unwrap();
        assert_eq!(s.value("p").unwrap().item(), 2.5);
    }

    #[test]
    fn step_without_gradients_errors() {
        let mut s = store_scalar(1.0);
        assert!(matches!(
            s.adamw_step(&AdamHyper::default()),
            Err(NumError::MissingGradients(_))
        ));
    }
}
