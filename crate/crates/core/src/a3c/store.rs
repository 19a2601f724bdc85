use std::sync::{Arc, Mutex};

use crate::nn::{apply_sgd, Gradients, NetParams};

use super::{A3cError, Hyperparams, Optimizer};

/// Immutable view of the global networks at one version.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub actor: NetParams,
    pub critic: NetParams,
    pub version: u64,
}

#[derive(Debug)]
struct Inner {
    current: Arc<Snapshot>,
    /// Running mean of squared gradients, flat, for the RMS variant.
    sq_actor: Vec<f64>,
    sq_critic: Vec<f64>,
}

/// The global actor and critic. Every apply is one serialised transaction
/// producing a fresh snapshot; readers hold whole snapshots and never see a
/// partial update.
#[derive(Debug)]
pub struct GlobalStore {
    inner: Mutex<Inner>,
}

fn rms_step(params: &mut NetParams, grads: &Gradients, sq: &mut [f64], lr: f64, decay: f64, eps: f64) {
    for ((p, g), s) in params.values_mut().zip(grads.values()).zip(sq.iter_mut()) {
        *s = decay * *s + (1.0 - decay) * g * g;
        *p -= lr * g / (s.sqrt() + eps);
    }
}

impl GlobalStore {
    pub fn new(actor: NetParams, critic: NetParams) -> Self {
        let sq_actor = vec![0.0; actor.param_count()];
        let sq_critic = vec![0.0; critic.param_count()];
        Self { inner: Mutex::new(Inner { current: Arc::new(Snapshot { actor, critic, version: 0 }), sq_actor, sq_critic }) }
    }

    pub fn read(&self) -> Arc<Snapshot> {
        Arc::clone(&self.inner.lock().expect("store lock poisoned").current)
    }

    pub fn version(&self) -> u64 {
        self.read().version
    }

    /// Applies descent steps to both networks and returns the new version.
    pub fn apply(&self, d_actor: &Gradients, d_critic: &Gradients, hyper: &Hyperparams) -> Result<u64, A3cError> {
        let mut inner = self.inner.lock().expect("store lock poisoned");
        let mut actor = inner.current.actor.clone();
        let mut critic = inner.current.critic.clone();
        match hyper.optimizer {
            Optimizer::Sgd => {
                apply_sgd(&mut actor, d_actor, hyper.lr_actor)?;
                apply_sgd(&mut critic, d_critic, hyper.lr_critic)?;
            }
            Optimizer::RmsProp { decay, eps } => {
                // shape check through the plain path's validation
                let probe = Gradients::zeros_like(&actor);
                if !probe.same_shape(d_actor) || !Gradients::zeros_like(&critic).same_shape(d_critic) {
                    return Err(crate::nn::NnError::ShapeMismatch.into());
                }
                let Inner { sq_actor, sq_critic, .. } = &mut *inner;
                rms_step(&mut actor, d_actor, sq_actor, hyper.lr_actor, decay, eps);
                rms_step(&mut critic, d_critic, sq_critic, hyper.lr_critic, decay, eps);
            }
        }
        if !actor.is_finite() || !critic.is_finite() {
            return Err(A3cError::Diverged);
        }
        let version = inner.current.version + 1;
        inner.current = Arc::new(Snapshot { actor, critic, version });
        Ok(version)
    }

    pub fn into_snapshot(self) -> Snapshot {
        let inner = self.inner.into_inner().expect("store lock poisoned");
        Arc::try_unwrap(inner.current).unwrap_or_else(|a| (*a).clone())
    }
}

/// Submits one worker's accumulated gradients.
pub fn apply_async(
    store: &GlobalStore,
    d_actor: &Gradients,
    d_critic: &Gradients,
    hyper: &Hyperparams,
) -> Result<u64, A3cError> {
    store.apply(d_actor, d_critic, hyper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Activation};

    fn store() -> GlobalStore {
        GlobalStore::new(
            init_params(&[3, 4, 2], Activation::Softmax, 1, 5).unwrap(),
            init_params(&[3, 4, 1], Activation::Identity, 1, 6).unwrap(),
        )
    }

    fn grads(s: &Snapshot, v: f64) -> (Gradients, Gradients) {
        let mut a = Gradients::zeros_like(&s.actor);
        let mut c = Gradients::zeros_like(&s.critic);
        a.weights[0][1] = v;
        a.biases[1][0] = -v;
        c.weights[1][2] = 2.0 * v;
        (a, c)
    }

    #[test]
    fn single_apply_equals_sgd() {
        let hyper = Hyperparams { lr_actor: 0.1, lr_critic: 0.2, ..Hyperparams::default() };
        let s = store();
        let before = s.read();
        let (a, c) = grads(&before, 0.5);
        assert_eq!(apply_async(&s, &a, &c, &hyper).unwrap(), 1);
        let mut actor = before.actor.clone();
        let mut critic = before.critic.clone();
        apply_sgd(&mut actor, &a, 0.1).unwrap();
        apply_sgd(&mut critic, &c, 0.2).unwrap();
        let after = s.read();
        assert_eq!(after.actor, actor);
        assert_eq!(after.critic, critic);
        // the earlier snapshot is untouched
        assert_eq!(before.version, 0);
    }

    #[test]
    fn applies_commute_for_plain_descent() {
        let hyper = Hyperparams::default();
        let (s1, s2) = (store(), store());
        let base = s1.read();
        let (a1, c1) = grads(&base, 0.25);
        let (a2, c2) = grads(&base, -1.0);
        s1.apply(&a1, &c1, &hyper).unwrap();
        s1.apply(&a2, &c2, &hyper).unwrap();
        s2.apply(&a2, &c2, &hyper).unwrap();
        s2.apply(&a1, &c1, &hyper).unwrap();
        let (x, y) = (s1.read(), s2.read());
        for (p, q) in x.actor.values().zip(y.actor.values()).chain(x.critic.values().zip(y.critic.values())) {
            assert!((p - q).abs() < 1e-15);
        }
        assert_eq!(x.version, 2);
    }

    #[test]
    fn concurrent_applies_are_not_lost() {
        let hyper = Hyperparams::default();
        let s = store();
        let base = s.read();
        let (a, c) = grads(&base, 1.0);
        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| {
                    for _ in 0..50 {
                        s.apply(&a, &c, &hyper).unwrap();
                    }
                });
            }
        });
        let end = s.read();
        assert_eq!(end.version, 400);
        let expected = base.actor.layers[0].weights[1] - 400.0 * hyper.lr_actor;
        assert!((end.actor.layers[0].weights[1] - expected).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let s = store();
        let other = init_params(&[2, 2], Activation::Softmax, 0, 0).unwrap();
        let g = Gradients::zeros_like(&other);
        let c = Gradients::zeros_like(&s.read().critic);
        assert!(s.apply(&g, &c, &Hyperparams::default()).is_err());
        let rms = Hyperparams { optimizer: Optimizer::RmsProp { decay: 0.99, eps: 1e-8 }, ..Hyperparams::default() };
        assert!(s.apply(&g, &c, &rms).is_err());
        assert_eq!(s.version(), 0);
    }
}
