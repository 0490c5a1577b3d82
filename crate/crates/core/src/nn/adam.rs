use super::tcn::Tcn;
use super::Real;
use crate::error::{Error, Result};

/// Adam optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<R> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Tcn<R>,
    v: Tcn<R>,
}

impl<R: Real> Adam<R> {
    pub fn new(model: &Tcn<R>, lr: f64) -> Self {
        let mut m = model.clone();
        m.fill_zero();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Fails without touching the model when any
    /// gradient entry is NaN or infinite.
    pub fn step(&mut self, model: &mut Tcn<R>, grad: &Tcn<R>) -> Result<()> {
        let grads = grad.tensors();
        if let Some((name, _)) = grads.iter().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient { tensor: name.clone() });
        }
        self.step += 1;
        let c = |x: f64| R::from(x).expect("finite");
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let bc1 = c(1.0 - self.beta1.powi(self.step as i32));
        let bc2 = c(1.0 - self.beta2.powi(self.step as i32));
        let (lr, eps) = (c(self.lr), c(self.eps));
        let one = R::one();
        for (((mut p, mut m), mut v), (_, g)) in model
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
        {
            ndarray::Zip::from(&mut p)
                .and(&mut m)
                .and(&mut v)
                .and(&g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
        Ok(())
    }
}
