use ndarray::{Array2, ArrayView2, Axis};

use super::config::Head;
use super::Real;
use crate::error::{Error, Result};

/// Per-frame loss averaged over frames, with its gradient w.r.t. the logits.
///
/// Class-posterior heads use cross-entropy against binary targets
/// (target >= 0.5 selects class 1); linear heads use mean squared error
/// against the first output row.
pub fn loss_and_grad<R: Real>(logits: ArrayView2<R>, targets: &[f32], head: Head) -> Result<(f64, Array2<R>)> {
    let (classes, frames) = logits.dim();
    if targets.len() != frames {
        return Err(Error::DimMismatch {
            expected: frames,
            got: targets.len(),
        });
    }
    if frames == 0 {
        return Err(Error::InvalidArgument("empty target sequence".into()));
    }
    let n = R::from(frames).expect("frame count");
    let mut grad = Array2::zeros((classes, frames));
    let mut total = 0f64;
    match head {
        Head::ClassPosterior => {
            for (t, (col, mut g)) in logits.axis_iter(Axis(1)).zip(grad.axis_iter_mut(Axis(1))).enumerate() {
                let label = usize::from(targets[t] >= 0.5);
                let max = col.iter().fold(R::neg_infinity(), |a, &b| a.max(b));
                let lse = col.iter().map(|&v| (v - max).exp()).fold(R::zero(), |a, b| a + b).ln() + max;
                total += (lse - col[label]).to_f64().expect("finite");
                for (c, gc) in g.iter_mut().enumerate() {
                    let p = (col[c] - lse).exp();
                    let onehot = if c == label { R::one() } else { R::zero() };
                    *gc = (p - onehot) / n;
                }
            }
        }
        Head::Linear => {
            let two = R::one() + R::one();
            for (t, &y) in targets.iter().enumerate() {
                let diff = logits[[0, t]] - R::from(y).expect("finite target");
                total += (diff * diff).to_f64().expect("finite");
                grad[[0, t]] = two * diff / n;
            }
        }
    }
    Ok((total / frames as f64, grad))
}

/// Loss only.
pub fn loss<R: Real>(logits: ArrayView2<R>, targets: &[f32], head: Head) -> Result<f64> {
    Ok(loss_and_grad(logits, targets, head)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cross_entropy_of_uniform_logits_is_ln2() {
        let logits = Array2::<f64>::zeros((2, 4));
        let l = loss(logits.view(), &[0.0, 1.0, 1.0, 0.0], Head::ClassPosterior).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_value() {
        let logits = array![[0.0f64], [1.0]];
        let l = loss(logits.view(), &[1.0], Head::ClassPosterior).unwrap();
        let p1 = 1f64.exp() / (1.0 + 1f64.exp());
        assert!((l + p1.ln()).abs() < 1e-12);
    }

    #[test]
    fn mse_value_and_gradient() {
        let logits = array![[1.0f64, 0.0, 0.5]];
        let (l, g) = loss_and_grad(logits.view(), &[0.0, 0.0, 1.0], Head::Linear).unwrap();
        assert!((l - (1.0 + 0.25) / 3.0).abs() < 1e-12);
        assert!((g[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);
        assert!((g[[0, 2]] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let logits = array![[0.3f64, -1.2, 2.0], [0.1, 0.4, -0.5]];
        let targets = [1.0, 0.0, 1.0];
        for head in [Head::ClassPosterior, Head::Linear] {
            let (_, g) = loss_and_grad(logits.view(), &targets, head).unwrap();
            for idx in [(0, 0), (1, 1), (0, 2), (1, 2)] {
                let h = 1e-6;
                let mut plus = logits.clone();
                plus[idx] += h;
                let mut minus = logits.clone();
                minus[idx] -= h;
                let fd = (loss(plus.view(), &targets, head).unwrap() - loss(minus.view(), &targets, head).unwrap())
                    / (2.0 * h);
                assert!((fd - g[idx]).abs() < 1e-7, "{head:?} {idx:?}");
            }
        }
    }

    #[test]
    fn length_mismatch() {
        let logits = Array2::<f32>::zeros((2, 3));
        assert!(loss(logits.view(), &[0.0; 2], Head::ClassPosterior).is_err());
    }
}
