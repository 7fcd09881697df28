use super::{NnError, Scalar};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub positive: f64,
    pub negative: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights {
            positive: 1.0,
            negative: 1.0,
        }
    }
}

/// `w1 = multiplier * #neg / #pos`, `w0 = 1`. Without positives the ratio is
/// undefined and `w1` falls back to the multiplier.
pub fn class_weights<'a>(labels: impl IntoIterator<Item = &'a [bool]>, multiplier: f64) -> ClassWeights {
    let (mut pos, mut neg) = (0usize, 0usize);
    for ls in labels {
        for &l in ls {
            if l {
                pos += 1;
            } else {
                neg += 1;
            }
        }
    }
    let positive = if pos == 0 {
        multiplier
    } else {
        multiplier * neg as f64 / pos as f64
    };
    ClassWeights {
        positive,
        negative: 1.0,
    }
}

fn clamp<T: Scalar>(p: T) -> T {
    let eps = T::of(PROB_EPS);
    p.max(eps).min(T::one() - eps)
}

/// Mean weighted binary cross-entropy.
pub fn weighted_bce<T: Scalar>(probs: &[T], labels: &[bool], w: ClassWeights) -> Result<T, NnError> {
    if probs.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if probs.len() != labels.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = T::zero();
    for (&p, &y) in probs.iter().zip(labels) {
        let p = clamp(p);
        total += if y {
            T::of(w.positive) * p.ln()
        } else {
            T::of(w.negative) * (T::one() - p).ln()
        };
    }
    Ok(-total / T::of(probs.len() as f64))
}

/// Derivative of [`weighted_bce`] with respect to each logit. Clamped
/// probabilities have zero derivative.
pub fn loss_gradient<T: Scalar>(probs: &[T], labels: &[bool], w: ClassWeights) -> Vec<T> {
    let n = T::of(probs.len() as f64);
    let eps = T::of(PROB_EPS);
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if p < eps || p > T::one() - eps {
                return T::zero();
            }
            let (weight, target) = if y {
                (w.positive, T::one())
            } else {
                (w.negative, T::zero())
            };
            T::of(weight) * (p - target) / n
        })
        .collect()
}
