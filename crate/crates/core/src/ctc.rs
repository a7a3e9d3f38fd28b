//! Connectionist temporal classification: loss, gradient and best-path decoding.
//!
//! Logits are `T × C` matrices of unnormalised scores with the blank at
//! column [`BLANK`](crate::domain::BLANK).

use thiserror::Error;

use crate::domain::BLANK;
use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum CtcError {
    #[error("target of length {len} with {repeats} adjacent repeats needs at least {needed} frames, got {frames}")]
    Infeasible {
        len: usize,
        repeats: usize,
        needed: usize,
        frames: usize,
    },
    #[error("target token {token} outside the {classes}-class output or equal to blank")]
    BadToken { token: usize, classes: usize },
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for t in 0..out.rows() {
        let row = out.row_mut(t);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// Minimum number of frames a target needs: its length plus adjacent repeats.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Negative log-likelihood of `target` and its gradient with respect to `logits`.
pub fn ctc_loss(logits: &Matrix, target: &[usize]) -> Result<(f64, Matrix), CtcError> {
    let (frames, classes) = logits.shape();
    if let Some(&token) = target.iter().find(|&&t| t == BLANK || t >= classes) {
        return Err(CtcError::BadToken { token, classes });
    }
    let needed = min_frames(target);
    if frames < needed || frames == 0 {
        return Err(CtcError::Infeasible {
            len: target.len(),
            repeats: needed - target.len(),
            needed: needed.max(1),
            frames,
        });
    }

    let logp = log_softmax(logits);
    let states: Vec<usize> = std::iter::once(BLANK)
        .chain(target.iter().flat_map(|&t| [t, BLANK]))
        .collect();
    let n = states.len();
    let skip_ok = |s: usize| s >= 2 && states[s] != BLANK && states[s] != states[s - 2];

    let neg_inf = f64::NEG_INFINITY;
    let mut alpha = Matrix::from_vec(frames, n, vec![neg_inf; frames * n]);
    alpha[(0, 0)] = logp[(0, states[0])];
    if n > 1 {
        alpha[(0, 1)] = logp[(0, states[1])];
    }
    for t in 1..frames {
        for s in 0..n {
            let mut acc = alpha[(t - 1, s)];
            if s >= 1 {
                acc = log_add(acc, alpha[(t - 1, s - 1)]);
            }
            if skip_ok(s) {
                acc = log_add(acc, alpha[(t - 1, s - 2)]);
            }
            if acc != neg_inf {
                alpha[(t, s)] = acc + logp[(t, states[s])];
            }
        }
    }

    let mut beta = Matrix::from_vec(frames, n, vec![neg_inf; frames * n]);
    let last = frames - 1;
    beta[(last, n - 1)] = logp[(last, states[n - 1])];
    if n > 1 {
        beta[(last, n - 2)] = logp[(last, states[n - 2])];
    }
    for t in (0..last).rev() {
        for s in 0..n {
            let mut acc = beta[(t + 1, s)];
            if s + 1 < n {
                acc = log_add(acc, beta[(t + 1, s + 1)]);
            }
            if s + 2 < n && skip_ok(s + 2) {
                acc = log_add(acc, beta[(t + 1, s + 2)]);
            }
            if acc != neg_inf {
                beta[(t, s)] = acc + logp[(t, states[s])];
            }
        }
    }

    let mut log_total = alpha[(last, n - 1)];
    if n > 1 {
        log_total = log_add(log_total, alpha[(last, n - 2)]);
    }

    let mut grad = Matrix::zeros(frames, classes);
    for t in 0..frames {
        let mut occupancy = vec![neg_inf; classes];
        for s in 0..n {
            let a = alpha[(t, s)];
            let b = beta[(t, s)];
            if a == neg_inf || b == neg_inf {
                continue;
            }
            let k = states[s];
            occupancy[k] = log_add(occupancy[k], a + b - logp[(t, k)]);
        }
        let row = grad.row_mut(t);
        for k in 0..classes {
            row[k] = logp[(t, k)].exp() - (occupancy[k] - log_total).exp();
        }
    }
    Ok((-log_total, grad))
}

/// Best-path decoding: per-frame argmax, merge repeats, drop blanks.
pub fn greedy_decode(logits: &Matrix) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = BLANK;
    for t in 0..logits.rows() {
        let row = logits.row(t);
        let best = row
            .iter()
            .enumerate()
            .fold((BLANK, f64::NEG_INFINITY), |acc, (i, &v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            })
            .0;
        if best != BLANK && best != prev {
            out.push(best);
        }
        prev = best;
    }
    out
}
