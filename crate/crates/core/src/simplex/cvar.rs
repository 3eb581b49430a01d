use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CvarError {
    #[error("tolerance level beta must lie in (0, 1], got {0}")]
    BadBeta(f64),
    #[error("{returns} returns but {probs} probabilities")]
    LengthMismatch { returns: usize, probs: usize },
}

/// Exact CVaR (return form) of a return sample: the probability-weighted
/// average of the worst `beta` mass of outcomes.
///
/// Solves `min (1/beta) sum y_t u_t` s.t. `sum u_t = beta`, `0 <= u_t <= p_t`
/// greedily: scenarios are taken in ascending order of `y` until the mass is
/// exhausted, the last one fractionally.
pub fn cvar_primal_oracle(y: &[f64], probs: &[f64], beta: f64) -> Result<f64, CvarError> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(CvarError::BadBeta(beta));
    }
    if y.len() != probs.len() {
        return Err(CvarError::LengthMismatch { returns: y.len(), probs: probs.len() });
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut remaining = beta;
    let mut acc = 0.0;
    for t in order {
        if remaining <= 0.0 {
            break;
        }
        let u = probs[t].min(remaining);
        acc += y[t] * u;
        remaining -= u;
    }
    Ok(acc / beta)
}
