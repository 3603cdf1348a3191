use super::LossResult;
use crate::error::{Error, Result};

/// Position weight `2^(n - i) - 1` for 1-based step `i` of a length-`n` list.
pub fn plistmle_weight(i: usize, n: usize) -> f64 {
    debug_assert!(i >= 1 && i <= n);
    2f64.powi((n - i) as i32) - 1.0
}

/// Position-weighted listwise likelihood loss.
///
/// `target_order[i]` is the index into `scores` of the item that belongs at
/// rank `i`. The value is `sum_i w(i) * (-z[y_i] + log sum_{k>=i} exp(z[y_k]))`
/// with decreasing weights from [`plistmle_weight`]; the gradient is with
/// respect to `scores`. Lists are not averaged; callers reduce over a batch.
pub fn plistmle_loss(scores: &[f64], target_order: &[usize], n: usize) -> Result<LossResult<Vec<f64>>> {
    if scores.len() != n || target_order.len() != n {
        return Err(Error::input(format!(
            "expected {n} scores and a permutation of length {n}, got {} and {}",
            scores.len(),
            target_order.len()
        )));
    }
    if n == 0 {
        return Err(Error::input("empty list"));
    }
    let mut seen = vec![false; n];
    for &y in target_order {
        if y >= n || std::mem::replace(&mut seen[y], true) {
            return Err(Error::input("target order is not a permutation of 0..n"));
        }
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::input("non-finite score"));
    }
    if !plistmle_weight(1, n).is_finite() {
        return Err(Error::input(format!("list of length {n} overflows position weights")));
    }

    let ordered: Vec<f64> = target_order.iter().map(|&y| scores[y]).collect();
    // suffix log-sum-exp: lse[i] = log sum_{k >= i} exp(ordered[k])
    let mut lse = vec![0.0; n];
    let mut acc = f64::NEG_INFINITY;
    for i in (0..n).rev() {
        let (hi, lo) = if acc > ordered[i] { (acc, ordered[i]) } else { (ordered[i], acc) };
        acc = hi + (lo - hi).exp().ln_1p();
        lse[i] = acc;
    }

    let mut value = 0.0;
    let mut grad_ordered = vec![0.0; n];
    // d/dz_{y_k} = sum_{i <= k} w(i) softmax_i(k) - w(k)
    //            = exp(z_{y_k}) * sum_{i <= k} w(i) / exp(lse[i]) - w(k)
    // Accumulated in log space to stay finite.
    let mut log_ratio_acc = f64::NEG_INFINITY;
    for k in 0..n {
        let w = plistmle_weight(k + 1, n);
        value += w * (lse[k] - ordered[k]);
        if w > 0.0 {
            let term = w.ln() - lse[k];
            let (hi, lo) = if log_ratio_acc > term { (log_ratio_acc, term) } else { (term, log_ratio_acc) };
            log_ratio_acc = hi + (lo - hi).exp().ln_1p();
        }
        grad_ordered[k] = (ordered[k] + log_ratio_acc).exp() - w;
    }

    let mut grad = vec![0.0; n];
    for (k, &y) in target_order.iter().enumerate() {
        grad[y] = grad_ordered[k];
    }
    Ok(LossResult { value, grad })
}
