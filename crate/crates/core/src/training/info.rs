//! KL divergence between factorized Bernoulli beliefs, the residual
//! information loss built from it, and a plug-in discrete mutual information.

use crate::codec::BitProbabilities;
use crate::error::{ensure_len, Error, Result};

/// `sum_i KL(Bern(p_i) || Bern(q_i))` in nats.
pub fn kl_bernoulli(p: &BitProbabilities, q: &BitProbabilities) -> Result<f64> {
    ensure_len(p.len(), q.len())?;
    Ok(kl_values(p.values(), q.values()))
}

pub(crate) fn kl_values(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln())
        .sum()
}

/// `KL(P_w || P_z) - KL(P_z || P_w)` for one sample; callers average over a batch.
///
/// Negative when w-beliefs are sharp and z-beliefs are flat, so minimizing it
/// keeps the message readable from `w` while draining it from the residual.
pub fn loss_ril(probs_w: &BitProbabilities, probs_z: &BitProbabilities) -> Result<f64> {
    ensure_len(probs_w.len(), probs_z.len())?;
    Ok(ril_values(probs_w.values(), probs_z.values()))
}

pub(crate) fn ril_values(pw: &[f64], pz: &[f64]) -> f64 {
    kl_values(pw, pz) - kl_values(pz, pw)
}

/// Partial derivatives of [`loss_ril`] with respect to each `p_w` and `p_z`.
pub(crate) fn ril_prob_grads(pw: &[f64], pz: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut gw = Vec::with_capacity(pw.len());
    let mut gz = Vec::with_capacity(pw.len());
    for (&p, &q) in pw.iter().zip(pz) {
        let logit_p = (p / (1.0 - p)).ln();
        let logit_q = (q / (1.0 - q)).ln();
        // d KL(p||q)/dp = logit p - logit q;  d KL(q||p)/dp = (p - q) / (p (1 - p))
        gw.push((logit_p - logit_q) - (p - q) / (p * (1.0 - p)));
        // d KL(p||q)/dq = (q - p) / (q (1 - q));  d KL(q||p)/dq = logit q - logit p
        gz.push((q - p) / (q * (1.0 - q)) - (logit_q - logit_p));
    }
    (gw, gz)
}

/// `sum p(a,b) ln(p(a,b) / (p(a) p(b)))` over a joint table, with `0 ln 0 = 0`.
pub fn mutual_information_discrete(joint: &[Vec<f64>]) -> Result<f64> {
    let cols = joint.first().map(Vec::len).unwrap_or(0);
    if joint.is_empty() || cols == 0 || joint.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidTable("table must be a nonempty rectangle".into()));
    }
    if joint.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidTable("entries must be finite and non-negative".into()));
    }
    let total: f64 = joint.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidTable(format!("entries sum to {total}, not 1")));
    }
    let row: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..cols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, r) in joint.iter().enumerate() {
        for (j, &p) in r.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (row[i] * col[j])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Normalizes a table of counts into a joint distribution.
pub fn joint_from_counts(counts: &[Vec<u64>]) -> Result<Vec<Vec<f64>>> {
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::InvalidTable("no observations".into()));
    }
    Ok(counts.iter().map(|r| r.iter().map(|&c| c as f64 / total as f64).collect()).collect())
}
