//! Group rearrangement and the joint softmax focal loss.
//!
//! With `K` correct and `W` wrong hypotheses, the scores are rearranged into
//! `K` groups, each holding one correct hypothesis followed by every wrong
//! one. A softmax runs inside each group. A correct hypothesis takes the mass
//! of its own group; a wrong hypothesis takes its mass averaged over the `K`
//! groups:
//!
//! ```text
//! y_hat[c] = e^s_c / (e^s_c + sum_w e^s_w)
//! y_hat[w] = 1/K * sum_c e^s_w / (e^s_c + sum_w' e^s_w')
//! ```
//!
//! Every hypothesis then contributes one focal term
//! `-beta_n (1 - p_n)^gamma log p_n` with `beta_n = a` for correct and `1 - a`
//! for wrong hypotheses, and `p_n = y_hat[n]` (correct) or `1 - y_hat[n]`
//! (wrong), plus `eps`. Wrong hypotheses appear once, not once per group.

use ndarray::Array2;

use crate::{Error, Result};

/// Index structure of the rearranged groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Groups {
    /// Indices of correct hypotheses, ascending. Group `k` is led by `correct[k]`.
    pub correct: Vec<usize>,
    /// Indices of wrong hypotheses, ascending; shared by every group.
    pub wrong: Vec<usize>,
}

impl Groups {
    pub fn k(&self) -> usize {
        self.correct.len()
    }

    pub fn w(&self) -> usize {
        self.wrong.len()
    }

    /// Members of group `k`: its correct hypothesis, then the wrong ones.
    pub fn group(&self, k: usize) -> Vec<usize> {
        std::iter::once(self.correct[k])
            .chain(self.wrong.iter().copied())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.k()).map(|k| self.group(k))
    }
}

fn check_labels(labels: &[u8]) -> Result<()> {
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::invalid("labels", format!("expected 0 or 1, got {bad}")));
    }
    Ok(())
}

pub fn rearrange_groups(labels: &[u8]) -> Result<Groups> {
    check_labels(labels)?;
    let (correct, wrong): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i] == 1);
    if correct.is_empty() || wrong.is_empty() {
        return Err(Error::DegenerateLabels {
            correct: correct.len(),
            total: labels.len(),
        });
    }
    Ok(Groups { correct, wrong })
}

/// Per-hypothesis predicted values and the within-group softmax masses.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedProbabilities {
    pub groups: Groups,
    /// `y_hat[n]`, indexed by hypothesis.
    pub y_hat: Vec<f64>,
    /// `K x (1 + W)`: column 0 is the group's correct hypothesis, column
    /// `1 + w` is `groups.wrong[w]`.
    pub per_group: Array2<f64>,
}

pub fn grouped_softmax(scores: &[f64], labels: &[u8]) -> Result<GroupedProbabilities> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            what: "scores vs labels",
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if !scores.iter().all(|s| s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let groups = rearrange_groups(labels)?;
    let (k, w) = (groups.k(), groups.w());
    let wrong_max = groups
        .wrong
        .iter()
        .map(|&i| scores[i])
        .fold(f64::NEG_INFINITY, f64::max);

    let mut per_group = Array2::zeros((k, 1 + w));
    for (row, &c) in per_group.rows_mut().into_iter().zip(&groups.correct) {
        let m = scores[c].max(wrong_max);
        let mut row = row;
        row[0] = (scores[c] - m).exp();
        for (slot, &i) in groups.wrong.iter().enumerate() {
            row[1 + slot] = (scores[i] - m).exp();
        }
        let z = row.sum();
        row /= z;
    }

    let mut y_hat = vec![0.0; scores.len()];
    for (row, &c) in groups.correct.iter().enumerate() {
        y_hat[c] = per_group[[row, 0]];
    }
    for (slot, &i) in groups.wrong.iter().enumerate() {
        y_hat[i] = per_group.column(1 + slot).sum() / k as f64;
    }
    Ok(GroupedProbabilities {
        groups,
        y_hat,
        per_group,
    })
}

/// Focal loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Focusing exponent, `>= 0`.
    pub gamma: f64,
    /// Balancing factor for correct hypotheses, in `(0, 1)`.
    pub alpha: f64,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 2.0,
            alpha: 0.55,
            eps: 1e-8,
        }
    }
}

impl LossConfig {
    pub fn new(gamma: f64, alpha: f64, eps: f64) -> Result<Self> {
        let c = LossConfig { gamma, alpha, eps };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(
                "gamma",
                format!("{} must be finite and >= 0", self.gamma),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("{} not in (0, 1)", self.alpha)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("eps", format!("{} must be finite and >= 0", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub loss: f64,
    /// `dL/ds`, indexed by hypothesis.
    pub grad: Vec<f64>,
    pub beta: Vec<f64>,
    /// `p_n` after clamping to at most 1.
    pub p: Vec<f64>,
    /// `(1 - p_n)^gamma`
    pub modulating: Vec<f64>,
}

pub fn focal_loss(probs: &GroupedProbabilities, labels: &[u8], config: &LossConfig) -> Result<LossResult> {
    config.validate()?;
    let n = probs.y_hat.len();
    if labels.len() != n {
        return Err(Error::Shape {
            what: "labels vs probabilities",
            expected: n,
            got: labels.len(),
        });
    }
    let LossConfig { gamma, alpha, eps } = *config;

    let mut loss = 0.0;
    let mut beta = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut modulating = Vec::with_capacity(n);
    // dL/d(y_hat[n])
    let mut d_yhat = Vec::with_capacity(n);

    for (&y, &yh) in labels.iter().zip(&probs.y_hat) {
        let correct = y == 1;
        let b = if correct { alpha } else { 1.0 - alpha };
        let raw = if correct { yh } else { 1.0 - yh } + eps;
        if raw.is_nan() || raw <= 0.0 {
            return Err(Error::invalid("p", format!("non-positive probability {raw}")));
        }
        let clamped = raw > 1.0;
        let pn = raw.min(1.0);
        let q = 1.0 - pn;
        let m = q.powf(gamma);
        let log_p = pn.ln();
        loss -= b * m * log_p;

        // d/dp [-(1-p)^g log p] = -(1-p)^g / p + g (1-p)^(g-1) log p
        let focus = if gamma > 0.0 && q > 0.0 {
            gamma * q.powf(gamma - 1.0) * log_p
        } else {
            0.0
        };
        let dl_dp = b * (focus - m / pn);
        let dp_dyhat = match (clamped, correct) {
            (true, _) => 0.0,
            (false, true) => 1.0,
            (false, false) => -1.0,
        };
        d_yhat.push(dl_dp * dp_dyhat);
        beta.push(b);
        p.push(pn);
        modulating.push(m);
    }

    // Push dL/dy_hat back through each group's softmax. Wrong hypotheses
    // receive 1/K of their upstream in every group.
    let groups = &probs.groups;
    let inv_k = 1.0 / groups.k() as f64;
    let mut grad = vec![0.0; n];
    for (row, members) in probs.per_group.rows().into_iter().zip(groups.iter()) {
        let upstream: Vec<f64> = members
            .iter()
            .enumerate()
            .map(|(slot, &i)| if slot == 0 { d_yhat[i] } else { d_yhat[i] * inv_k })
            .collect();
        let mean: f64 = row.iter().zip(&upstream).map(|(q, u)| q * u).sum();
        for ((&i, &q), &u) in members.iter().zip(row.iter()).zip(&upstream) {
            grad[i] += q * (u - mean);
        }
    }

    if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("loss"));
    }
    Ok(LossResult {
        loss,
        grad,
        beta,
        p,
        modulating,
    })
}

/// Loss and score gradient of one sample.
pub fn sample_loss(scores: &[f64], labels: &[u8], config: &LossConfig) -> Result<LossResult> {
    let probs = grouped_softmax(scores, labels)?;
    focal_loss(&probs, labels, config)
}

/// Sum of per-sample losses.
pub fn batch_loss<'a>(samples: impl IntoIterator<Item = (&'a [f64], &'a [u8])>, config: &LossConfig) -> Result<f64> {
    samples
        .into_iter()
        .map(|(s, y)| sample_loss(s, y, config).map(|r| r.loss))
        .sum()
}
