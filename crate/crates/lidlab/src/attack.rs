//! Optimization-based adversarial attacks at controlled confidence.
//!
//! Two attacks are implemented, both untargeted and both driven by the same
//! confidence-margin loss `max(Z_true - max_{j != true} Z_j, -kappa)`:
//!
//! * **C&W-L2** — change of variables `x_adv = lo + (hi-lo)(tanh(w)+1)/2`
//!   keeps iterates inside the box; Adam minimizes
//!   `||x_adv - x||^2 + c * margin_loss`; an outer binary search tunes the
//!   tradeoff constant `c`; the successful candidate with the smallest L2
//!   distortion wins.
//! * **EAD** — elastic-net regularization `c * margin_loss + ||d||^2 +
//!   beta * ||d||_1`, minimized by FISTA: a gradient step on the smooth part
//!   at the extrapolated point, then the elementwise shrink operator handles
//!   the L1 term and the box. The winner among successful candidates is
//!   chosen by the EN rule (smallest elastic-net score) or the L1 rule
//!   (smallest L1 distortion).
//!
//! A candidate counts as successful when its achieved margin
//! `max_{j != true} Z_j - Z_true` reaches `kappa` *and* the predicted class
//! differs from the true label. Both attacks are deterministic: they start
//! from the input itself and use no randomness.

use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{argmax, runner_up, LossSpec, Network};
use crate::tensor::{Interval, Tensor};

/// Which attack to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Cw,
    Ead,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Cw => "cw",
            AttackKind::Ead => "ead",
        }
    }
}

impl FromStr for AttackKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cw" => Ok(AttackKind::Cw),
            "ead" => Ok(AttackKind::Ead),
            other => Err(Error::Config(format!(
                "unknown attack {other:?}, expected \"cw\" or \"ead\""
            ))),
        }
    }
}

/// How EAD picks its winner among successful candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionRule {
    /// Smallest elastic-net score `beta * l1 + l2^2`.
    En,
    /// Smallest L1 distortion.
    L1,
}

impl DecisionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionRule::En => "en",
            DecisionRule::L1 => "l1",
        }
    }
}

impl FromStr for DecisionRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "en" => Ok(DecisionRule::En),
            "l1" => Ok(DecisionRule::L1),
            other => Err(Error::Config(format!(
                "unknown decision rule {other:?}, expected \"en\" or \"l1\""
            ))),
        }
    }
}

/// Attack hyperparameters, shared by both attacks. `beta` and
/// `decision_rule` only affect EAD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub kappa: f64,
    pub beta: f64,
    pub max_iterations: usize,
    pub binary_search_steps: usize,
    pub c_init: f64,
    pub c_max: f64,
    pub learning_rate: f64,
    pub decision_rule: DecisionRule,
    pub box_constraint: Interval,
    /// Both optimizers initialize from the input point and run a fixed
    /// deterministic schedule, so the seed does not influence the result; it
    /// is carried so configs stay reproducible end-to-end if a stochastic
    /// variant (e.g. random restarts) is ever added.
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            kappa: 0.0,
            beta: 0.1,
            max_iterations: 1000,
            binary_search_steps: 9,
            c_init: 1e-3,
            c_max: 1e10,
            learning_rate: 1e-2,
            decision_rule: DecisionRule::En,
            box_constraint: Interval::UNIT,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::Config(format!(
                "kappa must be finite and nonnegative, got {}",
                self.kappa
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!(
                "beta must be finite and nonnegative, got {}",
                self.beta
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if self.binary_search_steps == 0 {
            return Err(Error::Config("binary_search_steps must be positive".into()));
        }
        if !(self.c_init > 0.0 && self.c_init.is_finite()) {
            return Err(Error::Config(format!(
                "c_init must be positive and finite, got {}",
                self.c_init
            )));
        }
        if !(self.c_max >= self.c_init && self.c_max.is_finite()) {
            return Err(Error::Config(format!(
                "c_max must be finite and at least c_init, got {}",
                self.c_max
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Outcome of one attack on one sample. On failure, `adversarial` is the
/// unchanged original, the distortion fields are zero, and `c_used` is 0.
#[derive(Debug, Clone)]
pub struct AdversarialResult {
    pub original: Tensor,
    pub adversarial: Tensor,
    pub delta: Tensor,
    pub success: bool,
    /// `max_{j != true} Z_j - Z_true` at the adversarial point; success
    /// requires this to reach the configured kappa.
    pub achieved_margin: f64,
    pub l1: f64,
    pub l2: f64,
    pub elastic_net_score: f64,
    pub c_used: f64,
    /// Total optimizer steps executed across all binary-search rounds.
    pub iterations_used: usize,
}

/// One successful iterate recorded by [`ead_attack_traced`], for auditing
/// the decision rule against the full candidate set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateRecord {
    pub round: usize,
    pub iteration: usize,
    pub l1: f64,
    pub l2: f64,
    pub elastic_net_score: f64,
    pub margin: f64,
}

/// The C&W confidence-margin loss `max(Z_true - max_{j != true} Z_j, -kappa)`.
/// Zero (or `-kappa`) means the attack objective is met; positive values
/// measure how far the true class still leads.
pub fn margin_loss(logits: &Tensor, true_label: usize, kappa: f64) -> Result<f64> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::Config(format!(
            "kappa must be finite and nonnegative, got {kappa}"
        )));
    }
    if logits.len() < 2 {
        return Err(Error::SingleClass {
            num_classes: logits.len(),
        });
    }
    if true_label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label: true_label,
            num_classes: logits.len(),
        });
    }
    let (_, other) = runner_up(&logits.data, true_label);
    Ok((logits.data[true_label] - other).max(-kappa))
}

/// `max_{j != true} Z_j - Z_true`: positive once the sample is pushed over
/// the decision boundary, and at least `kappa` for a successful attack.
pub fn achieved_margin(logits: &Tensor, true_label: usize) -> f64 {
    let (_, other) = runner_up(&logits.data, true_label);
    other - logits.data[true_label]
}

/// Elastic-net distortion score `beta * ||delta||_1 + ||delta||_2^2`.
pub fn elastic_net_score(delta: &Tensor, beta: f64) -> f64 {
    beta * delta.l1_norm() + delta.l2_norm_squared()
}

/// Elementwise shrink (soft threshold) of `z` toward `origin`, clipped to
/// the box: entries within `threshold` of the origin snap back to it, the
/// rest move `threshold` closer and are clamped to the box.
pub fn shrink(z: &Tensor, origin: &Tensor, threshold: f64, box_constraint: Interval) -> Result<Tensor> {
    if z.shape != origin.shape {
        return Err(Error::ShapeMismatch(format!(
            "shrink of shape {:?} against origin {:?}",
            z.shape, origin.shape
        )));
    }
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::Config(format!(
            "shrink threshold must be finite and nonnegative, got {threshold}"
        )));
    }
    let data = z
        .data
        .iter()
        .zip(&origin.data)
        .map(|(&zi, &xi)| {
            let diff = zi - xi;
            if diff > threshold {
                (zi - threshold).min(box_constraint.hi)
            } else if diff < -threshold {
                (zi + threshold).max(box_constraint.lo)
            } else {
                xi
            }
        })
        .collect();
    Ok(Tensor {
        shape: z.shape.clone(),
        data,
    })
}

fn validate_attack_inputs(net: &Network, x: &Tensor, true_label: usize, cfg: &AttackConfig) -> Result<()> {
    cfg.validate()?;
    if x.len() != net.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "attack input of length {} for network expecting {}",
            x.len(),
            net.input_dim()
        )));
    }
    if true_label >= net.output_dim() {
        return Err(Error::LabelOutOfRange {
            label: true_label,
            num_classes: net.output_dim(),
        });
    }
    if net.output_dim() < 2 {
        return Err(Error::SingleClass {
            num_classes: net.output_dim(),
        });
    }
    if !x.data.iter().all(|&v| cfg.box_constraint.contains(v)) {
        return Err(Error::ShapeMismatch(
            "attack input lies outside the box constraint".into(),
        ));
    }
    Ok(())
}

/// Success test shared by both attacks: the margin must reach kappa and the
/// argmax must actually leave the true class.
fn is_successful(logits: &Tensor, true_label: usize, kappa: f64) -> (bool, f64) {
    let margin = achieved_margin(logits, true_label);
    let success = margin >= kappa && argmax(&logits.data) != true_label;
    (success, margin)
}

fn zero_delta_result(net: &Network, x: &Tensor, true_label: usize, kappa: f64) -> Result<Option<AdversarialResult>> {
    let logits = net.forward_logits(x)?;
    let (success, margin) = is_successful(&logits, true_label, kappa);
    if !success {
        return Ok(None);
    }
    Ok(Some(AdversarialResult {
        original: x.clone(),
        adversarial: x.clone(),
        delta: Tensor::zeros(x.len()),
        success: true,
        achieved_margin: margin,
        l1: 0.0,
        l2: 0.0,
        elastic_net_score: 0.0,
        c_used: 0.0,
        iterations_used: 0,
    }))
}

fn failure_result(net: &Network, x: &Tensor, true_label: usize, iterations_used: usize) -> Result<AdversarialResult> {
    let logits = net.forward_logits(x)?;
    Ok(AdversarialResult {
        original: x.clone(),
        adversarial: x.clone(),
        delta: Tensor::zeros(x.len()),
        success: false,
        achieved_margin: achieved_margin(&logits, true_label),
        l1: 0.0,
        l2: 0.0,
        elastic_net_score: 0.0,
        c_used: 0.0,
        iterations_used,
    })
}

fn finish_result(
    x: &Tensor,
    best: BestCandidate,
    beta: f64,
    iterations_used: usize,
) -> AdversarialResult {
    let delta = best.adversarial.sub(x).expect("shapes match by construction");
    let l1 = delta.l1_norm();
    let l2 = delta.l2_norm();
    AdversarialResult {
        original: x.clone(),
        adversarial: best.adversarial,
        delta: delta.clone(),
        success: true,
        achieved_margin: best.margin,
        l1,
        l2,
        elastic_net_score: elastic_net_score(&delta, beta),
        c_used: best.c,
        iterations_used,
    }
}

struct BestCandidate {
    adversarial: Tensor,
    margin: f64,
    c: f64,
    score: f64,
}

/// Binary-search state over the tradeoff constant `c`. Until the first
/// success `c` grows by x10 per failed round (capped at `c_max`); once an
/// upper bound exists the interval is bisected.
struct CSearch {
    c: f64,
    lower: f64,
    upper: f64,
    c_max: f64,
}

impl CSearch {
    fn new(cfg: &AttackConfig) -> Self {
        CSearch {
            c: cfg.c_init,
            lower: 0.0,
            upper: f64::INFINITY,
            c_max: cfg.c_max,
        }
    }

    fn advance(&mut self, round_succeeded: bool) {
        if round_succeeded {
            self.upper = self.upper.min(self.c);
            self.c = 0.5 * (self.lower + self.upper);
        } else {
            self.lower = self.lower.max(self.c);
            if self.upper.is_finite() {
                self.c = 0.5 * (self.lower + self.upper);
            } else {
                self.c = (self.c * 10.0).min(self.c_max);
            }
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const TANH_CLAMP: f64 = 1e-6;

/// C&W-L2 attack. Deterministic; returns the minimum-L2 successful
/// candidate over all binary-search rounds, or a failure result carrying
/// the original sample.
pub fn cw_l2_attack(
    net: &Network,
    x: &Tensor,
    true_label: usize,
    cfg: &AttackConfig,
) -> Result<AdversarialResult> {
    validate_attack_inputs(net, x, true_label, cfg)?;
    if let Some(free) = zero_delta_result(net, x, true_label, cfg.kappa)? {
        return Ok(free);
    }

    let box_ = cfg.box_constraint;
    let range = box_.width();
    let n = x.len();
    // tanh change of variables; clamp keeps atanh finite at the box edges.
    let w_origin: Vec<f64> = x
        .data
        .iter()
        .map(|&v| {
            let t = ((v - box_.lo) / range * 2.0 - 1.0).clamp(-1.0 + TANH_CLAMP, 1.0 - TANH_CLAMP);
            t.atanh()
        })
        .collect();
    let to_x = |w: &[f64]| -> Tensor {
        Tensor {
            shape: vec![n],
            data: w
                .iter()
                .map(|&wi| box_.lo + range * (wi.tanh() + 1.0) / 2.0)
                .collect(),
        }
    };

    let mut best: Option<BestCandidate> = None;
    let mut search = CSearch::new(cfg);
    let mut iterations_used = 0usize;
    let loss = LossSpec::Margin {
        label: true_label,
        kappa: cfg.kappa,
    };

    for _ in 0..cfg.binary_search_steps {
        let mut w = w_origin.clone();
        let mut m = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut round_succeeded = false;

        for iter in 0..=cfg.max_iterations {
            let x_adv = to_x(&w);
            let (logits, grad_margin) = net.logits_and_input_gradient(&x_adv, &loss)?;
            let (success, margin) = is_successful(&logits, true_label, cfg.kappa);
            if success {
                round_succeeded = true;
                let l2 = x_adv.euclidean_distance(x)?;
                if best.as_ref().map_or(true, |b| l2 < b.score) {
                    best = Some(BestCandidate {
                        adversarial: x_adv.clone(),
                        margin,
                        c: search.c,
                        score: l2,
                    });
                }
            }
            if iter == cfg.max_iterations {
                break;
            }
            iterations_used += 1;
            // d(total)/dx = 2 * delta + c * d(margin)/dx, then chain through
            // tanh: dx/dw = range/2 * (1 - tanh(w)^2).
            let t_step = (iter + 1) as f64;
            let bias1 = 1.0 - ADAM_BETA1.powf(t_step);
            let bias2 = 1.0 - ADAM_BETA2.powf(t_step);
            for i in 0..n {
                let delta_i = x_adv.data[i] - x.data[i];
                let gx = 2.0 * delta_i + search.c * grad_margin.data[i];
                let tanh_w = (x_adv.data[i] - box_.lo) / range * 2.0 - 1.0;
                let gw = gx * range / 2.0 * (1.0 - tanh_w * tanh_w);
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gw;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gw * gw;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                w[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        search.advance(round_succeeded);
    }

    match best {
        Some(b) => Ok(finish_result(x, b, cfg.beta, iterations_used)),
        None => failure_result(net, x, true_label, iterations_used),
    }
}

/// EAD (elastic-net) attack via FISTA. The winner among successful
/// candidates follows `cfg.decision_rule`; with `beta = 0` the objective and
/// the EN rule coincide with C&W's squared-L2 criterion.
pub fn ead_attack(
    net: &Network,
    x: &Tensor,
    true_label: usize,
    cfg: &AttackConfig,
) -> Result<AdversarialResult> {
    ead_impl(net, x, true_label, cfg, None)
}

/// [`ead_attack`] variant that additionally records every successful
/// candidate it encounters, so tests can brute-force the decision rule.
pub fn ead_attack_traced(
    net: &Network,
    x: &Tensor,
    true_label: usize,
    cfg: &AttackConfig,
) -> Result<(AdversarialResult, Vec<CandidateRecord>)> {
    let mut records = Vec::new();
    let result = ead_impl(net, x, true_label, cfg, Some(&mut records))?;
    Ok((result, records))
}

fn ead_impl(
    net: &Network,
    x: &Tensor,
    true_label: usize,
    cfg: &AttackConfig,
    mut trace: Option<&mut Vec<CandidateRecord>>,
) -> Result<AdversarialResult> {
    validate_attack_inputs(net, x, true_label, cfg)?;
    if let Some(free) = zero_delta_result(net, x, true_label, cfg.kappa)? {
        return Ok(free);
    }

    let step = cfg.learning_rate;
    let threshold = cfg.beta * step;
    let loss = LossSpec::Margin {
        label: true_label,
        kappa: cfg.kappa,
    };
    // Full elastic-net objective, for the FISTA restart test.
    let objective = |margin_loss_value: f64, delta: &Tensor, c: f64| -> f64 {
        c * margin_loss_value + delta.l2_norm_squared() + cfg.beta * delta.l1_norm()
    };

    let mut best: Option<BestCandidate> = None;
    let mut search = CSearch::new(cfg);
    let mut iterations_used = 0usize;

    for round in 0..cfg.binary_search_steps {
        let mut x_curr = x.clone();
        let mut y = x.clone();
        let mut round_succeeded = false;
        // Objective at x_0 = x: delta is zero, margin loss is whatever the
        // clean point gives.
        let clean_logits = net.forward_logits(x)?;
        let mut obj_curr = objective(
            margin_loss(&clean_logits, true_label, cfg.kappa)?,
            &Tensor::zeros(x.len()),
            search.c,
        );

        for iter in 0..cfg.max_iterations {
            iterations_used += 1;
            // Gradient of the smooth part (c * margin + ||delta||^2) at the
            // extrapolated point y.
            let (_, grad_margin) = net.logits_and_input_gradient(&y, &loss)?;
            let z = Tensor {
                shape: y.shape.clone(),
                data: y
                    .data
                    .iter()
                    .zip(&x.data)
                    .zip(&grad_margin.data)
                    .map(|((&yi, &xi), &gi)| yi - step * (2.0 * (yi - xi) + search.c * gi))
                    .collect(),
            };
            let x_next = shrink(&z, x, threshold, cfg.box_constraint)?;

            let logits = net.forward_logits(&x_next)?;
            let (success, margin) = is_successful(&logits, true_label, cfg.kappa);
            let delta = x_next.sub(x)?;
            if success {
                round_succeeded = true;
                let score = match cfg.decision_rule {
                    DecisionRule::En => elastic_net_score(&delta, cfg.beta),
                    DecisionRule::L1 => delta.l1_norm(),
                };
                if let Some(records) = trace.as_deref_mut() {
                    records.push(CandidateRecord {
                        round,
                        iteration: iter,
                        l1: delta.l1_norm(),
                        l2: delta.l2_norm(),
                        elastic_net_score: elastic_net_score(&delta, cfg.beta),
                        margin,
                    });
                }
                if best.as_ref().map_or(true, |b| score < b.score) {
                    best = Some(BestCandidate {
                        adversarial: x_next.clone(),
                        margin,
                        c: search.c,
                        score,
                    });
                }
            }

            // FISTA momentum with restart: drop the momentum whenever the
            // full objective went up.
            let obj_next = objective(
                margin_loss(&logits, true_label, cfg.kappa)?,
                &delta,
                search.c,
            );
            if obj_next > obj_curr {
                y = x_next.clone();
            } else {
                let momentum = iter as f64 / (iter as f64 + 3.0);
                y = Tensor {
                    shape: x_next.shape.clone(),
                    data: x_next
                        .data
                        .iter()
                        .zip(&x_curr.data)
                        .map(|(&xn, &xc)| xn + momentum * (xn - xc))
                        .collect(),
                };
            }
            obj_curr = obj_next;
            x_curr = x_next;
        }
        search.advance(round_succeeded);
    }

    match best {
        Some(b) => Ok(finish_result(x, b, cfg.beta, iterations_used)),
        None => failure_result(net, x, true_label, iterations_used),
    }
}

/// Dispatch on [`AttackKind`].
pub fn run_attack(
    kind: AttackKind,
    net: &Network,
    x: &Tensor,
    true_label: usize,
    cfg: &AttackConfig,
) -> Result<AdversarialResult> {
    match kind {
        AttackKind::Cw => cw_l2_attack(net, x, true_label, cfg),
        AttackKind::Ead => ead_attack(net, x, true_label, cfg),
    }
}

/// Write attack results as CSV with the columns
/// `sample_id,attack,kappa,beta,rule,success,margin,l1,l2,en_score,c_used`.
/// The `rule` column is only meaningful for EAD rows; CW rows carry the
/// configured value for a uniform schema.
pub fn write_attack_csv(
    path: &Path,
    kind: AttackKind,
    cfg: &AttackConfig,
    rows: &[(usize, AdversarialResult)],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "sample_id,attack,kappa,beta,rule,success,margin,l1,l2,en_score,c_used")?;
    for (sample_id, r) in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            sample_id,
            kind.as_str(),
            cfg.kappa,
            cfg.beta,
            cfg.decision_rule.as_str(),
            r.success,
            r.achieved_margin,
            r.l1,
            r.l2,
            r.elastic_net_score,
            r.c_used,
        )?;
    }
    w.flush()?;
    Ok(())
}
