//! Plain SGD over the configured objective, with a per-step loss trace.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::batch::{Gradients, Passages, TrainingBatch, Trainables};
use crate::train::losses::{bpr_loss, infonce_loss, jpq_loss, margin_mse_loss, rank_loss, LossValue};

pub const DEFAULT_ALPHA: f64 = 2.0;

/// Sharpness `β` of the relaxed hash as a function of the step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaSchedule {
    /// `β(t) = sqrt(t + 1)`.
    Sqrt,
    Constant(f64),
}

impl BetaSchedule {
    pub fn at(self, step: usize) -> f64 {
        match self {
            BetaSchedule::Sqrt => ((step + 1) as f64).sqrt(),
            BetaSchedule::Constant(b) => b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Hinge ranking on relaxed hashes plus listwise InfoNCE on hashes.
    Bpr,
    /// Pairwise InfoNCE on PQ reconstructions.
    JpqInfonce,
    /// MarginMSE against teacher margins, on hashes or PQ reconstructions.
    MarginMse,
    /// Hinge ranking plus MarginMSE, the BPR objective with its InfoNCE term
    /// replaced.
    BprMarginMse,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bpr" => Ok(LossKind::Bpr),
            "jpq" | "jpq-infonce" => Ok(LossKind::JpqInfonce),
            "margin-mse" => Ok(LossKind::MarginMse),
            "bpr-margin-mse" => Ok(LossKind::BprMarginMse),
            other => Err(Error::InvalidParameter(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub alpha: f64,
    pub beta: BetaSchedule,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Bpr,
            alpha: DEFAULT_ALPHA,
            beta: BetaSchedule::Sqrt,
            learning_rate: 1e-2,
            batch_size: 32,
            steps: 500,
            seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha {} must be >= 0", self.alpha)));
        }
        // Zero is accepted as a no-op run.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if let BetaSchedule::Constant(b) = self.beta {
            if !(b > 0.0) {
                return Err(Error::InvalidParameter(format!("beta {b} must be > 0")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Loss of one step, total and per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub rank: Option<f64>,
    pub infonce: Option<f64>,
    pub jpq: Option<f64>,
    pub margin_mse: Option<f64>,
    pub beta: f64,
}

/// Evaluates the configured objective on one batch.
pub fn evaluate<T: Scalar>(
    kind: LossKind,
    batch: &TrainingBatch<T>,
    trainables: &Trainables<T>,
    passages: Passages<'_, T>,
    alpha: f64,
    beta: f64,
) -> Result<(LossValue<T>, TraceRow)> {
    let mut row = TraceRow {
        step: 0,
        loss: 0.0,
        rank: None,
        infonce: None,
        jpq: None,
        margin_mse: None,
        beta,
    };
    let (alpha, beta_t) = (T::of(alpha), T::of(beta));
    let embeddings = || match passages {
        Passages::Embeddings(m) => Ok(m),
        Passages::Codes(_) => Err(Error::InvalidParameter(format!(
            "{kind:?} needs float passage embeddings"
        ))),
    };
    let value = match kind {
        LossKind::Bpr => {
            let (v, r, n) = bpr_loss(batch, trainables, embeddings()?, alpha, beta_t)?;
            row.rank = Some(r.as_f64());
            row.infonce = Some(n.as_f64());
            v
        }
        LossKind::JpqInfonce => {
            let codes = match passages {
                Passages::Codes(c) => c,
                Passages::Embeddings(_) => {
                    return Err(Error::InvalidParameter("JPQ training needs PQ codes".into()))
                }
            };
            let v = jpq_loss(batch, trainables, codes)?;
            row.jpq = Some(v.loss.as_f64());
            v
        }
        LossKind::MarginMse => {
            let v = margin_mse_loss(batch, trainables, passages)?;
            row.margin_mse = Some(v.loss.as_f64());
            v
        }
        LossKind::BprMarginMse => {
            let r = rank_loss(batch, trainables, embeddings()?, alpha, beta_t)?;
            let m = margin_mse_loss(batch, trainables, passages)?;
            row.rank = Some(r.loss.as_f64());
            row.margin_mse = Some(m.loss.as_f64());
            let mut grads = r.grads;
            grads.add_assign(&m.grads);
            LossValue {
                loss: r.loss + m.loss,
                grads,
            }
        }
    };
    row.loss = value.loss.as_f64();
    Ok((value, row))
}

/// Listwise InfoNCE is exposed for hashed and quantized passages alike.
pub fn evaluate_infonce<T: Scalar>(
    batch: &TrainingBatch<T>,
    trainables: &Trainables<T>,
    passages: Passages<'_, T>,
) -> Result<T> {
    Ok(infonce_loss(batch, trainables, passages)?.loss)
}

/// Produces the batch for each step.
pub trait BatchSource<T: Scalar> {
    fn next_batch(&mut self, step: usize, trainables: &Trainables<T>) -> Result<TrainingBatch<T>>;
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub trainables: Trainables<T>,
    pub trace: Vec<TraceRow>,
}

/// Runs `config.steps` SGD updates. The loss recorded for a step is the one
/// whose gradient produced that step's update.
pub fn train<T: Scalar, S: BatchSource<T> + ?Sized>(
    config: &LossConfig,
    passages: Passages<'_, T>,
    source: &mut S,
    mut trainables: Trainables<T>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let lr = T::of(config.learning_rate);
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let beta = config.beta.at(step);
        let batch = source.next_batch(step, &trainables)?;
        let (value, mut row) = evaluate(config.kind, &batch, &trainables, passages, config.alpha, beta)?;
        if !row.loss.is_finite() || value.grads.head.iter().any(|g| !g.is_finite()) {
            return Err(Error::DivergedLoss { step, value: row.loss });
        }
        row.step = step;
        trace.push(row);
        apply_sgd(&mut trainables, &value.grads, lr);
        if trainables.head.weight().iter().any(|w| !w.is_finite()) {
            return Err(Error::DivergedLoss {
                step,
                value: f64::INFINITY,
            });
        }
    }
    Ok(TrainOutcome { trainables, trace })
}

pub fn apply_sgd<T: Scalar>(trainables: &mut Trainables<T>, grads: &Gradients<T>, lr: T) {
    if lr == T::zero() {
        return;
    }
    for (w, g) in trainables.head.weight_mut().iter_mut().zip(&grads.head) {
        *w = *w - lr * *g;
    }
    if let (Some(cb), Some(g)) = (trainables.codebook.as_mut(), grads.codebook.as_ref()) {
        for (c, gc) in cb.centroids_mut().iter_mut().zip(g) {
            *c = *c - lr * *gc;
        }
    }
}

/// Trailing moving average with the given window (shorter at the start).
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// `step,loss,rank,infonce,jpq,margin_mse,beta`; absent components are empty.
pub fn write_trace_csv(trace: &[TraceRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    format_trace_csv(trace, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn format_trace_csv<W: Write>(trace: &[TraceRow], w: &mut W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    writeln!(w, "step,loss,rank,infonce,jpq,margin_mse,beta")?;
    for r in trace {
        writeln!(
            w,
            "{},{:?},{},{},{},{},{:?}",
            r.step,
            r.loss,
            opt(r.rank),
            opt(r.infonce),
            opt(r.jpq),
            opt(r.margin_mse),
            r.beta
        )?;
    }
    Ok(())
}
