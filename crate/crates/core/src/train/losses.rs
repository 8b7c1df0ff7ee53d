//! Training objectives with analytic gradients.
//!
//! Every loss is averaged over the examples of a batch (MarginMSE over its
//! triplets). Query vectors pass through the head, `e(q) = W x`; passages are
//! either fixed float embeddings (hash `sign(p)`, relaxed hash `tanh(β p)`)
//! or PQ codes reconstructed from the trainable codebook.

use crate::compress::{PqCodeSet, PqCodebook};
use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::train::batch::{Gradients, Passages, TrainingBatch, Trainables};
use crate::train::head::QueryHead;

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<T> {
    pub loss: T,
    pub grads: Gradients<T>,
}

/// `tanh(β x)` elementwise, the differentiable surrogate of `sign`.
pub fn relaxed_hash<T: Scalar>(x: &[T], beta: T) -> Vec<T> {
    x.iter().map(|v| (beta * *v).tanh()).collect()
}

/// Elementwise derivative of [`relaxed_hash`]: `β (1 − tanh²(β x))`.
pub fn relaxed_hash_grad<T: Scalar>(x: &[T], beta: T) -> Vec<T> {
    x.iter()
        .map(|v| {
            let t = (beta * *v).tanh();
            beta * (T::one() - t * t)
        })
        .collect()
}

/// `ln(1 + eᶻ)` without overflow.
#[inline]
pub(crate) fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Resolves `h(p)` for passage rows.
struct PassageHashes<'a, T> {
    passages: Passages<'a, T>,
    codebook: Option<&'a PqCodebook<T>>,
    dim: usize,
}

impl<'a, T: Scalar> PassageHashes<'a, T> {
    fn new(passages: Passages<'a, T>, trainables: &'a Trainables<T>) -> Result<Self> {
        let dim = match passages {
            Passages::Embeddings(m) => m.dim(),
            Passages::Codes(codes) => {
                let cb = trainables
                    .codebook
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("PQ passages need a trainable codebook".into()))?;
                if cb.m_subspaces() != codes.m_subspaces() {
                    return Err(Error::DimensionMismatch {
                        expected: cb.m_subspaces(),
                        found: codes.m_subspaces(),
                    });
                }
                cb.dim()
            }
        };
        if trainables.head.d_out() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: trainables.head.d_out(),
            });
        }
        Ok(Self {
            passages,
            codebook: trainables.codebook.as_ref(),
            dim,
        })
    }

    fn check(&self, row: usize) -> Result<()> {
        if row >= self.passages.len() {
            return Err(Error::UnknownCandidate(row));
        }
        Ok(())
    }

    fn hash(&self, row: usize, out: &mut [T]) {
        match self.passages {
            Passages::Embeddings(m) => {
                for (o, v) in out.iter_mut().zip(m.row(row)) {
                    *o = if *v >= T::zero() { T::one() } else { -T::one() };
                }
            }
            Passages::Codes(codes) => self.codebook.unwrap().decode_one(codes.code(row), out),
        }
    }

    /// Adds `coeff · e` to the centroids that reconstruct `row`.
    fn scatter(&self, grads: &mut Gradients<T>, row: usize, coeff: T, e: &[T]) {
        if let (Passages::Codes(codes), Some(cb), Some(g)) = (self.passages, self.codebook, grads.codebook.as_mut()) {
            scatter_centroid_grad(g, cb, codes.code(row), coeff, e);
        }
    }
}

pub(crate) fn scatter_centroid_grad<T: Scalar>(grad: &mut [T], cb: &PqCodebook<T>, code: &[u8], coeff: T, e: &[T]) {
    let (k, ds) = (cb.k_centroids(), cb.d_sub());
    for (sub, &c) in code.iter().enumerate() {
        let off = (sub * k + c as usize) * ds;
        for (g, v) in grad[off..off + ds].iter_mut().zip(&e[sub * ds..(sub + 1) * ds]) {
            *g = *g + coeff * *v;
        }
    }
}

fn check_query<T: Scalar>(head: &QueryHead<T>, x: &[T]) -> Result<()> {
    if x.len() != head.d_in() {
        return Err(Error::DimensionMismatch {
            expected: head.d_in(),
            found: x.len(),
        });
    }
    Ok(())
}

/// Hinge ranking loss over relaxed hashes:
/// `Σ_j max(0, −(h̃(q)·h̃(p⁺) − h̃(q)·h̃(p⁻_j)) + α)`, per query, averaged.
/// The subgradient at the kink is zero.
pub fn rank_loss<T: Scalar>(
    batch: &TrainingBatch<T>,
    trainables: &Trainables<T>,
    passages: &EmbeddingMatrix<T>,
    alpha: T,
    beta: T,
) -> Result<LossValue<T>> {
    batch.validate()?;
    let head = &trainables.head;
    if head.d_out() != passages.dim() {
        return Err(Error::DimensionMismatch {
            expected: passages.dim(),
            found: head.d_out(),
        });
    }
    let mut grads = Gradients::zeros_like(trainables);
    let scale = T::one() / T::of(batch.len() as f64);
    let mut total = T::zero();
    for ex in &batch.examples {
        check_query(head, &ex.query)?;
        for &p in std::iter::once(&ex.positive).chain(&ex.negatives) {
            if p >= passages.len() {
                return Err(Error::UnknownCandidate(p));
            }
        }
        let e = head.apply(&ex.query);
        let hq = relaxed_hash(&e, beta);
        let hp = relaxed_hash(passages.row(ex.positive), beta);
        let s_pos = dot(&hq, &hp);
        let mut g_hq = vec![T::zero(); e.len()];
        for &n in &ex.negatives {
            let hn = relaxed_hash(passages.row(n), beta);
            let arg = alpha - (s_pos - dot(&hq, &hn));
            if arg > T::zero() {
                total = total + arg;
                for ((g, a), b) in g_hq.iter_mut().zip(&hn).zip(&hp) {
                    *g = *g + *a - *b;
                }
            }
        }
        let dtanh = relaxed_hash_grad(&e, beta);
        let g_e: Vec<T> = g_hq.iter().zip(&dtanh).map(|(a, b)| *a * *b).collect();
        QueryHead::accumulate_outer(&mut grads.head, &g_e, &ex.query, scale);
    }
    Ok(LossValue {
        loss: total * scale,
        grads,
    })
}

/// Listwise InfoNCE over `e(q)·h(p)` with the positive against all of the
/// query's negatives, evaluated with max subtraction.
pub fn infonce_loss<T: Scalar>(
    batch: &TrainingBatch<T>,
    trainables: &Trainables<T>,
    passages: Passages<'_, T>,
) -> Result<LossValue<T>> {
    batch.validate()?;
    let view = PassageHashes::new(passages, trainables)?;
    let head = &trainables.head;
    let mut grads = Gradients::zeros_like(trainables);
    let scale = T::one() / T::of(batch.len() as f64);
    let mut total = T::zero();
    let d = view.dim;
    for ex in &batch.examples {
        check_query(head, &ex.query)?;
        let rows: Vec<usize> = std::iter::once(ex.positive).chain(ex.negatives.iter().copied()).collect();
        let mut hashes = vec![T::zero(); rows.len() * d];
        for (&r, out) in rows.iter().zip(hashes.chunks_exact_mut(d)) {
            view.check(r)?;
            view.hash(r, out);
        }
        let e = head.apply(&ex.query);
        let scores: Vec<T> = hashes.chunks_exact(d).map(|h| dot(&e, h)).collect();
        let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = scores.iter().map(|s| (*s - max).exp()).sum();
        let lse = max + sum.ln();
        total = total + (lse - scores[0]);

        let mut g_e = vec![T::zero(); d];
        for (k, h) in hashes.chunks_exact(d).enumerate() {
            let p = (scores[k] - lse).exp();
            let coeff = if k == 0 { p - T::one() } else { p };
            for (g, v) in g_e.iter_mut().zip(h) {
                *g = *g + coeff * *v;
            }
            view.scatter(&mut grads, rows[k], coeff * scale, &e);
        }
        QueryHead::accumulate_outer(&mut grads.head, &g_e, &ex.query, scale);
    }
    Ok(LossValue {
        loss: total * scale,
        grads,
    })
}

/// `L_rank + L_infoNCE` over float passage embeddings.
pub fn bpr_loss<T: Scalar>(
    batch: &TrainingBatch<T>,
    trainables: &Trainables<T>,
    passages: &EmbeddingMatrix<T>,
    alpha: T,
    beta: T,
) -> Result<(LossValue<T>, T, T)> {
    let rank = rank_loss(batch, trainables, passages, alpha, beta)?;
    let nce = infonce_loss(batch, trainables, Passages::Embeddings(passages))?;
    let mut grads = rank.grads;
    grads.add_assign(&nce.grads);
    Ok((
        LossValue {
            loss: rank.loss + nce.loss,
            grads,
        },
        rank.loss,
        nce.loss,
    ))
}

/// Pairwise InfoNCE on reconstructed PQ passages:
/// `Σ_j −ln(e^{s⁺} / (e^{s⁺} + e^{s⁻_j}))` with `s = e(q)·h(p)`, per query,
/// averaged. Gradients reach the head and only the centroids referenced by
/// the batch's codes; code assignments never change.
pub fn jpq_loss<T: Scalar>(batch: &TrainingBatch<T>, trainables: &Trainables<T>, codes: &PqCodeSet) -> Result<LossValue<T>> {
    batch.validate()?;
    let view = PassageHashes::new(Passages::Codes(codes), trainables)?;
    let head = &trainables.head;
    let d = view.dim;
    let mut grads = Gradients::zeros_like(trainables);
    let scale = T::one() / T::of(batch.len() as f64);
    let mut total = T::zero();
    let mut hp = vec![T::zero(); d];
    let mut hn = vec![T::zero(); d];
    for ex in &batch.examples {
        check_query(head, &ex.query)?;
        view.check(ex.positive)?;
        view.hash(ex.positive, &mut hp);
        let e = head.apply(&ex.query);
        let s_pos = dot(&e, &hp);
        let mut g_e = vec![T::zero(); d];
        for &n in &ex.negatives {
            view.check(n)?;
            view.hash(n, &mut hn);
            let z = dot(&e, &hn) - s_pos;
            total = total + softplus(z);
            let s = sigmoid(z);
            for ((g, a), b) in g_e.iter_mut().zip(&hn).zip(&hp) {
                *g = *g + s * (*a - *b);
            }
            view.scatter(&mut grads, n, s * scale, &e);
            view.scatter(&mut grads, ex.positive, -s * scale, &e);
        }
        QueryHead::accumulate_outer(&mut grads.head, &g_e, &ex.query, scale);
    }
    Ok(LossValue {
        loss: total * scale,
        grads,
    })
}

/// Mean over triplets of
/// `((e(q)·h(p⁺) − e(q)·h(p⁻)) − (CE(q,p⁺) − CE(q,p⁻)))²`.
pub fn margin_mse_loss<T: Scalar>(
    batch: &TrainingBatch<T>,
    trainables: &Trainables<T>,
    passages: Passages<'_, T>,
) -> Result<LossValue<T>> {
    batch.validate()?;
    let view = PassageHashes::new(passages, trainables)?;
    let head = &trainables.head;
    let d = view.dim;
    let mut grads = Gradients::zeros_like(trainables);
    let scale = T::one() / T::of(batch.triplets() as f64);
    let two = T::of(2.0);
    let mut total = T::zero();
    let mut hp = vec![T::zero(); d];
    let mut hn = vec![T::zero(); d];
    for (i, ex) in batch.examples.iter().enumerate() {
        let labels = ex.labels.as_ref().ok_or(Error::MissingMarginLabel(i))?;
        check_query(head, &ex.query)?;
        view.check(ex.positive)?;
        view.hash(ex.positive, &mut hp);
        let e = head.apply(&ex.query);
        let s_pos = dot(&e, &hp);
        let mut g_e = vec![T::zero(); d];
        for (j, &n) in ex.negatives.iter().enumerate() {
            view.check(n)?;
            view.hash(n, &mut hn);
            let r = (s_pos - dot(&e, &hn)) - labels.margin(j);
            total = total + r * r;
            let c = two * r;
            for ((g, a), b) in g_e.iter_mut().zip(&hp).zip(&hn) {
                *g = *g + c * (*a - *b);
            }
            view.scatter(&mut grads, ex.positive, c * scale, &e);
            view.scatter(&mut grads, n, -c * scale, &e);
        }
        QueryHead::accumulate_outer(&mut grads.head, &g_e, &ex.query, scale);
    }
    Ok(LossValue {
        loss: total * scale,
        grads,
    })
}
