#![allow(dead_code)]

use qdr::compress::{PqCodeSet, PqCodebook};
use qdr::data::matrix::sequential_ids;
use qdr::data::rng::{self, Rng};
use qdr::data::EmbeddingMatrix;
use qdr::train::{
    infonce_loss, jpq_loss, margin_mse_loss, rank_loss, Gradients, Passages, QueryHead, TrainingBatch,
    TrainingExample, Trainables,
};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-6;

/// A random small training problem in f64.
pub struct Instance {
    pub trainables: Trainables<f64>,
    pub batch: TrainingBatch<f64>,
    pub embeddings: EmbeddingMatrix<f64>,
    pub codes: PqCodeSet,
    pub alpha: f64,
    pub beta: f64,
}

fn uniform(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// `m` subspaces of `k` centroids over `d = m·d_sub` outputs.
pub fn random_instance(rng: &mut Rng, m: usize, k: usize, d_sub: usize) -> Instance {
    let d = m * d_sub;
    let d_in = rng.gen_range(2..=5);
    let n_pass = rng.gen_range(4..=8);
    let head = QueryHead::new(d, d_in, uniform(rng, d * d_in, 1.0)).unwrap();
    let cb = PqCodebook::new(m, k, d_sub, uniform(rng, m * k * d_sub, 1.0)).unwrap();
    let embeddings =
        EmbeddingMatrix::new(sequential_ids("p", n_pass), d, uniform(rng, n_pass * d, 1.0)).unwrap();
    let codes: Vec<u8> = (0..n_pass * m).map(|_| rng.gen_range(0..k) as u8).collect();
    let codes = PqCodeSet::new(m, codes, sequential_ids("p", n_pass)).unwrap();
    let n_ex = rng.gen_range(1..=3);
    let examples = (0..n_ex)
        .map(|_| {
            let pos = rng.gen_range(0..n_pass);
            let n_neg = rng.gen_range(1..=3);
            let negs: Vec<usize> = (0..n_neg)
                .map(|_| loop {
                    let n = rng.gen_range(0..n_pass);
                    if n != pos {
                        break n;
                    }
                })
                .collect();
            let labels = uniform(rng, n_neg, 3.0);
            TrainingExample::new(uniform(rng, d_in, 1.0), pos, negs).with_labels(rng.gen_range(-3.0..3.0), labels)
        })
        .collect();
    Instance {
        trainables: Trainables::with_codebook(head, cb),
        batch: TrainingBatch::new(examples).unwrap(),
        embeddings,
        codes,
        alpha: rng.gen_range(0.0..3.0),
        beta: rng.gen_range(0.5..2.0),
    }
}

/// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖)`, or the absolute
/// error when both norms vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom < 1e-8 {
        diff
    } else {
        diff / denom
    }
}

/// Central differences of `f` wrt every head weight and centroid entry.
pub fn numeric_grads(t: &Trainables<f64>, f: &dyn Fn(&Trainables<f64>) -> f64) -> Gradients<f64> {
    let mut out = Gradients::zeros_like(t);
    let mut probe = t.clone();
    for i in 0..t.head.weight().len() {
        let w = t.head.weight()[i];
        probe.head.weight_mut()[i] = w + FD_STEP;
        let up = f(&probe);
        probe.head.weight_mut()[i] = w - FD_STEP;
        let down = f(&probe);
        probe.head.weight_mut()[i] = w;
        out.head[i] = (up - down) / (2.0 * FD_STEP);
    }
    if let Some(cb) = &t.codebook {
        let g = out.codebook.as_mut().unwrap();
        for i in 0..cb.centroids().len() {
            let c = cb.centroids()[i];
            probe.codebook.as_mut().unwrap().centroids_mut()[i] = c + FD_STEP;
            let up = f(&probe);
            probe.codebook.as_mut().unwrap().centroids_mut()[i] = c - FD_STEP;
            let down = f(&probe);
            probe.codebook.as_mut().unwrap().centroids_mut()[i] = c;
            g[i] = (up - down) / (2.0 * FD_STEP);
        }
    }
    out
}

/// Worst relative error over the head block and, when present, the centroid block.
pub fn grad_error(analytic: &Gradients<f64>, numeric: &Gradients<f64>) -> f64 {
    let mut err = relative_error(&analytic.head, &numeric.head);
    if let (Some(a), Some(n)) = (&analytic.codebook, &numeric.codebook) {
        err = err.max(relative_error(a, n));
    }
    err
}

/// Smallest distance of any hinge argument to the kink.
pub fn rank_kink_distance(inst: &Instance) -> f64 {
    let t = &inst.trainables;
    let mut best = f64::INFINITY;
    for ex in &inst.batch.examples {
        let e = t.head.apply(&ex.query);
        let hq = qdr::train::relaxed_hash(&e, inst.beta);
        let hp = qdr::train::relaxed_hash(inst.embeddings.row(ex.positive), inst.beta);
        let sp: f64 = hq.iter().zip(&hp).map(|(a, b)| a * b).sum();
        for &n in &ex.negatives {
            let hn = qdr::train::relaxed_hash(inst.embeddings.row(n), inst.beta);
            let sn: f64 = hq.iter().zip(&hn).map(|(a, b)| a * b).sum();
            best = best.min((inst.alpha - (sp - sn)).abs());
        }
    }
    best
}

pub struct GradSuite {
    pub name: &'static str,
    pub worst: f64,
    pub instances: usize,
}

/// Checks each loss on `n` random instances and reports the worst error.
pub fn gradient_suite(n: usize, seed: u64) -> Vec<GradSuite> {
    let mut rng = rng::seeded(seed);
    let mut suites = vec![
        GradSuite { name: "rank_loss", worst: 0.0, instances: 0 },
        GradSuite { name: "infonce_loss", worst: 0.0, instances: 0 },
        GradSuite { name: "infonce_loss (pq)", worst: 0.0, instances: 0 },
        GradSuite { name: "jpq_loss", worst: 0.0, instances: 0 },
        GradSuite { name: "margin_mse_loss", worst: 0.0, instances: 0 },
        GradSuite { name: "margin_mse_loss (pq)", worst: 0.0, instances: 0 },
    ];
    let mut record = |s: usize, err: f64| {
        suites[s].worst = suites[s].worst.max(err);
        suites[s].instances += 1;
    };
    let mut counts = [0usize; 6];
    while counts.iter().any(|&c| c < n) {
        let (m, k, d_sub) = match rng.gen_range(0..3) {
            0 => (2, 4, 2),
            1 => (2, 4, 1),
            _ => (3, 3, 2),
        };
        let inst = random_instance(&mut rng, m, k, d_sub);
        let t = &inst.trainables;
        let emb = &inst.embeddings;
        let head_only = Trainables::head_only(t.head.clone());

        if counts[0] < n && rank_kink_distance(&inst) > 1e-3 {
            let f = |p: &Trainables<f64>| rank_loss(&inst.batch, p, emb, inst.alpha, inst.beta).unwrap().loss;
            let a = rank_loss(&inst.batch, &head_only, emb, inst.alpha, inst.beta).unwrap().grads;
            record(0, grad_error(&a, &numeric_grads(&head_only, &f)));
            counts[0] += 1;
        }
        if counts[1] < n {
            let f = |p: &Trainables<f64>| infonce_loss(&inst.batch, p, Passages::Embeddings(emb)).unwrap().loss;
            let a = infonce_loss(&inst.batch, &head_only, Passages::Embeddings(emb)).unwrap().grads;
            record(1, grad_error(&a, &numeric_grads(&head_only, &f)));
            counts[1] += 1;
        }
        if counts[2] < n {
            let pq = Passages::Codes(&inst.codes);
            let f = |p: &Trainables<f64>| infonce_loss(&inst.batch, p, pq).unwrap().loss;
            let a = infonce_loss(&inst.batch, t, pq).unwrap().grads;
            record(2, grad_error(&a, &numeric_grads(t, &f)));
            counts[2] += 1;
        }
        if counts[3] < n {
            let f = |p: &Trainables<f64>| jpq_loss(&inst.batch, p, &inst.codes).unwrap().loss;
            let a = jpq_loss(&inst.batch, t, &inst.codes).unwrap().grads;
            record(3, grad_error(&a, &numeric_grads(t, &f)));
            counts[3] += 1;
        }
        if counts[4] < n {
            let f = |p: &Trainables<f64>| margin_mse_loss(&inst.batch, p, Passages::Embeddings(emb)).unwrap().loss;
            let a = margin_mse_loss(&inst.batch, &head_only, Passages::Embeddings(emb)).unwrap().grads;
            record(4, grad_error(&a, &numeric_grads(&head_only, &f)));
            counts[4] += 1;
        }
        if counts[5] < n {
            let pq = Passages::Codes(&inst.codes);
            let f = |p: &Trainables<f64>| margin_mse_loss(&inst.batch, p, pq).unwrap().loss;
            let a = margin_mse_loss(&inst.batch, t, pq).unwrap().grads;
            record(5, grad_error(&a, &numeric_grads(t, &f)));
            counts[5] += 1;
        }
    }
    suites
}

pub mod toy {
    use nalgebra::DMatrix;
    use qdr::compress::{fit_pq, pq_encode, pq_search, PqCodeSet, PqCodebook};
    use qdr::data::rng;
    use qdr::data::EmbeddingMatrix;
    use qdr::synth::{clustered_task, mrr_at_k, ClusteredConfig, ClusteredTask};
    use qdr::train::{
        train, FixedBatch, LossConfig, LossKind, Passages, PqHardNegatives, QueryHead, TraceRow, TrainingBatch,
        TrainingExample, Trainables,
    };
    use rand::Rng as _;

    pub fn task() -> ClusteredTask<f64> {
        clustered_task(&ClusteredConfig::default()).unwrap()
    }

    pub fn pq_mrr(
        head: &QueryHead<f64>,
        cb: &PqCodebook<f64>,
        codes: &PqCodeSet,
        queries: &EmbeddingMatrix<f64>,
        positives: &[usize],
    ) -> f64 {
        let rankings: Vec<Vec<usize>> = queries
            .rows()
            .map(|x| pq_search(cb, codes, &head.apply(x), 10).unwrap().iter().map(|h| h.index).collect())
            .collect();
        mrr_at_k(&rankings, positives, 10)
    }

    pub struct JpqRun {
        pub before: f64,
        pub after: f64,
        pub trace: Vec<TraceRow>,
        pub codes_unchanged: bool,
    }

    /// Centroid and head training against the top-20 hard negatives of the
    /// current index, re-mined every step for all training queries.
    pub fn jpq_run(task: &ClusteredTask<f64>, steps: usize) -> JpqRun {
        let cb = fit_pq(&task.passages, 8, 16, 25, 7).unwrap();
        let codes = pq_encode(&cb, &task.passages).unwrap();
        let snapshot = codes.clone();
        let head = QueryHead::identity(task.passages.dim());
        let before = pq_mrr(&head, &cb, &codes, &task.test_queries, &task.test_positives);
        let cfg = LossConfig {
            kind: LossKind::JpqInfonce,
            learning_rate: 1e-2,
            batch_size: task.train_queries.len(),
            steps,
            seed: 1,
            ..Default::default()
        };
        let n = task.train_queries.len();
        let mut src = PqHardNegatives::new(&task.train_queries, &task.train_positives, &codes, 20, 20, n, 1).unwrap();
        let out = train(&cfg, Passages::Codes(&codes), &mut src, Trainables::with_codebook(head, cb)).unwrap();
        let after = pq_mrr(
            &out.trainables.head,
            out.trainables.codebook.as_ref().unwrap(),
            &codes,
            &task.test_queries,
            &task.test_positives,
        );
        JpqRun {
            before,
            after,
            trace: out.trace,
            codes_unchanged: codes == snapshot,
        }
    }

    /// Teacher scores `CE(q, p) = (A⁻¹ x)·sign(p)`, which undo the query
    /// distortion; the student head starts at identity.
    pub fn margin_mse_batch(task: &ClusteredTask<f64>, negatives: usize, seed: u64) -> TrainingBatch<f64> {
        let d = task.passages.dim();
        let a = DMatrix::from_row_slice(d, d, task.distortion.weight());
        let inv = a.try_inverse().unwrap();
        let teacher = QueryHead::new(d, d, inv.transpose().as_slice().to_vec()).unwrap();
        let sign = |v: &f64| if *v >= 0.0 { 1.0 } else { -1.0 };
        let ce = |qi: usize, p: usize| -> f64 {
            let e = teacher.apply(task.train_queries.row(qi));
            e.iter().zip(task.passages.row(p)).map(|(a, b)| a * sign(b)).sum()
        };
        let mut r = rng::seeded(seed);
        let examples = (0..task.train_queries.len())
            .map(|qi| {
                let pos = task.train_positives[qi];
                let negs: Vec<usize> = (0..negatives)
                    .map(|_| loop {
                        let n = r.gen_range(0..task.passages.len());
                        if n != pos {
                            break n;
                        }
                    })
                    .collect();
                let labels = negs.iter().map(|&n| ce(qi, n)).collect();
                TrainingExample::new(task.train_queries.row(qi).to_vec(), pos, negs).with_labels(ce(qi, pos), labels)
            })
            .collect();
        TrainingBatch::new(examples).unwrap()
    }

    pub fn margin_mse_run(task: &ClusteredTask<f64>, steps: usize) -> Vec<TraceRow> {
        let batch = margin_mse_batch(task, 4, 5);
        let cfg = LossConfig {
            kind: LossKind::MarginMse,
            learning_rate: 5e-4,
            batch_size: batch.len(),
            steps,
            ..Default::default()
        };
        let head = QueryHead::identity(task.passages.dim());
        train(&cfg, Passages::Embeddings(&task.passages), &mut FixedBatch(batch), Trainables::head_only(head))
            .unwrap()
            .trace
    }

    /// Number of strict increases of the 50-step moving average, and the drop
    /// over the final third relative to the drop over the first third.
    pub fn curve_shape(trace: &[TraceRow]) -> (usize, f64) {
        let l: Vec<f64> = trace.iter().map(|r| r.loss).collect();
        let ma = qdr::train::moving_average(&l, 50);
        let increases = ma.windows(2).filter(|w| w[1] > w[0]).count();
        let n = l.len();
        let (a, b) = (n / 3, 2 * n / 3);
        let first = l[0] - l[a];
        let last = l[b] - l[n - 1];
        (increases, last / first)
    }
}
