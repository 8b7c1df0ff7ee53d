use std::collections::BTreeSet;
use std::io::Cursor;

use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::Rng;

use qdr::adapt::GplTriplet;
use qdr::binhash::{hamming_topk, hash_encode, hash_vector, pack_bits, two_stage_search, unpack_bits, BinaryCodeSet};
use qdr::compress::{fit_pca, fit_pq, pq_decode, pq_encode, pq_search, scalar_quantize, PqIndex, ScalarCodes, ScalarMode};
use qdr::data::manifest::IndexKind;
use qdr::data::qrels::{format_qrels, parse_qrels};
use qdr::data::rng::seeded;
use qdr::data::run::{format_run, parse_run};
use qdr::data::{read_embeddings, write_embeddings, EmbeddingMatrix, Qrels, QrelsFormat, RunResult};
use qdr::eval::{ndcg_at_k, recall_at_k, report_index_size};
use qdr::index::flat_search;
use qdr::train::{
    infonce_loss, jpq_loss, margin_mse_loss, train, BetaSchedule, FixedBatch, LossConfig, LossKind, Passages,
    QueryHead, TrainingBatch, TrainingExample, Trainables,
};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn gaussian_matrix(n: usize, d: usize, seed: u64) -> EmbeddingMatrix<f32> {
    let mut rng = seeded(seed);
    let data = (0..n * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    EmbeddingMatrix::with_sequential_ids("d", d, data).unwrap()
}

fn file_len(p: &std::path::Path) -> u64 {
    std::fs::metadata(p).unwrap().len()
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn embedding_file_roundtrip_is_bit_exact(n in 0usize..20, d in 1usize..24, seed in any::<u64>()) {
        let m = gaussian_matrix(n, d, seed);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.emb");
        let man = write_embeddings(&m, &p).unwrap();
        prop_assert_eq!(man.size_bytes, file_len(&p));
        let back: EmbeddingMatrix<f32> = read_embeddings(&p).unwrap();
        prop_assert_eq!(back.ids(), m.ids());
        let a: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = m.data().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scalar_file_roundtrip_and_fp8_bounds(n in 1usize..20, d in 1usize..16, seed in any::<u64>(), fp8 in any::<bool>()) {
        let m = gaussian_matrix(n, d, seed);
        let mode = if fp8 { ScalarMode::Fp8 } else { ScalarMode::Fp16 };
        let codes = scalar_quantize(&m, mode).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.sqx");
        let man = codes.write(&p).unwrap();
        prop_assert_eq!(man.size_bytes, file_len(&p));
        prop_assert_eq!(&ScalarCodes::read(&p).unwrap(), &codes);
        let params = &codes.params;
        for i in 0..d {
            prop_assert!(params.per_dim_min[i] <= params.per_dim_max[i]);
        }
        if fp8 {
            let deq: EmbeddingMatrix<f64> = codes.dequantize().unwrap();
            for row in deq.rows() {
                for (i, v) in row.iter().enumerate() {
                    prop_assert!(*v >= params.per_dim_min[i] as f64 && *v <= params.per_dim_max[i] as f64);
                }
            }
        }
    }

    #[test]
    fn pq_file_roundtrip_and_code_range(n in 8usize..40, m_sub in 1usize..4, d_sub in 1usize..4, k in 2usize..8, seed in any::<u64>()) {
        let m = gaussian_matrix(n, m_sub * d_sub, seed);
        let cb = fit_pq(&m, m_sub, k, 5, seed).unwrap();
        let index = PqIndex::build(cb, &m).unwrap();
        prop_assert!(index.codes.codes().iter().all(|&c| (c as usize) < k));
        prop_assert_eq!(index.codes.bytes(), (n * m_sub) as u64);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pqx");
        let man = index.write(&p, IndexKind::Pq).unwrap();
        prop_assert_eq!(man.size_bytes, file_len(&p));
        let back: PqIndex<f32> = PqIndex::read(&p).unwrap();
        prop_assert_eq!(&back.codes, &index.codes);
        prop_assert_eq!(&back.codebook, &index.codebook);
    }

    #[test]
    fn binary_file_roundtrip(n in 0usize..20, bytes in 1usize..6, seed in any::<u64>()) {
        let m = gaussian_matrix(n, bytes * 8, seed);
        let codes = hash_encode(&m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let man = codes.write(&p).unwrap();
        prop_assert_eq!(man.size_bytes, file_len(&p));
        prop_assert_eq!(BinaryCodeSet::read(&p).unwrap(), codes);
    }

    #[test]
    fn packing_roundtrip(bits in proptest::collection::vec(any::<bool>(), 1..20).prop_map(|v| {
        v.iter().flat_map(|&b| std::iter::repeat_n(b, 8).enumerate().map(|(i, x)| x ^ (i % 3 == 0))).collect::<Vec<_>>()
    })) {
        prop_assert_eq!(unpack_bits(&pack_bits(&bits)), bits);
    }

    #[test]
    fn size_report_is_file_bytes_over_a_million(n in 0usize..50, d in 1usize..32, seed in any::<u64>()) {
        let m = gaussian_matrix(n, d, seed);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.emb");
        let man = write_embeddings(&m, &p).unwrap();
        let row = report_index_size(&man);
        prop_assert_eq!(row.file_mb, format!("{:.2} MB", file_len(&p) as f64 / 1e6));
        prop_assert_eq!(man.size_bytes, file_len(&p));
    }

    #[test]
    fn pca_components_orthonormal_and_sorted(n in 10usize..40, d in 2usize..8, seed in any::<u64>()) {
        let m = gaussian_matrix(n, d, seed).cast::<f64>();
        let target = d.min(n - 1);
        let model = fit_pca(&m, target, false).unwrap();
        for i in 0..target {
            for j in 0..target {
                let dot: f64 = model.component(i).iter().zip(model.component(j)).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-5, "{i} {j} {dot}");
            }
        }
        prop_assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_rank_pca_preserves_centered_inner_products(n in 12usize..30, d in 2usize..6, seed in any::<u64>()) {
        let m = gaussian_matrix(n, d, seed).cast::<f64>();
        let model = fit_pca(&m, d, false).unwrap();
        let centered: Vec<Vec<f64>> = m.rows().map(|r| r.iter().zip(&model.mean).map(|(x, mu)| x - mu).collect()).collect();
        let projected: Vec<Vec<f64>> = m.rows().map(|r| model.project(r).unwrap()).collect();
        for a in 0..n {
            for b in 0..n {
                let x: f64 = centered[a].iter().zip(&centered[b]).map(|(p, q)| p * q).sum();
                let y: f64 = projected[a].iter().zip(&projected[b]).map(|(p, q)| p * q).sum();
                prop_assert!((x - y).abs() <= 1e-4 * x.abs().max(1e-8) + 1e-10, "{x} {y}");
            }
        }
    }

    #[test]
    fn pq_search_matches_flat_search_over_reconstruction(n in 5usize..60, k in 1usize..10, seed in any::<u64>()) {
        let corpus = gaussian_matrix(n, 8, seed).cast::<f64>();
        let cb = fit_pq(&corpus, 4, 4, 4, seed).unwrap();
        let codes = pq_encode(&cb, &corpus).unwrap();
        let decoded = pq_decode(&cb, &codes).unwrap();
        let query: Vec<f64> = gaussian_matrix(1, 8, seed ^ 1).cast::<f64>().row(0).to_vec();
        let k = k.min(n);
        let got: Vec<usize> = pq_search(&cb, &codes, &query, k).unwrap().iter().map(|h| h.index).collect();
        let want: Vec<usize> = flat_search(&decoded, &query, k).unwrap().iter().map(|h| h.index).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn larger_k1_never_lowers_recall(seed in any::<u64>()) {
        let corpus = gaussian_matrix(300, 32, seed);
        let codes = hash_encode(&corpus).unwrap();
        let query = gaussian_matrix(1, 32, seed ^ 7).row(0).to_vec();
        let k = 10;
        let oracle: BTreeSet<usize> = flat_search(&corpus, &query, k).unwrap().iter().map(|h| h.index).collect();
        let mut last = 0;
        for k1 in [10, 20, 50, 100, 200, 300] {
            prop_assert_eq!(two_stage_search(&query, &codes, k, k1).unwrap().len(), k);
            let cand: BTreeSet<usize> = hamming_topk(&hash_vector(&query).unwrap(), &codes, k1)
                .unwrap()
                .iter()
                .map(|c| c.index)
                .collect();
            let recall = oracle.intersection(&cand).count();
            prop_assert!(recall >= last, "k1 {k1}: {recall} < {last}");
            last = recall;
        }
    }
}

fn random_run_and_qrels(seed: u64, n_queries: usize, n_docs: usize) -> (RunResult, Qrels) {
    let mut rng = seeded(seed);
    let mut run = RunResult::new();
    let mut qrels = Qrels::new();
    for q in 0..n_queries {
        let qid = format!("q{q}");
        let mut scored: Vec<(String, f64)> = Vec::new();
        for d in 0..n_docs {
            if rng.gen_bool(0.7) {
                scored.push((format!("d{d:02}"), rng.gen_range(-3.0..3.0)));
            }
        }
        run.insert_scored(&qid, scored).unwrap();
        for d in 0..n_docs {
            if rng.gen_bool(0.2) {
                qrels.insert(&qid, &format!("d{d:02}"), rng.gen_range(0..4)).unwrap();
            }
        }
    }
    (run, qrels)
}

fn ideal_dcg(qrels: &Qrels, q: &str, k: usize) -> f64 {
    let mut grades: Vec<u32> = qrels.for_query(q).map_or(Vec::new(), |m| m.values().copied().collect());
    grades.sort_unstable_by(|a, b| b.cmp(a));
    grades.iter().take(k).enumerate().map(|(i, g)| *g as f64 / (i as f64 + 2.0).log2()).sum()
}

fn transformed(run: &RunResult, f: impl Fn(f64) -> f64) -> RunResult {
    let mut out = RunResult::new();
    for (q, list) in run.iter() {
        out.insert_ranked(q, list.iter().map(|(d, s)| (d.clone(), f(*s))).collect()).unwrap();
    }
    out
}

#[test]
fn ndcg_can_fall_as_k_grows_with_several_relevant_docs() {
    let mut qrels = Qrels::new();
    qrels.insert("q", "a", 1).unwrap();
    qrels.insert("q", "b", 1).unwrap();
    let mut run = RunResult::new();
    run.insert_ranked("q", vec![("a".into(), 3.0), ("x".into(), 2.0), ("b".into(), 1.0)]).unwrap();
    let at1 = ndcg_at_k(&run, &qrels, 1).unwrap().mean;
    let at2 = ndcg_at_k(&run, &qrels, 2).unwrap().mean;
    assert_eq!(at1, 1.0);
    assert!((at2 - 1.0 / (1.0 + 1.0 / 3f64.log2())).abs() < 1e-12);
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn ndcg_ignores_monotone_score_transforms(seed in any::<u64>()) {
        let (run, qrels) = random_run_and_qrels(seed, 6, 30);
        prop_assume!(qrels.queries().count() > 0);
        let base = ndcg_at_k(&run, &qrels, 10).unwrap();
        for f in [|s: f64| s.exp(), |s: f64| 3.0 * s - 7.0, |s: f64| s.powi(3)] {
            let other = ndcg_at_k(&transformed(&run, f), &qrels, 10).unwrap();
            prop_assert_eq!(&other.per_query, &base.per_query);
        }
    }

    #[test]
    fn metrics_bounded_and_dcg_monotone_in_k(seed in any::<u64>()) {
        let (run, qrels) = random_run_and_qrels(seed, 6, 30);
        prop_assume!(qrels.queries().count() > 0);
        for k in 1..=30 {
            let ndcg = ndcg_at_k(&run, &qrels, k).unwrap();
            let recall = recall_at_k(&run, &qrels, k).unwrap();
            for v in ndcg.per_query.values().chain(recall.per_query.values()) {
                prop_assert!((0.0..=1.0 + 1e-12).contains(v));
            }
        }
        for k in 1..30 {
            let a = ndcg_at_k(&run, &qrels, k).unwrap();
            let b = ndcg_at_k(&run, &qrels, k + 1).unwrap();
            for (q, v) in &a.per_query {
                let dcg_a = v * ideal_dcg(&qrels, q, k);
                let dcg_b = b.per_query[q] * ideal_dcg(&qrels, q, k + 1);
                prop_assert!(dcg_b >= dcg_a - 1e-9, "{q}: dcg {dcg_b} < {dcg_a}");
                let relevant = qrels.for_query(q).map_or(0, |m| m.values().filter(|g| **g > 0).count());
                if relevant == 1 {
                    prop_assert!(b.per_query[q] >= *v - 1e-12, "{q}: {} < {v}", b.per_query[q]);
                }
            }
        }
    }

    #[test]
    fn run_and_qrels_text_roundtrip(seed in any::<u64>()) {
        let (run, qrels) = random_run_and_qrels(seed, 4, 12);
        let mut buf = Vec::new();
        format_run(&run, &mut buf, "t").unwrap();
        let back = parse_run(Cursor::new(&buf)).unwrap();
        prop_assert_eq!(back.num_queries(), run.num_queries());
        for (q, list) in run.iter() {
            let got: Vec<&str> = back.get(q).unwrap().iter().map(|(d, _)| d.as_str()).collect();
            let want: Vec<&str> = list.iter().map(|(d, _)| d.as_str()).collect();
            prop_assert_eq!(got, want);
        }
        for format in [QrelsFormat::BeirTsv, QrelsFormat::Trec] {
            let mut buf = Vec::new();
            format_qrels(&qrels, &mut buf, format).unwrap();
            prop_assert_eq!(&parse_qrels(Cursor::new(&buf)).unwrap(), &qrels);
        }
    }

    #[test]
    fn gpl_margin_is_exact_difference(pos in -1e6f64..1e6, neg in -1e6f64..1e6) {
        let t = GplTriplet::new("q".into(), "a".into(), "b".into(), pos, neg).unwrap();
        prop_assert_eq!(t.margin, pos - neg);
        prop_assert!(GplTriplet::new("q".into(), "a".into(), "a".into(), pos, neg).is_err());
    }

    #[test]
    fn beta_schedule_never_decreases(t in 0usize..1_000_000) {
        prop_assert!(BetaSchedule::Sqrt.at(t + 1) >= BetaSchedule::Sqrt.at(t));
    }
}

fn small_batch(rng: &mut qdr::data::rng::Rng, d: usize, n_pass: usize, n_neg: usize) -> TrainingBatch<f64> {
    let examples = (0..3)
        .map(|_| {
            let query: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let positive = rng.gen_range(0..n_pass);
            let negatives: Vec<usize> = (0..n_neg).map(|j| (positive + 1 + j) % n_pass).collect();
            let ce_neg = (0..n_neg).map(|_| rng.gen_range(-2.0..2.0)).collect();
            TrainingExample::new(query, positive, negatives).with_labels(rng.gen_range(-2.0..2.0), ce_neg)
        })
        .collect();
    TrainingBatch::new(examples).unwrap()
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn infonce_nonnegative_and_log_count_at_ties(seed in any::<u64>(), n_neg in 1usize..6) {
        let mut rng = seeded(seed);
        let d = 8;
        let passages = gaussian_matrix(10, d, seed).cast::<f64>();
        let batch = small_batch(&mut rng, d, 10, n_neg);
        let head = QueryHead::new(d, d, (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let t = Trainables::head_only(head);
        let v = infonce_loss(&batch, &t, Passages::Embeddings(&passages)).unwrap();
        prop_assert!(v.loss >= 0.0);

        let zero = Trainables::head_only(QueryHead::new(d, d, vec![0.0; d * d]).unwrap());
        let tied = infonce_loss(&batch, &zero, Passages::Embeddings(&passages)).unwrap();
        prop_assert!((tied.loss - ((1 + n_neg) as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn margin_mse_ignores_shared_teacher_shift(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = seeded(seed);
        let d = 8;
        let passages = gaussian_matrix(10, d, seed).cast::<f64>();
        let batch = small_batch(&mut rng, d, 10, 2);
        let mut shifted = batch.clone();
        for ex in &mut shifted.examples {
            let l = ex.labels.as_mut().unwrap();
            l.positive += shift;
            for n in &mut l.negatives {
                *n += shift;
            }
        }
        let t = Trainables::head_only(QueryHead::identity(d));
        let a = margin_mse_loss(&batch, &t, Passages::Embeddings(&passages)).unwrap();
        let b = margin_mse_loss(&shifted, &t, Passages::Embeddings(&passages)).unwrap();
        prop_assert!((a.loss - b.loss).abs() <= 1e-9 * a.loss.abs().max(1.0));
    }

    #[test]
    fn jpq_training_leaves_codes_alone(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let d = 8;
        let corpus = gaussian_matrix(30, d, seed).cast::<f64>();
        let cb = fit_pq(&corpus, 4, 4, 3, seed).unwrap();
        let codes = pq_encode(&cb, &corpus).unwrap();
        let before = codes.clone();
        let batch = small_batch(&mut rng, d, 30, 3);
        let cfg = LossConfig {
            kind: LossKind::JpqInfonce,
            learning_rate: 1e-2,
            steps: 5,
            seed,
            ..LossConfig::default()
        };
        let start = Trainables::with_codebook(QueryHead::identity(d), cb.clone());
        let out = train(&cfg, Passages::Codes(&codes), &mut FixedBatch(batch.clone()), start).unwrap();
        prop_assert_eq!(&codes, &before);
        prop_assert!(jpq_loss(&batch, &out.trainables, &codes).unwrap().loss.is_finite());
        prop_assert_eq!(out.trace.len(), 5);
    }
}
