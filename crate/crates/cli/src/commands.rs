use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use qdr::adapt::{
    build_genq_pairs, build_gpl_triplets, mine_hard_negatives, positives_from_qrels, read_ce_scores,
    synth_query_stub, GeneratedQuerySet, GplTriplet, MinedNegatives,
};
use qdr::binhash::hash_encode;
use qdr::compress::{self, scalar_quantize, PqCodeSet, PqIndex, ScalarMode};
use qdr::data::manifest::{CompressionParams, IndexKind, IndexManifest};
use qdr::data::{
    read_embeddings, read_jsonl, read_qrels, read_run, write_embeddings, write_jsonl, write_qrels, write_run,
    Document, EmbeddingMatrix, Qrels, QrelsFormat,
};
use qdr::eval::{measure_latency, ndcg_at_k, recall_at_k, report_index_size, MetricReport};
use qdr::index::search_all;
use qdr::synth::synthetic_corpus;
use qdr::train::trainer::format_trace_csv;
use qdr::train::{
    train as run_training, BatchSource, BetaSchedule, LossConfig, LossKind, Passages, PqHardNegatives, QueryHead,
    ShuffledBatches, TrainingExample, Trainables,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::loader::{load_index, LoadedIndex};
use crate::*;

/// Prints the resolved configuration as one JSON line and returns it for
/// manifests.
fn echo<A: Serialize>(command: &str, args: &A, seed: u64) -> CliResult<Value> {
    let config = json!({ "args": serde_json::to_value(args)?, "seed": seed });
    println!("{}", json!({ "command": command, "config": config }));
    Ok(config)
}

fn ctx<T>(path: &Path, r: qdr::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::from(e).with_context(path))
}

fn finish_manifest(path: &Path, manifest: IndexManifest, command: &str, config: &Value, seed: u64) -> CliResult<()> {
    let m = manifest.with_seed(seed).with_producer(command, config.clone());
    ctx(path, m.write_sidecar(path).map(|_| ()))
}

fn file_len(path: &Path) -> CliResult<u64> {
    Ok(fs::metadata(path)?.len())
}

pub fn synth(a: &SynthArgs, seed: u64) -> CliResult<()> {
    let config = echo("synth", a, seed)?;
    fs::create_dir_all(&a.out_dir)?;
    let c = synthetic_corpus(a.docs, a.queries, a.clusters, a.dim, seed)?;
    let dir = &a.out_dir;
    write_jsonl(&c.docs, &dir.join("corpus.jsonl"))?;
    write_jsonl(&c.queries, &dir.join("queries.jsonl"))?;
    write_qrels(&c.qrels, &dir.join("qrels.tsv"), QrelsFormat::BeirTsv)?;
    for (name, m) in [("corpus.emb", &c.doc_embeddings), ("queries.emb", &c.query_embeddings)] {
        let path = dir.join(name);
        let manifest = write_embeddings(m, &path)?;
        finish_manifest(&path, manifest, "synth", &config, seed)?;
    }
    Ok(())
}

pub fn fit_pca(a: &FitPcaArgs, seed: u64) -> CliResult<()> {
    let config = echo("fit-pca", a, seed)?;
    let train = ctx(&a.input, read_embeddings::<f32>(&a.input))?;
    let model = compress::fit_pca(&train, a.target_dim, a.whiten)?;
    let bytes = ctx(&a.out, model.write(&a.out))?;
    let params = CompressionParams::Pca {
        input_dim: model.input_dim(),
        target_dim: model.target_dim(),
        whiten: a.whiten,
    };
    let manifest = IndexManifest {
        kind: IndexKind::Pca,
        dim: model.input_dim(),
        count: 0,
        params: params.clone(),
        size_bytes: bytes,
        payload_bytes: bytes,
        seed,
        producer: None,
    };
    finish_manifest(&a.out, manifest, "fit-pca", &config, seed)?;
    if let (Some(corpus), Some(out)) = (&a.corpus, &a.index_out) {
        let corpus = ctx(corpus, read_embeddings::<f32>(corpus))?;
        let projected = model.apply(&corpus)?;
        let mut manifest = ctx(out, write_embeddings(&projected, out))?;
        manifest.kind = IndexKind::Pca;
        manifest.params = params;
        finish_manifest(out, manifest, "fit-pca", &config, seed)?;
    }
    Ok(())
}

pub fn fit_pq(a: &FitPqArgs, seed: u64) -> CliResult<()> {
    let config = echo("fit-pq", a, seed)?;
    let train = ctx(&a.input, read_embeddings::<f32>(&a.input))?;
    let codebook = compress::fit_pq(&train, a.m, a.k, a.iters, seed)?;
    let empty = PqCodeSet::new(a.m, Vec::new(), Vec::new())?;
    let index = PqIndex::new(codebook, empty)?;
    let manifest = ctx(&a.out, index.write(&a.out, IndexKind::Pq))?;
    finish_manifest(&a.out, manifest, "fit-pq", &config, seed)
}

pub fn pq_index(a: &PqIndexArgs, seed: u64) -> CliResult<()> {
    let config = echo("pq-index", a, seed)?;
    let codebook = ctx(&a.codebook, PqIndex::<f32>::read(&a.codebook))?.codebook;
    let corpus = ctx(&a.input, read_embeddings::<f32>(&a.input))?;
    let index = PqIndex::build(codebook, &corpus)?;
    let manifest = ctx(&a.out, index.write(&a.out, IndexKind::Pq))?;
    finish_manifest(&a.out, manifest, "pq-index", &config, seed)
}

pub fn quantize(a: &QuantizeArgs, seed: u64) -> CliResult<()> {
    let config = echo("quantize", a, seed)?;
    let corpus = ctx(&a.input, read_embeddings::<f32>(&a.input))?;
    let mode = match a.mode {
        QuantMode::Fp16 => ScalarMode::Fp16,
        QuantMode::Fp8 => ScalarMode::Fp8,
    };
    let codes = scalar_quantize(&corpus, mode)?;
    let manifest = ctx(&a.out, codes.write(&a.out))?;
    finish_manifest(&a.out, manifest, "quantize", &config, seed)
}

pub fn hash_index(a: &HashIndexArgs, seed: u64) -> CliResult<()> {
    let config = echo("hash-index", a, seed)?;
    let corpus = ctx(&a.input, read_embeddings::<f32>(&a.input))?;
    let codes = hash_encode(&corpus)?;
    let manifest = ctx(&a.out, codes.write(&a.out))?;
    finish_manifest(&a.out, manifest, "hash-index", &config, seed)
}

fn mode_matches(mode: SearchMode, kind: IndexKind) -> bool {
    match mode {
        SearchMode::Flat => matches!(kind, IndexKind::FlatF32 | IndexKind::FlatFp16 | IndexKind::FlatFp8),
        SearchMode::Pca => kind == IndexKind::Pca,
        SearchMode::Pq => matches!(kind, IndexKind::Pq | IndexKind::Jpq),
        SearchMode::Binary => kind == IndexKind::Binary,
    }
}

fn load_queries(path: &Path, head: Option<&Path>) -> CliResult<EmbeddingMatrix<f32>> {
    let queries = ctx(path, read_embeddings::<f32>(path))?;
    match head {
        Some(h) => {
            let head = ctx(h, QueryHead::<f32>::read(h))?;
            Ok(head.apply_all(&queries)?)
        }
        None => Ok(queries),
    }
}

pub fn search(a: &SearchArgs, seed: u64) -> CliResult<()> {
    echo("search", a, seed)?;
    let index = load_index(&a.index, a.model.as_deref(), a.k1)?;
    if !mode_matches(a.mode, index.kind()) {
        return Err(CliError::Usage(format!(
            "--mode {} cannot search a {} index",
            clap::ValueEnum::to_possible_value(&a.mode).expect("no skipped variants").get_name(),
            index.kind().name()
        )));
    }
    let queries = load_queries(&a.queries, a.head.as_deref())?;
    let run = search_all(index.as_search(), &queries, a.k)?;
    ctx(&a.out, write_run(&run, &a.out, &a.tag))
}

fn row_lookup<'a>(m: &'a EmbeddingMatrix<f64>, what: &'a str) -> impl Fn(&str) -> CliResult<usize> + 'a {
    let index: HashMap<String, usize> = m.ids().iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    move |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| CliError::Data(format!("{what} id {id:?} not found")))
    }
}

pub fn train(a: &TrainArgs, seed: u64) -> CliResult<()> {
    let config = echo("train", a, seed)?;
    let queries = ctx(&a.queries, read_embeddings::<f64>(&a.queries))?;
    let floats = match &a.passages {
        Some(p) => Some(ctx(p, read_embeddings::<f64>(p))?),
        None => None,
    };
    let pq = match &a.index {
        Some(p) => Some(ctx(p, PqIndex::<f64>::read(p))?),
        None => None,
    };
    let kind = match a.loss {
        LossArg::Bpr => LossKind::Bpr,
        LossArg::Jpq => LossKind::JpqInfonce,
        LossArg::MarginMse => LossKind::MarginMse,
    };
    let usage = |m: &str| Err(CliError::Usage(m.to_string()));
    let (passage_ids, passages): (&[String], Passages<'_, f64>) = match (a.loss, &floats, &pq) {
        (LossArg::Bpr, Some(f), _) => (f.ids(), Passages::Embeddings(f)),
        (LossArg::Bpr, None, _) => return usage("bpr training needs --passages"),
        (LossArg::Jpq, _, Some(p)) => (p.codes.ids(), Passages::Codes(&p.codes)),
        (LossArg::Jpq, _, None) => return usage("jpq training needs --index"),
        (LossArg::MarginMse, _, Some(p)) => (p.codes.ids(), Passages::Codes(&p.codes)),
        (LossArg::MarginMse, Some(f), None) => (f.ids(), Passages::Embeddings(f)),
        (LossArg::MarginMse, None, None) => return usage("margin-mse training needs --passages or --index"),
    };
    if a.loss == LossArg::MarginMse && a.triplets.is_none() {
        return usage("margin-mse training needs --triplets");
    }

    let d = queries.dim();
    let head = QueryHead::identity(d);
    let trainables = match &pq {
        Some(p) if !matches!(passages, Passages::Embeddings(_)) => Trainables::with_codebook(head, p.codebook.clone()),
        _ => Trainables::head_only(head),
    };
    let cfg = LossConfig {
        kind,
        alpha: a.alpha,
        beta: a.beta.map_or(BetaSchedule::Sqrt, BetaSchedule::Constant),
        learning_rate: a.lr,
        batch_size: a.batch_size,
        steps: a.steps,
        seed,
    };

    let query_row = row_lookup(&queries, "query");
    let passage_index: HashMap<&str, usize> = passage_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let passage_row = |id: &str| {
        passage_index
            .get(id)
            .copied()
            .ok_or_else(|| CliError::Data(format!("passage id {id:?} not found")))
    };

    let mut examples = Vec::new();
    if let Some(path) = &a.triplets {
        for t in ctx(path, read_jsonl::<GplTriplet>(path))? {
            let x = queries.row(query_row(&t.query)?).to_vec();
            let ex = TrainingExample::new(x, passage_row(&t.pos_id)?, vec![passage_row(&t.neg_id)?]);
            examples.push(ex.with_labels(t.ce_pos, vec![t.ce_neg]));
        }
    } else if let Some(path) = &a.negatives {
        for m in ctx(path, read_jsonl::<MinedNegatives>(path))? {
            let x = queries.row(query_row(&m.query_id)?).to_vec();
            let negs = m.negatives.iter().map(|n| passage_row(n)).collect::<CliResult<Vec<_>>>()?;
            examples.push(TrainingExample::new(x, passage_row(&m.positive_id)?, negs));
        }
    }

    let mined_positives;
    let mined_queries;
    let mut source: Box<dyn BatchSource<f64> + '_> = if !examples.is_empty() {
        Box::new(ShuffledBatches::new(examples, a.batch_size, seed)?)
    } else if a.loss == LossArg::Jpq {
        let Some(qrels_path) = &a.qrels else {
            return usage("jpq training needs --negatives, --triplets, or --qrels");
        };
        let qrels = ctx(qrels_path, read_qrels(qrels_path))?;
        let mut rows = Vec::new();
        let mut pos = Vec::new();
        for (qi, p) in positives_from_qrels(queries.ids(), &qrels).into_iter().enumerate() {
            if let Some((best, _)) = p {
                rows.push(qi);
                pos.push(passage_row(&best)?);
            }
        }
        if rows.is_empty() {
            return Err(CliError::Data("no query has a judged positive".into()));
        }
        mined_queries = queries.select(&rows)?;
        mined_positives = pos;
        let codes = &pq.as_ref().expect("checked above").codes;
        Box::new(PqHardNegatives::new(
            &mined_queries,
            &mined_positives,
            codes,
            a.depth,
            a.samples.min(a.depth),
            a.batch_size,
            seed,
        )?)
    } else {
        return usage("training needs --negatives or --triplets");
    };

    let out = run_training(&cfg, passages, source.as_mut(), trainables)?;
    drop(source);

    let head = out.trainables.head.cast::<f32>();
    let bytes = ctx(&a.head_out, head.write(&a.head_out))?;
    let manifest = IndexManifest {
        kind: IndexKind::FlatF32,
        dim: head.d_in(),
        count: head.d_out(),
        params: CompressionParams::None,
        size_bytes: bytes,
        payload_bytes: (head.weight().len() * 4) as u64,
        seed,
        producer: None,
    };
    finish_manifest(&a.head_out, manifest, "train", &config, seed)?;

    if let (Some(path), Some(cb), Some(p)) = (&a.index_out, &out.trainables.codebook, &pq) {
        let index = PqIndex::new(cb.cast::<f32>(), p.codes.clone())?;
        let manifest = ctx(path, index.write(path, IndexKind::Jpq))?;
        finish_manifest(path, manifest, "train", &config, seed)?;
    }
    if let Some(path) = &a.trace {
        let mut w = BufWriter::new(File::create(path)?);
        format_trace_csv(&out.trace, &mut w)?;
        w.flush()?;
    }
    if let Some(last) = out.trace.last() {
        println!("{}", json!({ "final_step": last.step, "final_loss": last.loss }));
    }
    Ok(())
}

pub fn mine_negatives(a: &MineArgs, seed: u64) -> CliResult<()> {
    echo("mine-negatives", a, seed)?;
    let loaded: Vec<LoadedIndex> = a
        .indexes
        .iter()
        .map(|p| load_index(p, a.model.as_deref(), a.k1))
        .collect::<CliResult<_>>()?;
    let indexes: Vec<_> = loaded.iter().map(|l| l.as_search()).collect();
    let queries = ctx(&a.queries, read_embeddings::<f32>(&a.queries))?;
    let qrels = ctx(&a.qrels, read_qrels(&a.qrels))?;
    let mut rows = Vec::new();
    let mut positives = Vec::new();
    let mut excluded = Vec::new();
    for (qi, p) in positives_from_qrels(queries.ids(), &qrels).into_iter().enumerate() {
        if let Some((best, relevant)) = p {
            rows.push(qi);
            positives.push(best);
            excluded.push(relevant);
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data("no query in the queries file has a judged positive".into()));
    }
    let judged = queries.select(&rows)?;
    let mined = mine_hard_negatives(&indexes, &judged, &positives, &excluded, a.depth, a.samples, seed)?;
    ctx(&a.out, write_jsonl(&mined, &a.out))
}

pub fn build_genq(a: &BuildGenqArgs, seed: u64) -> CliResult<()> {
    echo("build-genq", a, seed)?;
    let corpus: Vec<Document> = ctx(&a.corpus, read_jsonl(&a.corpus))?;
    let generated = match &a.generated {
        Some(p) => ctx(p, GeneratedQuerySet::read(p))?,
        None => synth_query_stub(&corpus, a.q_per_passage, seed)?,
    };
    let pairs = build_genq_pairs(&generated, corpus.iter().map(|d| d.id.as_str()), a.q_per_passage)?;
    ctx(&a.out, write_jsonl(&pairs, &a.out))?;
    if let Some(path) = &a.qrels_out {
        let mut qrels = Qrels::new();
        for p in &pairs {
            qrels.insert(&p.query_id, &p.pos_id, 1)?;
        }
        ctx(path, write_qrels(&qrels, path, QrelsFormat::BeirTsv))?;
    }
    if let Some(path) = &a.queries_out {
        let docs: Vec<Document> = pairs.iter().map(|p| Document::new(&p.query_id, "", &p.query)).collect();
        ctx(path, write_jsonl(&docs, path))?;
    }
    Ok(())
}

pub fn build_gpl(a: &BuildGplArgs, seed: u64) -> CliResult<()> {
    echo("build-gpl", a, seed)?;
    let mined: Vec<MinedNegatives> = ctx(&a.negatives, read_jsonl(&a.negatives))?;
    let ce = ctx(&a.ce_scores, read_ce_scores(&a.ce_scores))?;
    let triplets = build_gpl_triplets(&mined, &ce)?;
    ctx(&a.out, write_jsonl(&triplets, &a.out))
}

pub fn eval(a: &EvalArgs, seed: u64) -> CliResult<()> {
    echo("eval", a, seed)?;
    let run = ctx(&a.run, read_run(&a.run))?;
    let qrels = ctx(&a.qrels, read_qrels(&a.qrels))?;
    let reports: Vec<MetricReport> = a
        .metrics
        .iter()
        .map(|m| match m {
            Metric::Ndcg => ndcg_at_k(&run, &qrels, a.k),
            Metric::Recall => recall_at_k(&run, &qrels, a.k),
        })
        .collect::<qdr::Result<_>>()?;
    let mut buf = Vec::new();
    match a.format {
        Format::Tsv => {
            for r in &reports {
                r.write_tsv(&mut buf)?;
            }
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, &reports)?;
            buf.push(b'\n');
        }
    }
    match &a.out {
        Some(p) => fs::write(p, &buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    path: String,
    #[serde(flatten)]
    size: qdr::eval::SizeRow,
    latency: Option<qdr::eval::LatencyReport>,
}

pub fn bench(a: &BenchArgs, seed: u64) -> CliResult<()> {
    echo("bench", a, seed)?;
    let queries = match &a.queries {
        Some(p) => Some(ctx(p, read_embeddings::<f32>(p))?),
        None => None,
    };
    let mut rows = Vec::new();
    for path in &a.indexes {
        let index = load_index(path, a.model.as_deref(), a.k1)?;
        let manifest = match IndexManifest::read_sidecar(path) {
            Ok(m) => m,
            Err(_) => IndexManifest {
                kind: index.kind(),
                dim: index.as_search().query_dim(),
                count: index.as_search().len(),
                params: CompressionParams::None,
                size_bytes: file_len(path)?,
                payload_bytes: index.payload_bytes(),
                seed: 0,
                producer: None,
            },
        };
        let latency = match &queries {
            Some(q) => Some(measure_latency(index.as_search(), q, a.k, a.warmup, a.repeats)?),
            None => None,
        };
        rows.push(BenchRow {
            path: path.display().to_string(),
            size: report_index_size(&manifest),
            latency,
        });
    }
    println!("index\tkind\tcount\tpayload\tfile\tmean_ms\tstd_ms");
    for r in &rows {
        let (mean, std) = r
            .latency
            .as_ref()
            .map_or(("-".to_string(), "-".to_string()), |l| (format!("{:.3}", l.mean_ms), format!("{:.3}", l.std_ms)));
        println!(
            "{}\t{}\t{}\t{}\t{}\t{mean}\t{std}",
            r.path, r.size.kind, r.size.count, r.size.payload_mb, r.size.file_mb
        );
    }
    if let Some(p) = &a.json {
        fs::write(p, serde_json::to_string_pretty(&rows)? + "\n")?;
    }
    Ok(())
}
