use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};

use anyhow::{bail, Context, Result};
use asim::model::file_hash;
use asim::synth::{generate_corpus, generate_pairs, SynthConfig};
use asim::text::{label_histogram, parse_dataset, tokenize_records, vocab_from_pairs, write_dataset};
use asim::Task;
use serde_json::json;

use crate::args::{PreprocessArgs, SynthArgs};
use crate::files::{create_parent, provenance, write_cache, write_sidecar};

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSummary {
    pub records: usize,
    pub vocab_size: usize,
    pub labels: BTreeMap<usize, usize>,
    /// Unit lengths bucketed by 50 tokens; key is the bucket's upper bound.
    pub lengths: BTreeMap<usize, usize>,
}

pub fn preprocess(args: &PreprocessArgs, out: &mut dyn Write) -> Result<PreprocessSummary> {
    let task: Task = args.task.parse()?;
    let records = parse_dataset(&args.input, task)?;
    if records.is_empty() {
        bail!("{} holds no records", args.input.display());
    }
    let pairs = tokenize_records(&records, args.max_len)?;
    let vocab = vocab_from_pairs(&pairs, args.min_count)?;

    let vocab_path = args.vocab_out.clone().unwrap_or_else(|| args.out.join("vocab.txt"));
    let cache_path = args.cache_out.clone().unwrap_or_else(|| args.out.join("cache.jsonl"));
    create_parent(&vocab_path)?;
    vocab.save(&vocab_path)?;
    let source_hash = file_hash(&args.input)?;
    write_sidecar(
        &vocab_path,
        json!({ "source": args.input.display().to_string(), "source_sha256": source_hash, "min_count": args.min_count }),
    )?;
    let header = provenance(&[
        ("task", task.to_string()),
        ("max_len", args.max_len.to_string()),
        ("vocab_hash", vocab.hash()),
        ("source_sha256", source_hash),
    ]);
    write_cache(&cache_path, &header, &pairs)?;

    let mut lengths = BTreeMap::new();
    for p in &pairs {
        for len in [p.x_tokens.len(), p.y_tokens.len()] {
            *lengths.entry(len.div_ceil(50) * 50).or_insert(0) += 1;
        }
    }
    let summary = PreprocessSummary {
        records: records.len(),
        vocab_size: vocab.len(),
        labels: label_histogram(&records),
        lengths,
    };
    writeln!(out, "records: {}", summary.records)?;
    for (label, n) in &summary.labels {
        writeln!(out, "  {:<14} {n}", task.label_name(*label))?;
    }
    writeln!(out, "vocabulary: {} tokens -> {}", summary.vocab_size, vocab_path.display())?;
    writeln!(out, "cache: {} pairs -> {}", pairs.len(), cache_path.display())?;
    writeln!(out, "unit lengths (tokens):")?;
    let mut lo = 1;
    for (hi, n) in &summary.lengths {
        writeln!(out, "  {lo:>3}-{hi:<3} {n}")?;
        lo = hi + 1;
    }
    Ok(summary)
}

pub fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    create_parent(&args.out)?;
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    match (args.pairs, args.corpus_tokens) {
        (Some(n), None) => {
            let task: Task = args.task.parse()?;
            let records = generate_pairs(n, task, args.seed, &SynthConfig::default());
            write_dataset(&mut w, &records, task)?;
            w.flush()?;
            writeln!(out, "wrote {n} {task} pairs to {}", args.out.display())?;
        }
        (None, Some(n)) => {
            for sentence in generate_corpus(n, args.seed) {
                writeln!(w, "{}", sentence.join(" "))?;
            }
            w.flush()?;
            writeln!(out, "wrote a {n}-token corpus to {}", args.out.display())?;
        }
        _ => {
            drop(w);
            let _ = fs::remove_file(&args.out);
            bail!("give exactly one of --pairs or --corpus-tokens");
        }
    }
    write_sidecar(&args.out, json!({ "generator": "synth", "seed": args.seed }))?;
    Ok(())
}
