use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::corpus::{
    extract_horizontal, extract_vertical, make_windows, normalize, read_tokens, read_vocabulary,
    write_tokens, write_vocabulary, Token, Vocabulary,
};
use crate::generator::{
    assemble_score, generate as run_generation, major_scale, select_seed, GenerationConstraints,
    ScoreFrame,
};
use crate::neural::{
    decode_weights, encode_weights, train as run_training, ModelConfig, Optimizer, TrainConfig,
};
use crate::rng::{stream, Stream};
use crate::score::{
    format_quarter_length, parse_score, write_midi, write_musicxml, ScoreFormat,
};

use super::{CliError, ExtractMode, GenerateArgs, IngestArgs, OptimizerKind, RunManifest, TrainArgs};

pub const TOKENS_FILE: &str = "tokens.tsv";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

fn read(path: &Path, manifest: &mut RunManifest) -> Result<Vec<u8>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    manifest.add_input(path, &bytes);
    Ok(bytes)
}

fn write(path: &Path, bytes: &[u8], manifest: &mut RunManifest) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    manifest.outputs.push(path.display().to_string());
    Ok(())
}

/// `base` with `suffix` appended (`out/song` + `.mid` -> `out/song.mid`).
fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = base.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn read_text(path: &Path, manifest: &mut RunManifest) -> Result<String, CliError> {
    String::from_utf8(read(path, manifest)?)
        .map_err(|_| CliError::new(super::EXIT_DATA, format!("{}: not UTF-8 text", path.display())))
}

/// Token stream and vocabulary of an ingested dataset directory.
fn read_dataset(dir: &Path, manifest: &mut RunManifest) -> Result<(Vec<Token>, Vocabulary), CliError> {
    let tokens_path = dir.join(TOKENS_FILE);
    let vocab_path = dir.join(VOCAB_FILE);
    let tokens = read_tokens(&read_text(&tokens_path, manifest)?)
        .map_err(|e| CliError::from(e).at(&tokens_path))?;
    let vocab = read_vocabulary(&read_text(&vocab_path, manifest)?)
        .map_err(|e| CliError::from(e).at(&vocab_path))?;
    Ok((tokens, vocab))
}

/// Instruments in order of first appearance in the token stream.
fn instrument_layout(tokens: &[Token]) -> Vec<String> {
    let mut layout: Vec<String> = Vec::new();
    for t in tokens {
        if let Some(i) = &t.instrument {
            if !layout.contains(i) {
                layout.push(i.clone());
            }
        }
    }
    layout
}

pub fn ingest(args: &IngestArgs) -> Result<(), CliError> {
    if args.mode == ExtractMode::Horizontal && args.instruments.len() != 1 {
        return Err(CliError::usage("horizontal mode takes exactly one --instrument"));
    }
    let mut manifest = RunManifest::new(
        "ingest",
        json!({
            "scores": args.scores.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "instruments": args.instruments,
            "mode": format!("{:?}", args.mode).to_lowercase(),
            "out": args.out.display().to_string(),
        }),
    );
    let names: Vec<&str> = args.instruments.iter().map(String::as_str).collect();

    let mut tokens = Vec::new();
    for path in &args.scores {
        let bytes = read(path, &mut manifest)?;
        let parsed = parse_score(&bytes, ScoreFormat::detect(&bytes)).map_err(|e| CliError::from(e).at(path))?;
        for w in &parsed.warnings {
            eprintln!("warning: {}: {w}", path.display());
        }
        let extracted = match args.mode {
            ExtractMode::Horizontal => extract_horizontal(&parsed.score, names[0]),
            ExtractMode::Vertical => extract_vertical(&parsed.score, &names),
        };
        tokens.extend(extracted.map_err(|e| CliError::from(e).at(path))?);
    }
    let vocab = Vocabulary::build(&tokens)?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write(&args.out.join(TOKENS_FILE), write_tokens(&tokens).as_bytes(), &mut manifest)?;
    write(&args.out.join(VOCAB_FILE), write_vocabulary(&vocab).as_bytes(), &mut manifest)?;
    manifest.write(&args.out.join(MANIFEST_FILE))?;
    println!(
        "{} tokens, vocabulary of {} -> {}",
        tokens.len(),
        vocab.len(),
        args.out.display()
    );
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        gradient_clip_norm: (!args.no_clip).then_some(args.clip_norm),
        optimizer: match args.optimizer {
            OptimizerKind::Adam => Optimizer::adam(),
            OptimizerKind::Sgd => Optimizer::Sgd,
        },
        rng_seed: args.seed,
    };
    train_config.validate()?;
    let mut manifest = RunManifest::new(
        "train",
        json!({
            "dataset": args.dataset.display().to_string(),
            "out": args.out.display().to_string(),
            "sequence_length": args.sequence_length,
            "layers": args.layers,
            "dropout": args.dropout,
            "train": train_config,
        }),
    );
    manifest.seeds.insert("seed".into(), args.seed);

    let (tokens, vocab) = read_dataset(&args.dataset, &mut manifest)?;
    let model_config = ModelConfig {
        layer_sizes: args.layers.clone(),
        dropout_rate: args.dropout,
        sequence_length: args.sequence_length,
        vocab_size: vocab.len(),
        rng_seed: args.seed,
    };
    model_config.validate()?;
    let encoded = vocab.encode_all(&tokens)?;
    let dataset = normalize(make_windows(&encoded, args.sequence_length)?, vocab.len())?;

    let outcome = run_training(&dataset, &model_config, &train_config)?;

    write(&args.out, &encode_weights(&outcome.weights), &mut manifest)?;
    let mut log = String::from("epoch,mean_loss\n");
    for (epoch, loss) in outcome.history.iter().enumerate() {
        log.push_str(&format!("{},{loss}\n", epoch + 1));
    }
    write(&args.out.with_extension("loss.csv"), log.as_bytes(), &mut manifest)?;
    manifest.write(&args.out.with_extension("manifest.json"))?;
    println!(
        "{} windows, {} epochs, final mean loss {:.6} -> {}",
        dataset.len(),
        outcome.history.len(),
        outcome.history.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let constraints = GenerationConstraints {
        min_duration: args.min_duration,
        scale_pitch_classes: major_scale(args.key_fifths),
        enforce_scale: !args.no_scale_filter,
        octave_span_semitones: args.octave_span,
        merge_rests: !args.no_rest_merge,
        target_duration: args.target_duration,
    };
    constraints.validate()?;
    if !(-7..=7).contains(&args.key_fifths) {
        return Err(CliError::usage("--key-fifths must lie in -7..=7"));
    }
    let frame = ScoreFrame {
        key_fifths: args.key_fifths,
        time_signature: args.time,
        tempo_bpm: args.tempo,
    };
    let mut manifest = RunManifest::new(
        "generate",
        json!({
            "weights": args.weights.display().to_string(),
            "dataset": args.dataset.display().to_string(),
            "out": args.out.display().to_string(),
            "target_duration": format_quarter_length(args.target_duration),
            "key_fifths": args.key_fifths,
            "time": args.time.to_string(),
            "tempo": args.tempo,
            "scale_filter": constraints.enforce_scale,
            "scale_pitch_classes": constraints.scale_pitch_classes,
            "rest_merge": constraints.merge_rests,
            "min_duration": format_quarter_length(args.min_duration),
            "octave_span": args.octave_span,
        }),
    );
    manifest.seeds.insert("seed".into(), args.seed);

    let weight_bytes = read(&args.weights, &mut manifest)?;
    let weights = decode_weights(&weight_bytes).map_err(|e| CliError::from(e).at(&args.weights))?;
    let (tokens, vocab) = read_dataset(&args.dataset, &mut manifest)?;
    let sequence_length = weights.config.sequence_length;
    weights.check_compatible(sequence_length, vocab.len())?;
    let encoded = vocab.encode_all(&tokens)?;
    let dataset = normalize(make_windows(&encoded, sequence_length)?, vocab.len())?;

    let seed = select_seed(&dataset, &mut stream(args.seed, Stream::SeedSelection))?;
    let generation = run_generation(&weights, &vocab, seed, &constraints)?;
    let misses = generation.constraint_misses();
    if misses > 0 {
        eprintln!(
            "warning: {misses} step(s) had no candidate of at least {}; took the top prediction",
            format_quarter_length(args.min_duration)
        );
    }
    let score = assemble_score(&generation.tokens, &instrument_layout(&tokens), frame)?;

    let xml_path = with_suffix(&args.out, ".musicxml");
    let midi_path = with_suffix(&args.out, ".mid");
    let xml = write_musicxml(&score)?;
    let midi = write_midi(&score)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write(&xml_path, &xml, &mut manifest)?;
    write(&midi_path, &midi, &mut manifest)?;
    manifest.write(&with_suffix(&args.out, ".manifest.json"))?;
    println!(
        "{} events, {} quarter notes -> {}, {}",
        generation.tokens.len(),
        format_quarter_length(generation.total_duration()),
        xml_path.display(),
        midi_path.display()
    );
    Ok(())
}
