//! Subcommand implementations. Every command that owns an output directory
//! writes its manifest there; none of them mutates its inputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use qocr_core::dataset::{
    add_salt_pepper, add_speckle, generate_samples, sample_words, split_dataset, GrayImage,
    RendererConfig, Repository, SplitIndices,
};
use qocr_core::metrics::{evaluate_dataset, EvalReport};
use qocr_core::model::{
    build_model, inspect_activations, load_checkpoint, recognize, save_checkpoint, train,
    ModelConfig, TrainingState, Vocabulary,
};
use qocr_core::rng::stream_seed;

use crate::args::*;
use crate::{chart, manifest, pgm};

pub fn run(command: Command) -> anyhow::Result<()> {
    match &command {
        Command::Gen(a) => gen(a, &command),
        Command::Split(a) => split(a, &command),
        Command::Noise(a) => noise(a, &command),
        Command::Train(a) => train_cmd(a, &command),
        Command::Eval(a) => eval_cmd(a, &command),
        Command::Recognize(a) => recognize_cmd(a, &command),
        Command::Inspect(a) => inspect_cmd(a, &command),
        Command::Report(a) => report_cmd(a, &command),
    }
}

fn load_vocab(path: &Option<PathBuf>) -> anyhow::Result<Vocabulary> {
    match path {
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(Vocabulary::from_text(&text)?)
        }
        None => Ok(Vocabulary::default_38()),
    }
}

fn labels_path(data: &Path) -> PathBuf {
    data.join("labels.tsv")
}

fn blob_path(data: &Path) -> PathBuf {
    data.join("images.bin")
}

fn read_repo(data: &Path) -> anyhow::Result<Repository> {
    Repository::read(labels_path(data), blob_path(data))
        .with_context(|| format!("reading repository {}", data.display()))
}

fn write_repo(repo: &Repository, dir: &Path) -> anyhow::Result<()> {
    repo.write(labels_path(dir), blob_path(dir))
        .with_context(|| format!("writing repository {}", dir.display()))
}

fn ensure_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parse_ratios(s: &str) -> anyhow::Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        bail!("ratios must be three comma-separated numbers, got {s:?}");
    }
    let p: Vec<f64> = parts
        .iter()
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing ratios {s:?}"))?;
    Ok((p[0], p[1], p[2]))
}

fn gen(a: &GenArgs, command: &Command) -> anyhow::Result<()> {
    let vocab = load_vocab(&a.vocab)?;
    let words: Vec<String> = match (&a.words, a.random_words) {
        (Some(path), None) => fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect(),
        (None, Some(n)) => sample_words(n, a.min_len, a.max_len, &vocab, a.seed),
        _ => bail!("exactly one of --words or --random-words is required"),
    };
    if words.is_empty() {
        bail!("no words to render");
    }
    let fonts: Vec<u32> = (0..a.fonts).collect();
    let cfg = RendererConfig::new(vocab, a.seed);
    let repo = generate_samples(&words, &fonts, &cfg)?;

    ensure_out(&a.out)?;
    write_repo(&repo, &a.out)?;
    manifest::write(&a.out, command)?;
    println!(
        "generated {} records ({} words x {} fonts), blob {} bytes -> {}",
        repo.len(),
        words.len(),
        fonts.len(),
        repo.blob().len(),
        a.out.display()
    );
    Ok(())
}

fn split(a: &SplitArgs, command: &Command) -> anyhow::Result<()> {
    let repo = read_repo(&a.data)?;
    let ratios = parse_ratios(&a.ratios)?;
    let split = split_dataset(&repo, ratios, a.seed)?;
    ensure_out(&a.out)?;
    fs::write(a.out.join("split.tsv"), split.to_text())?;
    manifest::write(&a.out, command)?;
    println!(
        "split {} records into {}/{}/{} -> {}",
        repo.len(),
        split.train.len(),
        split.validate.len(),
        split.test.len(),
        a.out.display()
    );
    Ok(())
}

fn noise(a: &NoiseArgs, command: &Command) -> anyhow::Result<()> {
    let repo = read_repo(&a.data)?;
    // Independent keyed sub-stream per record, so per-sample noise does not
    // depend on processing order.
    let noised = repo.map_images(|i, _, img| {
        let img = add_salt_pepper(&img, a.sp_density, stream_seed(a.seed, i as u64))?;
        add_speckle(&img, a.speckle_var, stream_seed(a.seed ^ 0x53504B, i as u64))
    })?;
    ensure_out(&a.out)?;
    write_repo(&noised, &a.out)?;
    manifest::write(&a.out, command)?;
    println!(
        "noised {} records (s&p {}, speckle {}) -> {}",
        noised.len(),
        a.sp_density,
        a.speckle_var,
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs, command: &Command) -> anyhow::Result<()> {
    let repo = read_repo(&a.data)?;
    let vocab = load_vocab(&a.vocab)?;
    let split = match &a.split {
        Some(path) => SplitIndices::from_text(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )?,
        None => split_dataset(&repo, parse_ratios(&a.ratios)?, a.seed)?,
    };

    let config = match a.config {
        ConfigName::Paper => ModelConfig::paper(vocab.size()),
        ConfigName::Toy => ModelConfig::toy(vocab.size()),
    };
    let mut state: TrainingState<f64> = build_model(config, vocab, a.seed)?;
    state.hyper.learning_rate = a.lr;
    state.hyper.batch_size = a.batch;

    ensure_out(&a.out)?;
    fs::write(a.out.join("split.tsv"), split.to_text())?;

    let outcome = train(&mut state, &repo, &split, a.iters)?;

    let mut epochs_csv = String::from("epoch,end_iteration,mean_loss,val_crr,val_wrr\n");
    for e in &outcome.epochs {
        epochs_csv.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            e.epoch, e.end_iteration, e.mean_loss, e.val_crr, e.val_wrr
        ));
    }
    fs::write(a.out.join("epochs.csv"), epochs_csv)?;

    save_checkpoint(&state, a.out.join("last.qocr"))?;
    if let Some(best) = &outcome.best {
        save_checkpoint(best, a.out.join("best.qocr"))?;
    }
    manifest::write(&a.out, command)?;

    let last_loss = outcome.losses.last().copied().unwrap_or(f64::NAN);
    if outcome.epochs.is_empty() {
        println!(
            "trained {} iterations (no epoch completed); last loss {last_loss:.4} -> {}",
            a.iters,
            a.out.display()
        );
    } else {
        println!(
            "trained {} iterations ({} epochs); last loss {last_loss:.4}, best val CRR {:.4} -> {}",
            a.iters,
            outcome.epochs.len(),
            outcome.best_crr,
            a.out.display()
        );
    }
    Ok(())
}

fn pick_indices(split_name: &str, split: Option<SplitIndices>, total: usize) -> anyhow::Result<Vec<usize>> {
    match split_name {
        "all" => Ok((0..total).collect()),
        name => {
            let split = split.context("--split-file required (or keep a split.tsv next to the checkpoint)")?;
            Ok(match name {
                "train" => split.train,
                "validate" => split.validate,
                "test" => split.test,
                other => bail!("unknown split {other:?} (expected train, validate, test or all)"),
            })
        }
    }
}

fn eval_cmd(a: &EvalArgs, command: &Command) -> anyhow::Result<()> {
    let repo = read_repo(&a.data)?;
    let state: TrainingState<f64> = load_checkpoint(&a.ckpt)?;

    let split = {
        let path = a.split_file.clone().or_else(|| {
            a.ckpt
                .parent()
                .map(|d| d.join("split.tsv"))
                .filter(|p| p.exists())
        });
        match path {
            Some(p) => Some(SplitIndices::from_text(
                &fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
            )?),
            None => None,
        }
    };
    let indices = pick_indices(&a.split, split, repo.len())?;
    let label = a.label.clone().unwrap_or_else(|| a.split.clone());
    let report = evaluate_dataset(&state, &repo, &indices, &label)?;

    println!("{}", EvalReport::CSV_HEADER);
    println!("{}", report.csv_row());

    if let Some(out) = &a.out {
        ensure_out(out)?;
        fs::write(
            out.join("eval.csv"),
            format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()),
        )?;
        if a.per_sample {
            let mut csv = String::from("truth,prediction,distance\n");
            for s in &report.per_sample {
                csv.push_str(&format!("{},{},{}\n", s.truth, s.prediction, s.distance));
            }
            fs::write(out.join("samples.csv"), csv)?;
        }
        manifest::write(out, command)?;
    }
    Ok(())
}

fn load_input_image(
    image: &Option<PathBuf>,
    data: &Option<PathBuf>,
    index: Option<usize>,
) -> anyhow::Result<GrayImage> {
    match (image, data, index) {
        (Some(path), None, None) => pgm::read(path),
        (None, Some(dir), Some(i)) => Ok(read_repo(dir)?.image(i)?),
        _ => bail!("provide either --image FILE or --data DIR --index N"),
    }
}

fn recognize_cmd(a: &RecognizeArgs, command: &Command) -> anyhow::Result<()> {
    let state: TrainingState<f64> = load_checkpoint(&a.ckpt)?;
    let img = load_input_image(&a.image, &a.data, a.index)?;
    let text = recognize(&state, &img)?;
    println!("{text}");
    if let Some(out) = &a.out {
        ensure_out(out)?;
        fs::write(out.join("recognized.txt"), format!("{text}\n"))?;
        manifest::write(out, command)?;
    }
    Ok(())
}

fn inspect_cmd(a: &InspectArgs, command: &Command) -> anyhow::Result<()> {
    let state: TrainingState<f64> = load_checkpoint(&a.ckpt)?;
    let img = load_input_image(&a.image, &a.data, a.index)?;
    let report = inspect_activations(&state, &img)?;
    ensure_out(&a.out)?;
    pgm::write(&a.out.join("input.pgm"), &img)?;

    for (i, block) in report.conv_blocks.iter().enumerate() {
        let mut text = format!(
            "{} {} {}\n",
            block.shape()[0],
            block.shape()[1],
            block.shape()[2]
        );
        for v in block.data() {
            text.push_str(&format!("{v}\n"));
        }
        fs::write(a.out.join(format!("conv{i}.txt")), text)?;
    }

    let steps = report.sequence.shape()[0];
    let feat = report.sequence.shape()[1];
    let mut text = format!("{steps} {feat}\n");
    for row in report.sequence.data().chunks(feat) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    fs::write(a.out.join("sequence.txt"), text)?;

    let classes = report.logits.shape()[1];
    let mut csv = String::new();
    for row in report.logits.data().chunks(classes) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    fs::write(a.out.join("logits.csv"), csv)?;

    let blank = state.config.vocab_size;
    let mut csv = String::from("step,argmax,symbol\n");
    for (t, &k) in report.argmax.iter().enumerate() {
        let symbol = if k == blank {
            "<blank>".to_string()
        } else {
            state.vocab.symbols()[k].to_string()
        };
        csv.push_str(&format!("{t},{k},{symbol}\n"));
    }
    fs::write(a.out.join("argmax.csv"), csv)?;
    manifest::write(&a.out, command)?;
    println!(
        "wrote {} conv blocks, sequence, logits and argmax -> {}",
        report.conv_blocks.len(),
        a.out.display()
    );
    Ok(())
}

fn report_cmd(a: &ReportArgs, command: &Command) -> anyhow::Result<()> {
    let mut entries = Vec::new();
    let mut summary = format!("{}\n", EvalReport::CSV_HEADER);
    for path in &a.inputs {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == EvalReport::CSV_HEADER => {}
            Some((_, other)) => bail!(
                "{} line 1: unexpected header {other:?}",
                path.display()
            ),
            None => bail!("{} line 1: empty file", path.display()),
        }
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                bail!("{} line {lineno}: expected 6 fields", path.display());
            }
            let crr: f64 = fields[4]
                .parse()
                .with_context(|| format!("{} line {lineno}: bad crr", path.display()))?;
            let wrr: f64 = fields[5]
                .parse()
                .with_context(|| format!("{} line {lineno}: bad wrr", path.display()))?;
            entries.push(chart::ChartEntry {
                label: fields[0].to_string(),
                crr,
                wrr,
            });
            summary.push_str(line);
            summary.push('\n');
        }
    }
    if entries.is_empty() {
        bail!("no report rows found");
    }
    ensure_out(&a.out)?;
    fs::write(a.out.join("summary.csv"), summary)?;
    fs::write(a.out.join("chart.svg"), chart::render(&entries))?;
    manifest::write(&a.out, command)?;
    println!(
        "summarized {} experiments -> {}",
        entries.len(),
        a.out.display()
    );
    Ok(())
}
