use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use earshot_core::audio::{load_wav_file, segment_one_second, AudioClip};
use earshot_core::eval::{
    generate_synthetic_corpus, held_out_classes, pretrain, sample_episodes_excluding, Corpus, EvalReport, Evaluator,
    OpenSetPoint, RunConfig,
};
use earshot_core::fewshot::{train_location, Encoder, Origin, Scoring, SoundLibrary, SupportSet, Verdict};
use earshot_core::{EmbedderModel, LocationModel};
use serde::Serialize;

use crate::config::{manifest_path, RunManifest, Settings};
use crate::error::CliError;
use crate::{Cli, Command, EpisodeArgs, LocationArgs};

pub const REPORT_HELP: &str = "\
Outputs in --out:
  report.json      embedder (content hash), episodes {n_way, k_shot, queries_per_way, n_tasks, seed,
                   support_context}, support_per_task, queries_per_task,
                   methods[] {method, scope (finetune only), accuracies[] (one per task),
                   summary {n, mean, sd, ci95_low, ci95_high}, per_context[] {context, correct, total, accuracy}},
                   comparisons[] {a, b, mean_difference, test {t, df, p, degenerate}}
  report.txt       the same as a table
  open_set.json    with --held-out: [{threshold, in_set_rejection, held_out_rejection}]
  earshot-run.toml resolved settings";

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

struct Ctx {
    workdir: PathBuf,
    settings: Settings,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }

    fn embedder(&self, p: &Path) -> Result<EmbedderModel, CliError> {
        let bytes = read(&self.path(p))?;
        Ok(EmbedderModel::from_bytes(&bytes)?)
    }

    fn corpus(&self, p: &Path) -> Result<Corpus, CliError> {
        let dir = self.path(p);
        if !dir.is_dir() {
            return Err(CliError::data("io", format!("corpus directory {} not found", dir.display())));
        }
        Ok(Corpus::load(dir)?)
    }

    fn write_manifest(
        &self,
        command: &str,
        inputs: BTreeMap<&str, String>,
        outputs: BTreeMap<&str, String>,
        output: &Path,
        is_dir: bool,
    ) -> Result<(), CliError> {
        let manifest = RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            inputs,
            outputs,
            settings: &self.settings,
        };
        write(&manifest_path(&self.path(output), is_dir), manifest.to_toml().as_bytes())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::data("io", format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::data("io", format!("{}: {e}", path.display())))
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn apply_episodes(s: &mut Settings, a: EpisodeArgs) {
    let e = &mut s.episodes;
    set(&mut e.n_way, a.n_way);
    set(&mut e.k_shot, a.k_shot);
    set(&mut e.queries_per_way, a.queries);
    set(&mut e.n_tasks, a.tasks);
    set(&mut e.seed, a.seed);
    if a.support_context.is_some() {
        e.support_context = a.support_context;
    }
}

fn apply_location(s: &mut Settings, a: LocationArgs) -> Result<(), CliError> {
    let l = &mut s.location;
    set(&mut l.alpha, a.alpha);
    set(&mut l.ratio_threshold, a.threshold);
    set(&mut l.loudness_gate_dbfs, a.loudness_gate);
    set(&mut l.seed, a.location_seed);
    l.validate().map_err(|e| CliError::usage(e.to_string()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli.config.as_ref().map(|p| if p.is_absolute() { p.clone() } else { cli.workdir.join(p) });
    let mut ctx = Ctx { workdir: cli.workdir, settings: Settings::load(config_path.as_deref())? };
    match cli.command {
        Command::SynthData(a) => {
            let s = &mut ctx.settings.synth;
            set(&mut s.suite, a.suite);
            set(&mut s.classes, a.classes);
            set(&mut s.clips, a.clips);
            set(&mut s.seed, a.seed);
            let spec = s.spec();
            spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
            let corpus = generate_synthetic_corpus(&spec)?;
            corpus.save(ctx.path(&a.out))?;
            let outputs = BTreeMap::from([("corpus", show(&a.out))]);
            ctx.write_manifest("synth-data", BTreeMap::new(), outputs, &a.out, true)?;
            println!(
                "wrote {} clips of {} classes in {} contexts to {}",
                corpus.clips.len(),
                corpus.class_names().len(),
                corpus.contexts().len(),
                a.out.display()
            );
            Ok(())
        }
        Command::Pretrain(a) => {
            let p = &mut ctx.settings.pretrain;
            set(&mut p.epochs, a.epochs);
            set(&mut p.batch_size, a.batch_size);
            set(&mut p.lr, a.lr);
            if let Some(seed) = a.seed {
                p.seed = seed;
                p.embedder.seed = seed;
            }
            set(&mut p.embedder.conv_channels, a.conv_channels);
            set(&mut p.embedder.embed_dim, a.embed_dim);
            set(&mut p.embedder.normalize, a.normalize_embeddings);
            p.embedder.validate().map_err(|e| CliError::usage(e.to_string()))?;
            if p.epochs == 0 || p.batch_size == 0 || !(p.lr > 0.0) {
                return Err(CliError::usage("epochs, batch size and learning rate must be positive"));
            }
            let corpus = ctx.corpus(&a.corpus)?;
            let (model, report) = pretrain(&corpus, &ctx.settings.pretrain)?;
            write(&ctx.path(&a.out), &model.to_bytes())?;
            for (i, (loss, acc)) in report.epoch_losses.iter().zip(&report.epoch_accuracy).enumerate() {
                println!("epoch {:>3}  loss {loss:.4}  accuracy {acc:.4}", i + 1);
            }
            let version = model.version_hash();
            println!("embedder {version} written to {}", a.out.display());
            let inputs = BTreeMap::from([("corpus", show(&a.corpus))]);
            let outputs = BTreeMap::from([("embedder", show(&a.out)), ("embedder_version", version)]);
            ctx.write_manifest("pretrain", inputs, outputs, &a.out, false)
        }
        Command::EvalEpisodes(a) => {
            apply_episodes(&mut ctx.settings, a.episodes);
            apply_location(&mut ctx.settings, a.location)?;
            let s = &mut ctx.settings;
            set(&mut s.eval.methods, a.methods);
            set(&mut s.eval.held_out_classes, a.held_out);
            set(&mut s.finetune.epochs, a.finetune_epochs);
            set(&mut s.finetune.lr, a.finetune_lr);
            set(&mut s.finetune.scope, a.finetune_scope);
            s.episodes.validate().map_err(|e| CliError::usage(e.to_string()))?;
            if s.eval.methods.is_empty() {
                return Err(CliError::usage("no methods selected"));
            }
            eval_episodes(&ctx, &a.corpus, &a.embedder, &a.out)
        }
        Command::TrainLocation(a) => {
            apply_location(&mut ctx.settings, a.location)?;
            let embedder = ctx.embedder(&a.embedder)?;
            let encoder = Encoder::new(embedder);
            let source = a.source_ambient.as_ref().map(|p| load_wav_file(ctx.path(p))).transpose()?;
            let mut support = SupportSet::new(source);
            if let Some(dir) = &a.samples {
                for (class, segments) in read_class_dirs(&ctx.path(dir))? {
                    support.add_class(class, Origin::User, segments);
                }
            }
            if !a.library_classes.is_empty() {
                let dir = a.library.as_ref().ok_or_else(|| CliError::usage("--library-class needs --library"))?;
                let library = SoundLibrary::load_dir(ctx.path(dir))?;
                for (i, class) in a.library_classes.iter().enumerate() {
                    support.add_library_class(&library, class, ctx.settings.location.seed ^ (i as u64 + 1))?;
                }
            }
            let ambient = load_wav_file(ctx.path(&a.ambient))?;
            let trained = train_location(&a.name, &support, &ambient, &encoder, &ctx.settings.location)?;
            write(&ctx.path(&a.out), &trained.model.to_bytes())?;
            println!(
                "trained {:?}: {} classes ({}), {} augmented, {:.1} ms",
                a.name,
                trained.model.num_classes(),
                trained.model.class_names.join(", "),
                trained.augmented,
                trained.training_time.as_secs_f64() * 1000.0
            );
            let mut inputs = BTreeMap::from([
                ("embedder", show(&a.embedder)),
                ("ambient", show(&a.ambient)),
                ("name", a.name.clone()),
            ]);
            if let Some(p) = &a.samples {
                inputs.insert("samples", show(p));
            }
            if let Some(p) = &a.source_ambient {
                inputs.insert("source_ambient", show(p));
            }
            if let Some(p) = &a.library {
                inputs.insert("library", show(p));
                inputs.insert("library_classes", a.library_classes.join(","));
            }
            let outputs = BTreeMap::from([("model", show(&a.out))]);
            ctx.write_manifest("train-location", inputs, outputs, &a.out, false)
        }
        Command::Predict(a) => predict(&ctx, a),
        Command::Serve(a) => {
            apply_location(&mut ctx.settings, a.location)?;
            set(&mut ctx.settings.serve.addr, a.addr);
            serve(&ctx, &a.embedder, &a.root, a.library.as_deref())
        }
        Command::ExportEmbeddings(a) => export_embeddings(&ctx, &a.corpus, &a.embedder, &a.out, a.context.as_deref()),
    }
}

/// `<dir>/<class>/*.wav`, sorted, keeping the first second of each file.
fn read_class_dirs(dir: &Path) -> Result<Vec<(String, Vec<earshot_core::Segment>)>, CliError> {
    let mut classes: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::data("io", format!("{}: {e}", dir.display())))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    let mut out = Vec::new();
    for class_dir in classes {
        let name = class_dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&class_dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        let mut segments = Vec::with_capacity(files.len());
        for f in files {
            let clip = load_wav_file(&f)?;
            segments.push(segment_one_second(&clip)?.swap_remove(0));
        }
        out.push((name, segments));
    }
    Ok(out)
}

fn eval_episodes(ctx: &Ctx, corpus_dir: &Path, embedder_path: &Path, out: &Path) -> Result<(), CliError> {
    let s = &ctx.settings;
    let corpus = ctx.corpus(corpus_dir)?;
    let embedder = ctx.embedder(embedder_path)?;
    let version = embedder.version_hash();
    let (held, held_idx) = match s.eval.held_out_classes {
        0 => (Vec::new(), Vec::new()),
        n => held_out_classes(&corpus, n)?,
    };
    let episodes = sample_episodes_excluding(&corpus, &s.episodes, &held)?;
    let run_config = RunConfig {
        location: s.location.clone(),
        finetune: s.finetune.clone(),
        pretraining_classes: s.eval.pretraining_classes.clone(),
    };
    let evaluator = Evaluator::new(&corpus, embedder, run_config);
    let started = Instant::now();
    let results = evaluator.run(&s.eval.methods, &episodes)?;
    tracing::info!(seconds = started.elapsed().as_secs_f64(), "episodes evaluated");
    let report = EvalReport::build(&version, &s.episodes, &episodes, &results, s.finetune.scope)?;
    let mut text = report.to_text();
    let dir = ctx.path(out);
    let mut outputs = BTreeMap::from([("report_json", "report.json".to_string()), ("report_txt", "report.txt".to_string())]);
    if !held.is_empty() {
        let points = evaluator.open_set_sweep(&episodes, &held_idx, &s.eval.thresholds)?;
        text.push_str(&open_set_text(&held, &points));
        let json = serde_json::to_string_pretty(&points).expect("points serialize") + "\n";
        write(&dir.join("open_set.json"), json.as_bytes())?;
        outputs.insert("open_set_json", "open_set.json".to_string());
    }
    write(&dir.join("report.json"), report.to_json().as_bytes())?;
    write(&dir.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    let inputs = BTreeMap::from([("corpus", show(corpus_dir)), ("embedder", show(embedder_path))]);
    ctx.write_manifest("eval-episodes", inputs, outputs, out, true)
}

fn open_set_text(held: &[String], points: &[OpenSetPoint]) -> String {
    let mut s = format!("\nopen set, held out: {}\n{:>9} {:>10} {:>10}\n", held.join(", "), "T", "in-set", "held-out");
    for p in points {
        let _ = writeln!(s, "{:>9.2} {:>10.4} {:>10.4}", p.threshold, p.in_set_rejection, p.held_out_rejection);
    }
    s
}

#[derive(Serialize)]
struct PredictOutput<'a> {
    class: &'a str,
    verdict: Verdict,
    all_quiet: bool,
    probabilities: Option<&'a [f64]>,
    class_names: &'a [String],
    segments: Vec<SegmentOutput>,
}

#[derive(Serialize)]
struct SegmentOutput {
    verdict: Option<Verdict>,
    ratio: f64,
    nearest: usize,
}

fn predict(ctx: &Ctx, a: crate::PredictArgs) -> Result<(), CliError> {
    let model = LocationModel::from_bytes(&read(&ctx.path(&a.model))?)?;
    let encoder = Encoder::new(ctx.embedder(&a.embedder)?);
    let clip: AudioClip = load_wav_file(ctx.path(&a.input))?;
    let scoring = if a.closed_set { Scoring::ClosedSet } else { Scoring::OpenSet };
    let pred = model.predict_clip_with(&encoder, &clip, scoring)?;
    let class = match pred.verdict {
        Verdict::Class(i) => model.class_names[i].as_str(),
        _ => "unknown",
    };
    if a.json {
        let out = PredictOutput {
            class,
            verdict: pred.verdict,
            all_quiet: pred.all_quiet,
            probabilities: pred.mean_probabilities.as_deref(),
            class_names: &model.class_names,
            segments: pred
                .segments
                .iter()
                .map(|d| SegmentOutput { verdict: d.verdict, ratio: d.ratio, nearest: d.nearest })
                .collect(),
        };
        println!("{}", serde_json::to_string(&out).expect("prediction serializes"));
    } else {
        println!("{class}");
    }
    Ok(())
}

fn serve(ctx: &Ctx, embedder: &Path, root: &Path, library: Option<&Path>) -> Result<(), CliError> {
    let s = &ctx.settings;
    let model = ctx.embedder(embedder)?;
    let mut config = earshot_service::ServiceConfig::new(ctx.path(root));
    config.location = s.location.clone();
    config.library_dir = library.map(|p| ctx.path(p));
    config.k_shot = s.serve.k_shot;
    let state = earshot_service::AppState::open(config, model)?;
    let mut inputs = BTreeMap::from([("embedder", show(embedder))]);
    if let Some(p) = library {
        inputs.insert("library", show(p));
    }
    ctx.write_manifest("serve", inputs, BTreeMap::from([("root", show(root))]), root, true)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&s.serve.addr)
            .await
            .map_err(|e| CliError::data("io", format!("cannot listen on {}: {e}", s.serve.addr)))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        tokio::select! {
            r = earshot_service::serve(listener, state) => r.map_err(CliError::from),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

fn export_embeddings(
    ctx: &Ctx,
    corpus_dir: &Path,
    embedder_path: &Path,
    out: &Path,
    context: Option<&str>,
) -> Result<(), CliError> {
    let corpus = ctx.corpus(corpus_dir)?;
    let encoder = Encoder::new(ctx.embedder(embedder_path)?);
    let dim = encoder.embed_dim();
    let mut tsv = String::from("source_id\toffset_s\tclass\tcontext\tsnr_db");
    for d in 0..dim {
        let _ = write!(tsv, "\te{d}");
    }
    tsv.push('\n');
    let mut rows = 0;
    for lc in corpus.clips.iter().filter(|c| context.is_none_or(|ctx| c.context == ctx)) {
        for seg in segment_one_second(&lc.clip)? {
            let _ = write!(tsv, "{}\t{}\t{}\t{}\t{}", lc.clip.source_id, seg.offset_s, lc.class, lc.context, lc.snr_db);
            for v in encoder.embed(&seg) {
                let _ = write!(tsv, "\t{v}");
            }
            tsv.push('\n');
            rows += 1;
        }
    }
    write(&ctx.path(out), tsv.as_bytes())?;
    println!("wrote {rows} embeddings of dimension {dim} to {}", out.display());
    let mut inputs = BTreeMap::from([("corpus", show(corpus_dir)), ("embedder", show(embedder_path))]);
    if let Some(c) = context {
        inputs.insert("context", c.to_string());
    }
    ctx.write_manifest("export-embeddings", inputs, BTreeMap::from([("embeddings", show(out))]), out, false)
}
