//! Command-line interface: one binary, subcommand per pipeline stage.
//!
//! Every subcommand reads its defaults from a [`RunConfig`] — loaded from
//! `--config FILE`, else from the file named by the `BEATDET_CONFIG`
//! environment variable, else built-in defaults — and then applies command
//! line flags on top, so flags always win. The effective configuration is
//! hashed into a provenance header (config hash, seed, crate version) that
//! is embedded in every artifact the command writes.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (unreadable/malformed inputs, failed analysis).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::decode::{
    detections_to_beats, score_and_collect, suppress, DecodeConfig, Detection, NmsKind,
};
use crate::error::{Error, Result};
use crate::geometry::{intervals_from_beats, EventClass};
use crate::histogram::{neighbor_iou_histogram, select_iou_threshold, HistogramConfig};
use crate::io::{
    beats_to_string, histogram_csv, histogram_svg, json_artifact, loss_log_csv, metric_cell,
    metrics_csv, parse_beats, read_wav, report_rows, write_text, Provenance,
};
use crate::kmeans::kmeans_1d;
use crate::metrics::{aggregate_reports, joint_report, MetricReport};
use crate::pyramid::{assign_targets, AnchorGrid, QualityTarget};
use crate::toy::{
    extract_pyramid, predict, prepare_tracks, random_specs, run_ablation, synth_track, train_toy,
    ToyHeads, TrainConfig,
};

use rayon::prelude::*;

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "BEATDET_CONFIG";

/// Synthetic corpus layout shared by `train-toy`, `analyze-iou
/// --synthetic`, and `ablate`: three disjoint splits drawn from the same
/// tempo/meter distribution with independent seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub train_tracks: usize,
    pub val_tracks: usize,
    pub test_tracks: usize,
    /// Uniform tempo range in BPM (applies before any drift).
    pub tempo_range: (f64, f64),
    /// Meters cycled across tracks (beats per bar).
    pub meters: Vec<u32>,
    /// Track length in seconds.
    pub duration: f64,
    /// Linear tempo drift over the track, as a fraction of the start tempo.
    pub drift: f64,
    pub train_seed: u64,
    pub val_seed: u64,
    pub test_seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            train_tracks: 50,
            val_tracks: 16,
            test_tracks: 20,
            tempo_range: (60.0, 180.0),
            meters: vec![3, 4],
            duration: 10.0,
            drift: 0.0,
            train_seed: 101,
            val_seed: 202,
            test_seed: 303,
        }
    }
}

impl CorpusConfig {
    fn split(&self, n: usize, seed: u64) -> Vec<crate::toy::SynthSpec> {
        random_specs(
            n,
            self.tempo_range,
            &self.meters,
            self.duration,
            self.drift,
            seed,
        )
    }

    pub fn train_split(&self) -> Vec<crate::toy::SynthSpec> {
        self.split(self.train_tracks, self.train_seed)
    }

    pub fn val_split(&self) -> Vec<crate::toy::SynthSpec> {
        self.split(self.val_tracks, self.val_seed)
    }

    pub fn test_split(&self) -> Vec<crate::toy::SynthSpec> {
        self.split(self.test_tracks, self.test_seed)
    }
}

/// Merged settings every subcommand starts from. The nested training
/// configuration carries the pyramid, loss, decode, and eval parameters
/// used by the non-training commands too, so one file configures the whole
/// pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub corpus: CorpusConfig,
    pub histogram: HistogramConfig,
    /// Confidence floor for histogram rows that participate in IoU
    /// threshold selection.
    pub min_confidence: f64,
    /// Candidate score floor used when collecting pre-suppression
    /// detections for histogram analysis. Stricter than the decode-time
    /// pre-filter so near-threshold stragglers do not blur the statistics.
    pub analysis_pre_filter: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            corpus: CorpusConfig::default(),
            histogram: HistogramConfig::default(),
            min_confidence: 0.2,
            analysis_pre_filter: 0.2,
        }
    }
}

impl RunConfig {
    /// FNV-1a hash of the serialized effective configuration, as fixed-width
    /// hex. Stable across runs of the same build and configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    fn provenance(&self) -> Provenance {
        Provenance::new(self.hash(), self.train.seed)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "beatdet",
    version,
    about = "Beat and downbeat tracking as 1D interval detection",
    after_help = "Defaults come from --config FILE, else the file named by \
                  BEATDET_CONFIG, else built-ins; flags override the file."
)]
struct Cli {
    /// JSON run configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for per-track parallelism (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// RNG seed override.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Fit interval-length clusters to annotations and derive level
    /// boundaries.
    FitLevels(FitLevelsArgs),
    /// Build per-anchor training targets for one annotation file.
    Targets(TargetsArgs),
    /// Train the synthetic-audio toy model and write a checkpoint.
    TrainToy(TrainToyArgs),
    /// Decode detections (from audio or saved candidates) into beat files.
    Decode(DecodeArgs),
    /// Histogram neighbor IoU on model predictions and select a threshold.
    AnalyzeIou(AnalyzeIouArgs),
    /// Score predicted beat files against reference annotations.
    Eval(EvalArgs),
    /// Train and score every quality-target × suppression combination.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct FitLevelsArgs {
    /// Beat annotation files to pool interval lengths from.
    #[arg(required = true, value_name = "BEATS")]
    inputs: Vec<PathBuf>,
    /// Number of clusters (pyramid levels).
    #[arg(long)]
    k: Option<usize>,
    /// Write the fit as JSON here (otherwise printed only).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TargetsArgs {
    /// Beat annotation file to build targets for.
    #[arg(value_name = "BEATS")]
    input: PathBuf,
    /// Track duration in seconds (default: last beat + 0.5 s).
    #[arg(long)]
    duration: Option<f64>,
    /// Write the target set as JSON here (otherwise printed to stdout).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainToyArgs {
    /// Where to save the trained model.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Write the per-epoch loss/metric log as CSV here.
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    /// Write held-out test metrics as CSV here.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Epoch count override.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// WAV files (decoded with the model) or candidate JSON files
    /// (suppressed directly).
    #[arg(required = true, value_name = "INPUT")]
    inputs: Vec<PathBuf>,
    /// Trained model checkpoint (required for WAV inputs).
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Directory for the predicted .beats files (default: next to each
    /// input).
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Suppression algorithm: hard, soft-linear, or soft-gaussian.
    #[arg(long, value_name = "KIND")]
    nms: Option<String>,
    /// IoU threshold for suppression/decay.
    #[arg(long, value_name = "T")]
    iou_thresh: Option<f64>,
    /// Final confidence cutoff.
    #[arg(long, value_name = "T")]
    score_thresh: Option<f64>,
    /// Gaussian decay width (soft-gaussian only).
    #[arg(long, value_name = "S")]
    sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct AnalyzeIouArgs {
    /// WAV files to run the model on.
    #[arg(value_name = "WAV")]
    inputs: Vec<PathBuf>,
    /// Use the configured synthetic validation split instead of WAV inputs.
    #[arg(long, conflicts_with = "inputs")]
    synthetic: bool,
    /// Trained model checkpoint.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Write the histogram table here.
    #[arg(long, value_name = "FILE")]
    out_csv: Option<PathBuf>,
    /// Write the small-multiples chart here.
    #[arg(long, value_name = "FILE")]
    out_svg: Option<PathBuf>,
    /// Confidence floor for rows that vote on the threshold.
    #[arg(long, value_name = "C")]
    min_confidence: Option<f64>,
    /// Candidate score floor when collecting detections.
    #[arg(long, value_name = "C")]
    pre_filter: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predicted .beats file or directory of them.
    #[arg(long, value_name = "PATH")]
    est: PathBuf,
    /// Reference .beats file or directory of them.
    #[arg(long = "ref", value_name = "PATH")]
    reference: PathBuf,
    /// Write per-track metrics as CSV here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Grid spec: comma-separated quality targets, `x`, comma-separated
    /// suppression kinds.
    #[arg(long, default_value = "leftness,centerness x nms,soft")]
    cells: String,
    /// Write the comparison table as CSV here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Parses `argv`, dispatches, and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let Cli {
        config,
        jobs,
        seed,
        cmd,
    } = cli;
    let mut cfg = load_config(config.as_deref())?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    let body = move || match cmd {
        Cmd::FitLevels(args) => fit_levels(&cfg, &args),
        Cmd::Targets(args) => targets(&cfg, &args),
        Cmd::TrainToy(args) => train_toy_cmd(cfg, &args),
        Cmd::Decode(args) => decode_cmd(cfg, &args),
        Cmd::AnalyzeIou(args) => analyze_iou(cfg, &args),
        Cmd::Eval(args) => eval_cmd(&cfg, &args),
        Cmd::Ablate(args) => ablate_cmd(&cfg, &args),
    };
    match jobs {
        Some(0) => Err(Error::InvalidConfig("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?
            .install(body),
        None => body(),
    }
}

/// Loads the run configuration: explicit flag first, then the environment
/// variable, then built-in defaults.
fn load_config(flag: Option<&Path>) -> Result<RunConfig> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let cfg: RunConfig = serde_json::from_str(&text)?;
            Ok(cfg)
        }
        None => Ok(RunConfig::default()),
    }
}

fn write_artifact(path: &Path, contents: &str, what: &str) -> Result<()> {
    write_text(path, contents)?;
    println!("wrote {what} to {}", path.display());
    Ok(())
}

/// `F1 / CMLt / AMLt` per class, the layout used by every summary printout.
fn summary_table(report: &MetricReport) -> String {
    fn cell(v: Option<f64>) -> String {
        v.map_or_else(|| "na".into(), |x| format!("{x:.3}"))
    }
    let mut out = String::from("class      F1 / CMLt / AMLt\n");
    for (label, m) in report_rows(report) {
        out.push_str(&format!(
            "{label:<10} {} / {} / {}\n",
            cell(m.f_measure),
            cell(m.cmlt),
            cell(m.amlt)
        ));
    }
    out
}

fn fit_levels(cfg: &RunConfig, args: &FitLevelsArgs) -> Result<()> {
    let mut lengths = Vec::new();
    for path in &args.inputs {
        let seq = parse_beats(path)?;
        let (beat_ivs, down_ivs) = intervals_from_beats(&seq);
        lengths.extend(beat_ivs.iter().chain(&down_ivs).map(|iv| iv.length()));
    }
    let k = args.k.unwrap_or(cfg.train.levels.num_levels);
    let fit = kmeans_1d(&lengths, k, cfg.train.seed)?;
    println!("fitted {k} levels from {} interval lengths", lengths.len());
    println!(
        "centroids:  {}",
        fit.centroids
            .iter()
            .map(|c| format!("{c:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!(
        "boundaries: {}",
        fit.boundaries
            .iter()
            .map(|b| if b.is_infinite() {
                "inf".into()
            } else {
                format!("{b:.3}")
            })
            .collect::<Vec<_>>()
            .join(", ")
    );
    if let Some(out) = &args.out {
        let text = json_artifact(&fit, Some(&cfg.provenance()))?;
        write_artifact(out, &text, "level fit")?;
    }
    Ok(())
}

fn targets(cfg: &RunConfig, args: &TargetsArgs) -> Result<()> {
    let seq = parse_beats(&args.input)?;
    let last = *seq.times().last().ok_or_else(|| {
        Error::InvalidBeats(format!("{} contains no beats", args.input.display()))
    })?;
    let duration = args.duration.unwrap_or(last + 0.5);
    if duration < last {
        return Err(Error::InvalidConfig(format!(
            "--duration {duration} is shorter than the last beat at {last}"
        )));
    }
    let levels = &cfg.train.levels;
    let track_len = (duration * levels.sample_rate as f64).ceil() as usize;
    let grid = AnchorGrid::new(track_len, levels)?;
    let (beat_ivs, down_ivs) = intervals_from_beats(&seq);
    let target_set = assign_targets(&beat_ivs, &down_ivs, &grid, levels)?;
    let text = json_artifact(&target_set, Some(&cfg.provenance()))?;
    match &args.out {
        Some(out) => {
            write_artifact(out, &text, "target set")?;
            println!(
                "{} anchors, {} positive (beat {}, downbeat {})",
                target_set.num_anchors(),
                target_set.num_positive(),
                target_set.num_positive_for(EventClass::Beat),
                target_set.num_positive_for(EventClass::Downbeat),
            );
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn train_toy_cmd(mut cfg: RunConfig, args: &TrainToyArgs) -> Result<()> {
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    let provenance = cfg.provenance();
    let train_specs = cfg.corpus.train_split();
    let val_specs = cfg.corpus.val_split();
    let test_specs = cfg.corpus.test_split();
    println!(
        "training on {} tracks ({} validation, {} test held out)",
        train_specs.len(),
        val_specs.len(),
        test_specs.len()
    );

    let mut heads = ToyHeads::new(
        cfg.train.levels.num_levels,
        cfg.train.levels.base_level,
        cfg.train.seed,
    );
    let outcome = train_toy(&train_specs, &val_specs, &mut heads, &cfg.train)?;
    heads.save(&args.checkpoint)?;
    println!("wrote checkpoint to {}", args.checkpoint.display());
    if let Some(best) = outcome.best_val_joint_f {
        println!("best validation joint F: {best:.3}");
    }
    if let Some(log_path) = &args.log {
        let text = loss_log_csv(&outcome.log, Some(&provenance));
        write_artifact(log_path, &text, "training log")?;
    }

    let test_tracks = prepare_tracks(&test_specs, &cfg.train.levels)?;
    let reports = test_tracks
        .par_iter()
        .map(|track| {
            let est = crate::toy::predict_prepared(track, &heads, &cfg.train.decode)?;
            joint_report(&est, &track.annotation, &cfg.train.eval)
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate_reports(&reports);
    println!("held-out test metrics ({} tracks):", reports.len());
    print!("{}", summary_table(&aggregate));
    if let Some(report_path) = &args.report {
        let text = metrics_csv(&report_rows(&aggregate), Some(&provenance));
        write_artifact(report_path, &text, "test metrics")?;
    }
    Ok(())
}

/// Saved pre-suppression candidates: the JSON form `decode` accepts as an
/// alternative to running the model on audio.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionFile {
    pub beats: Vec<Detection>,
    pub downbeats: Vec<Detection>,
}

fn parse_nms(s: &str) -> Result<NmsKind> {
    match s {
        "hard" | "nms" => Ok(NmsKind::Hard),
        "soft" | "soft-linear" => Ok(NmsKind::SoftLinear),
        "soft-gaussian" => Ok(NmsKind::SoftGaussian),
        other => Err(Error::InvalidConfig(format!(
            "unknown suppression kind {other:?} (expected hard, soft-linear, or soft-gaussian)"
        ))),
    }
}

fn apply_decode_flags(decode: &mut DecodeConfig, args: &DecodeArgs) -> Result<()> {
    if let Some(kind) = &args.nms {
        decode.nms = parse_nms(kind)?;
    }
    if let Some(t) = args.iou_thresh {
        decode.iou_threshold = t;
    }
    if let Some(t) = args.score_thresh {
        decode.score_threshold = t;
    }
    if let Some(s) = args.sigma {
        decode.sigma = s;
    }
    decode.validate()
}

fn decode_cmd(mut cfg: RunConfig, args: &DecodeArgs) -> Result<()> {
    apply_decode_flags(&mut cfg.train.decode, args)?;
    let provenance = cfg.provenance();
    let decode = &cfg.train.decode;
    let levels = &cfg.train.levels;

    // The checkpoint is loaded lazily so candidate-JSON-only runs do not
    // need one.
    let mut heads: Option<ToyHeads> = None;
    for input in &args.inputs {
        let is_json = input
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let seq = if is_json {
            let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
            let file: DetectionFile = serde_json::from_str(&text)?;
            detections_to_beats(
                &suppress(&file.beats, decode),
                &suppress(&file.downbeats, decode),
            )
        } else {
            if heads.is_none() {
                let path = args.checkpoint.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("--checkpoint is required for audio inputs".into())
                })?;
                heads = Some(ToyHeads::load(path)?);
            }
            let audio = read_wav(input)?.resampled(levels.sample_rate)?;
            predict(&audio, heads.as_ref().unwrap(), levels, decode)?
        };

        let out = match &args.out_dir {
            Some(dir) => dir.join(input.with_extension("beats").file_name().unwrap()),
            None => input.with_extension("beats"),
        };
        let body = format!("{}{}", provenance.comment_lines(), beats_to_string(&seq));
        write_text(&out, &body)?;
        let downs = seq.downbeat_times().map_or(0, |d| d.len());
        println!(
            "{} -> {} ({} beats, {} downbeats)",
            input.display(),
            out.display(),
            seq.len(),
            downs
        );
    }
    Ok(())
}

fn analyze_iou(mut cfg: RunConfig, args: &AnalyzeIouArgs) -> Result<()> {
    if let Some(c) = args.min_confidence {
        cfg.min_confidence = c;
    }
    if let Some(p) = args.pre_filter {
        cfg.analysis_pre_filter = p;
    }
    let provenance = cfg.provenance();
    let mut probe = cfg.train.decode;
    probe.pre_filter = cfg.analysis_pre_filter;
    probe.validate()?;
    let levels = &cfg.train.levels;
    let heads = ToyHeads::load(&args.checkpoint)?;

    let audio_tracks: Vec<Vec<f64>> = if args.synthetic {
        cfg.corpus
            .val_split()
            .par_iter()
            .map(|spec| synth_track(spec).map(|(audio, _)| audio))
            .collect::<Result<_>>()?
    } else {
        if args.inputs.is_empty() {
            return Err(Error::InvalidConfig(
                "pass WAV inputs or --synthetic".into(),
            ));
        }
        args.inputs
            .iter()
            .map(|p| read_wav(p)?.resampled(levels.sample_rate))
            .collect::<Result<_>>()?
    };

    let per_track: Vec<[Vec<Detection>; 2]> = audio_tracks
        .par_iter()
        .map(|audio| {
            let pyramid = extract_pyramid(audio, levels)?;
            let preds = heads.forward(&pyramid)?;
            score_and_collect(&preds, pyramid.grid(), &probe)
        })
        .collect::<Result<_>>()?;

    let mut hists = Vec::new();
    for class in EventClass::ALL {
        let lists: Vec<Vec<Detection>> = per_track
            .iter()
            .map(|[beats, downs]| match class {
                EventClass::Beat => beats.clone(),
                EventClass::Downbeat => downs.clone(),
            })
            .collect();
        hists.push(neighbor_iou_histogram(&lists, class, &cfg.histogram)?);
    }

    if let Some(out) = &args.out_csv {
        let refs: Vec<&_> = hists.iter().collect();
        let text = histogram_csv(&refs, Some(&provenance))?;
        write_artifact(out, &text, "IoU histogram table")?;
    }
    if let Some(out) = &args.out_svg {
        let refs: Vec<&_> = hists.iter().collect();
        let text = histogram_svg(&refs, Some(&provenance));
        write_artifact(out, &text, "IoU histogram chart")?;
    }

    for hist in &hists {
        match select_iou_threshold(hist, cfg.min_confidence) {
            Ok(t) => println!("{}: selected IoU threshold {t}", hist.class),
            Err(e) => println!("{}: {e}", hist.class),
        }
    }
    Ok(())
}

/// Pairs prediction files with reference files: directories are matched by
/// file stem, single files are paired directly.
fn collect_pairs(est: &Path, reference: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if est.is_file() && reference.is_file() {
        let stem = est
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "track".into());
        return Ok(vec![(stem, est.to_path_buf(), reference.to_path_buf())]);
    }
    if !(est.is_dir() && reference.is_dir()) {
        return Err(Error::InvalidConfig(
            "--est and --ref must both be files or both be directories".into(),
        ));
    }
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(est).map_err(|e| Error::io(est, e))? {
        let path = entry.map_err(|e| Error::io(est, e))?.path();
        if path.extension().is_some_and(|e| e == "beats") {
            if let Some(stem) = path.file_stem() {
                stems.push((stem.to_string_lossy().into_owned(), path.clone()));
            }
        }
    }
    stems.sort();
    let pairs: Vec<(String, PathBuf, PathBuf)> = stems
        .into_iter()
        .filter_map(|(stem, epath)| {
            let rpath = reference.join(format!("{stem}.beats"));
            rpath.is_file().then_some((stem, epath, rpath))
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidBeats(format!(
            "no .beats files in {} have a same-named reference in {}",
            est.display(),
            reference.display()
        )));
    }
    Ok(pairs)
}

fn eval_cmd(cfg: &RunConfig, args: &EvalArgs) -> Result<()> {
    let pairs = collect_pairs(&args.est, &args.reference)?;
    let scored: Vec<(String, MetricReport)> = pairs
        .par_iter()
        .map(|(stem, est_path, ref_path)| {
            let est = parse_beats(est_path)?;
            let reference = parse_beats(ref_path)?;
            let report = joint_report(&est, &reference, &cfg.train.eval)?;
            Ok((stem.clone(), report))
        })
        .collect::<Result<_>>()?;

    let reports: Vec<MetricReport> = scored.iter().map(|(_, r)| r.clone()).collect();
    let aggregate = aggregate_reports(&reports);
    println!("evaluated {} track(s)", scored.len());
    print!("{}", summary_table(&aggregate));

    if let Some(out) = &args.out {
        let mut csv = cfg.provenance().comment_lines();
        csv.push_str("track,class,f1,cmlc,cmlt,amlc,amlt\n");
        let all_row = ("all".to_string(), aggregate.clone());
        for (stem, report) in scored.iter().chain(std::iter::once(&all_row)) {
            for (label, m) in report_rows(report) {
                csv.push_str(&format!(
                    "{stem},{label},{},{},{},{},{}\n",
                    metric_cell(m.f_measure),
                    metric_cell(m.cmlc),
                    metric_cell(m.cmlt),
                    metric_cell(m.amlc),
                    metric_cell(m.amlt),
                ));
            }
        }
        write_artifact(out, &csv, "per-track metrics")?;
    }
    Ok(())
}

/// Parses a grid spec like `leftness,centerness x nms,soft` into its two
/// axes.
fn parse_cells(spec: &str) -> Result<(Vec<QualityTarget>, Vec<NmsKind>)> {
    let (left, right) = spec.split_once('x').ok_or_else(|| {
        Error::InvalidConfig(format!(
            "cell spec {spec:?} must look like \"leftness,centerness x nms,soft\""
        ))
    })?;
    let mut qualities = Vec::new();
    for name in left.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        qualities.push(match name {
            "leftness" => QualityTarget::Leftness,
            "centerness" => QualityTarget::Centerness,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown quality target {other:?} (expected leftness or centerness)"
                )))
            }
        });
    }
    let mut kinds = Vec::new();
    for name in right.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        kinds.push(parse_nms(name)?);
    }
    if qualities.is_empty() || kinds.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "cell spec {spec:?} has an empty axis"
        )));
    }
    Ok((qualities, kinds))
}

fn quality_name(q: QualityTarget) -> &'static str {
    match q {
        QualityTarget::Leftness => "leftness",
        QualityTarget::Centerness => "centerness",
    }
}

fn nms_name(kind: NmsKind) -> &'static str {
    match kind {
        NmsKind::Hard => "hard",
        NmsKind::SoftLinear => "soft-linear",
        NmsKind::SoftGaussian => "soft-gaussian",
    }
}

fn ablate_cmd(cfg: &RunConfig, args: &AblateArgs) -> Result<()> {
    let (qualities, kinds) = parse_cells(&args.cells)?;
    let train_specs = cfg.corpus.train_split();
    let val_specs = cfg.corpus.val_split();
    let test_specs = cfg.corpus.test_split();
    println!(
        "running {} cell(s): {} quality target(s) x {} suppression kind(s)",
        qualities.len() * kinds.len(),
        qualities.len(),
        kinds.len()
    );
    let cells = run_ablation(
        &train_specs,
        &val_specs,
        &test_specs,
        &cfg.train,
        &kinds,
        &qualities,
    )?;

    let mut csv = String::from(
        "quality,suppression,beat_f1,beat_cmlt,beat_amlt,downbeat_f1,downbeat_cmlt,downbeat_amlt\n",
    );
    for cell in &cells {
        let beat = &cell.report.beat;
        let down = cell.report.downbeat.as_ref();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            quality_name(cell.quality),
            nms_name(cell.nms),
            metric_cell(beat.f_measure),
            metric_cell(beat.cmlt),
            metric_cell(beat.amlt),
            metric_cell(down.and_then(|d| d.f_measure)),
            metric_cell(down.and_then(|d| d.cmlt)),
            metric_cell(down.and_then(|d| d.amlt)),
        ));
    }
    print!("{csv}");
    if let Some(out) = &args.out {
        let body = format!("{}{csv}", cfg.provenance().comment_lines());
        write_artifact(out, &body, "ablation table")?;
    }
    Ok(())
}
