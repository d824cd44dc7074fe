use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use atomic_activity::augmentation::{
    apply_schedule, cutout_sample, hflip_sample, upsample_sample, AugmentedSample, TransformRecord,
};
use atomic_activity::config::PipelineConfig;
use atomic_activity::ensemble::{build_ensemble, combine_with_standard, merge_branches, EnsembleNode, FuseOp, Leaf, LeafLoader, Scores};
use atomic_activity::evaluation::{evaluate, format_report, parse_report_records, report_records, EvalError};
use atomic_activity::io::{self, FileLeafLoader};
use atomic_activity::sampling::plan_sequences;
use atomic_activity::simulation::{generate_scores, generate_truth, SimConfig};
use atomic_activity::taxonomy::{flip_activity, parse_class, ClassList};
use atomic_activity::{rng, Error, Result};

#[derive(Parser)]
#[command(name = "atomic-activity", version, about = "Atomic activity recognition tooling: taxonomy, augmentation, ensembling, evaluation")]
struct Cli {
    /// Pipeline config (TOML); flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Class-list file overriding the canonical class order
    #[arg(long, global = true)]
    class_list: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the 64 classes, the flip table, or validate class names
    Taxonomy {
        /// Print `class -> flipped class` instead of the class list
        #[arg(long)]
        flip_table: bool,
        /// Validate the given class names and exit
        #[arg(long, num_args = 1..)]
        validate: Vec<String>,
    },
    /// Print the frame sampling sequences of a video and mark the middle one
    Plan {
        #[arg(long)]
        frames: usize,
        /// Sequence length (default: first entry of `seq_lens` in the config)
        #[arg(long)]
        len: Option<usize>,
        /// Emit the plan as a JSON record
        #[arg(long)]
        json: bool,
    },
    /// Transform clips and remap their labels
    Augment(AugmentArgs),
    /// Fuse score files described by an ensemble spec or a flat list
    Fuse(FuseArgs),
    /// Merge single- and group-branch scores, optionally blending in a standard model
    MergeBranches {
        #[arg(long)]
        single: PathBuf,
        #[arg(long)]
        group: PathBuf,
        #[arg(long)]
        standard: Option<PathBuf>,
        /// Weight of the merged branches when blending with --standard
        #[arg(long)]
        weight: Option<f64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compute per-class AP, mAP and per-agent mAP
    Eval(EvalArgs),
    /// Generate synthetic truth and noisy prediction files
    Simulate {
        #[arg(long, default_value_t = 500)]
        clips: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.1)]
        prevalence: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        miss_rate: f64,
        /// Number of independent prediction files
        #[arg(long, default_value_t = 1)]
        predictors: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    hflip: bool,
    /// Cutout square side as a fraction of min(height, width)
    #[arg(long)]
    cutout: Option<f64>,
    #[arg(long)]
    upsample: Option<usize>,
    /// Apply the training schedule (random flip and cutout) for --epoch
    #[arg(long, requires = "epoch")]
    schedule: bool,
    #[arg(long)]
    epoch: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FuseArgs {
    /// Ensemble spec (JSON or TOML); leaf paths are relative to its directory
    #[arg(long, conflicts_with_all = ["inputs", "pattern"])]
    spec: Option<PathBuf>,
    /// Score files to fuse in one flat node
    #[arg(long, num_args = 1.., conflicts_with = "pattern")]
    inputs: Vec<PathBuf>,
    /// Path template with {epoch} and/or {seq_len}, expanded over the config lists
    #[arg(long)]
    pattern: Option<String>,
    /// Operator for --inputs / --pattern
    #[arg(long)]
    op: Option<FuseOp>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "render")]
    predictions: Option<PathBuf>,
    #[arg(long, required_unless_present = "render")]
    truth: Option<PathBuf>,
    /// Write the text table here instead of stdout
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the JSON record stream here
    #[arg(long)]
    records: Option<PathBuf>,
    /// Row label in the report
    #[arg(long, default_value = "predictions")]
    method: String,
    /// Render stored report records instead of evaluating
    #[arg(long, conflicts_with_all = ["predictions", "truth"])]
    render: Option<PathBuf>,
}

struct Context {
    config: PipelineConfig,
    classes: ClassList,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if cli.class_list.is_some() {
        config.class_list = cli.class_list.clone();
    }
    let classes = match &config.class_list {
        Some(path) => io::read_class_list(path)?,
        None => ClassList::canonical().clone(),
    };
    let ctx = Context { config, classes };

    match cli.command {
        Command::Taxonomy { flip_table, validate } => cmd_taxonomy(&ctx, flip_table, &validate),
        Command::Plan { frames, len, json } => cmd_plan(&ctx, frames, len, json),
        Command::Augment(args) => cmd_augment(&ctx, args),
        Command::Fuse(args) => cmd_fuse(&ctx, args),
        Command::MergeBranches {
            single,
            group,
            standard,
            weight,
            output,
        } => cmd_merge(&ctx, &single, &group, standard.as_deref(), weight, &output),
        Command::Eval(args) => cmd_eval(&ctx, args),
        Command::Simulate {
            clips,
            seed,
            prevalence,
            noise,
            miss_rate,
            predictors,
            out,
        } => {
            let cfg = SimConfig {
                n_clips: clips,
                prevalence,
                noise_sigma: noise,
                miss_rate,
                seed: seed.unwrap_or(ctx.config.seed),
            };
            cmd_simulate(&ctx, cfg, predictors, &out)
        }
    }
}

fn cmd_taxonomy(ctx: &Context, flip_table: bool, validate: &[String]) -> Result<()> {
    if !validate.is_empty() {
        for name in validate {
            let a = parse_class(name)?;
            println!("ok {a} (index {})", ctx.classes.index_of(a));
        }
        return Ok(());
    }
    let mut out = String::new();
    for (_, a) in ctx.classes.iter() {
        if flip_table {
            let _ = writeln!(out, "{a} -> {}", flip_activity(a));
        } else {
            let _ = writeln!(out, "{a}");
        }
    }
    print!("{out}");
    Ok(())
}

fn cmd_plan(ctx: &Context, frames: usize, len: Option<usize>, json: bool) -> Result<()> {
    let seq_len = len.unwrap_or(ctx.config.seq_lens[0]);
    let plan = plan_sequences(frames, seq_len)?;
    if json {
        #[derive(Serialize)]
        struct PlanRecord<'a> {
            #[serde(flatten)]
            plan: &'a atomic_activity::sampling::SamplingPlan,
            middle_offset: usize,
        }
        let rec = PlanRecord {
            plan: &plan,
            middle_offset: plan.middle_offset(),
        };
        println!("{}", serde_json::to_string(&rec).expect("plan serializes"));
        return Ok(());
    }
    println!("n_frames={} seq_len={} stride={}", plan.n_frames, plan.seq_len, plan.stride);
    for (offset, seq) in plan.sequences.iter().enumerate() {
        let frames: Vec<String> = seq.iter().map(usize::to_string).collect();
        let mark = if offset == plan.middle_offset() { " (middle)" } else { "" };
        println!("offset {offset}{mark}: {}", frames.join(" "));
    }
    Ok(())
}

#[derive(Serialize)]
struct ManifestRecord<'a> {
    clip_id: &'a str,
    seed: u64,
    frames: usize,
    height: usize,
    width: usize,
    applied: &'a [TransformRecord],
}

fn cmd_augment(ctx: &Context, args: AugmentArgs) -> Result<()> {
    let seed = args.seed.unwrap_or(ctx.config.seed);
    let schedule = ctx.config.schedule();
    schedule.validate()?;
    let entries = io::scan_clip_dir(&args.input)?;
    std::fs::create_dir_all(&args.output).map_err(|source| io::IoError::Io {
        path: args.output.clone(),
        source,
    })?;

    let results: Vec<Result<String>> = entries
        .par_iter()
        .map(|entry| -> Result<String> {
            let (clip, format) = io::read_clip(&entry.clip_id, &entry.clip_path)?;
            let (_, labels) = io::read_label_sidecar(&entry.labels_path, &ctx.classes)?;
            let clip_seed = rng::clip_seed(seed, &entry.clip_id);
            let mut sample = AugmentedSample::new(clip, labels)?;
            if args.schedule {
                sample = apply_schedule(&sample, args.epoch.unwrap_or(1), &schedule, clip_seed, &ctx.classes)?;
            } else {
                if args.hflip {
                    sample = hflip_sample(&sample, &ctx.classes);
                }
                if let Some(fraction) = args.cutout {
                    sample = cutout_sample(&sample, fraction, clip_seed)?;
                }
            }
            if let Some(factor) = args.upsample {
                sample = upsample_sample(&sample, factor)?;
            }

            let name = entry.clip_path.file_name().expect("scanned entries have names");
            io::write_clip(&sample.clip, &args.output.join(name), format)?;
            let sidecar = args.output.join(format!("{}{}", entry.clip_id, io::LABEL_SIDECAR_SUFFIX));
            io::write_label_sidecar(&sidecar, &entry.clip_id, sample.labels(), &ctx.classes)?;
            let rec = ManifestRecord {
                clip_id: &entry.clip_id,
                seed: clip_seed,
                frames: sample.clip.frames(),
                height: sample.clip.height(),
                width: sample.clip.width(),
                applied: &sample.applied,
            };
            Ok(serde_json::to_string(&rec).expect("manifest serializes") + "\n")
        })
        .collect();
    let manifest = results.into_iter().collect::<Result<String>>()?;
    io::write_atomic(&args.output.join("manifest.jsonl"), manifest.as_bytes())?;
    eprintln!("augmented {} clip(s) into {}", entries.len(), args.output.display());
    Ok(())
}

fn expand_pattern(pattern: &str, config: &PipelineConfig, op: FuseOp) -> EnsembleNode {
    let by_epoch = |template: String, seq_len: Option<usize>| {
        let leaf = |path: String, epoch: Option<u32>| {
            EnsembleNode::Leaf(Leaf {
                epoch,
                seq_len: seq_len.map(|s| s as u32),
                ..Leaf::new(path)
            })
        };
        if template.contains("{epoch}") {
            let sources = config
                .epochs
                .iter()
                .map(|e| leaf(template.replace("{epoch}", &e.to_string()), Some(*e)))
                .collect();
            EnsembleNode::fuse(op, sources)
        } else {
            leaf(template, None)
        }
    };
    if pattern.contains("{seq_len}") {
        let sources = config
            .seq_lens
            .iter()
            .map(|s| by_epoch(pattern.replace("{seq_len}", &s.to_string()), Some(*s)))
            .collect();
        EnsembleNode::fuse(op, sources)
    } else {
        by_epoch(pattern.to_string(), None)
    }
}

fn cmd_fuse(ctx: &Context, args: FuseArgs) -> Result<()> {
    let op = args.op.unwrap_or(ctx.config.fusion_op);
    let (tree, base) = if let Some(spec) = &args.spec {
        let base = spec.parent().map(Path::to_path_buf).unwrap_or_default();
        (io::read_ensemble_spec(spec)?, base)
    } else if let Some(pattern) = &args.pattern {
        (expand_pattern(pattern, &ctx.config, op), PathBuf::new())
    } else if !args.inputs.is_empty() {
        let sources = args.inputs.iter().map(EnsembleNode::leaf).collect();
        (EnsembleNode::fuse(op, sources), PathBuf::new())
    } else {
        return Err(atomic_activity::ensemble::EnsembleError::Spec("give --spec, --inputs or --pattern".into()).into());
    };
    let loader = FileLeafLoader {
        base,
        classes: &ctx.classes,
    };
    let fused = build_ensemble(&tree, &loader, &ctx.classes)?;
    io::write_score_matrix(&args.output, &fused)?;
    eprintln!(
        "fused {} leaf file(s) over {} clip(s) into {}",
        tree.leaves().len(),
        fused.n_clips(),
        args.output.display()
    );
    Ok(())
}

fn cmd_merge(
    ctx: &Context,
    single: &Path,
    group: &Path,
    standard: Option<&Path>,
    weight: Option<f64>,
    output: &Path,
) -> Result<()> {
    use atomic_activity::ensemble::Branch;
    let loader = FileLeafLoader {
        base: PathBuf::new(),
        classes: &ctx.classes,
    };
    let load_branch = |path: &Path, branch| -> Result<_> {
        let leaf = Leaf {
            branch: Some(branch),
            ..Leaf::new(path)
        };
        match loader.load(&leaf)? {
            Scores::Branch(b) => Ok(b),
            Scores::Full(_) => unreachable!("branch leaves load as branch scores"),
        }
    };
    let merged = merge_branches(
        &load_branch(single, Branch::Single)?,
        &load_branch(group, Branch::Group)?,
        &ctx.classes,
    )?;
    let out = match standard {
        Some(path) => {
            let standard = io::read_score_matrix(path, Default::default())?;
            combine_with_standard(&merged, &standard, weight.unwrap_or(ctx.config.combine_weight))?
        }
        None => merged,
    };
    io::write_score_matrix(output, &out)?;
    Ok(())
}

fn cmd_eval(ctx: &Context, args: EvalArgs) -> Result<()> {
    let (methods, reports) = if let Some(path) = &args.render {
        let text = io::read_text(path)?;
        let records = parse_report_records(&text).map_err(|e| match e {
            EvalError::Record(m) => Error::Io(io::IoError::Parse {
                path: path.clone(),
                line: 0,
                message: m,
            }),
            other => other.into(),
        })?;
        records.into_iter().map(|r| (r.method, r.report)).unzip()
    } else {
        let predictions = io::read_score_matrix(args.predictions.as_deref().expect("required by clap"), Default::default())?;
        let truth = io::read_truth(args.truth.as_deref().expect("required by clap"), &ctx.classes)?;
        let report = evaluate(&predictions, &truth, &ctx.classes)?;
        (vec![args.method.clone()], vec![report])
    };
    let rows: Vec<(&str, &_)> = methods.iter().map(String::as_str).zip(&reports).collect();
    let table = format_report(&rows, &ctx.classes);
    match &args.report {
        Some(path) => io::write_atomic(path, table.as_bytes())?,
        None => print!("{table}"),
    }
    if let Some(path) = &args.records {
        io::write_atomic(path, report_records(&rows).as_bytes())?;
    }
    Ok(())
}

fn cmd_simulate(ctx: &Context, cfg: SimConfig, predictors: usize, out: &Path) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|source| io::IoError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let truth = generate_truth(&cfg)?;
    io::write_truth(&out.join("truth.jsonl"), &truth, &ctx.classes)?;
    for k in 0..predictors {
        let scores = generate_scores(&truth, cfg.noise_sigma, cfg.miss_rate, rng::mix_seed(cfg.seed, k as u64 + 1))?;
        io::write_score_matrix(&out.join(format!("scores_{k:02}.jsonl")), &scores)?;
    }
    eprintln!("wrote truth and {predictors} prediction file(s) for {} clip(s) to {}", cfg.n_clips, out.display());
    Ok(())
}
