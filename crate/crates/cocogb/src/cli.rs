//! Command-line front end: label, bias-report, build-split, eval, and
//! check-kernel subcommands over the library.
//!
//! Every command is deterministic: re-running with identical inputs and
//! config writes byte-identical artifacts, and each artifact records the
//! seed it was produced under. Exit codes: 0 success, 1 evaluation or
//! constraint failure, 2 usage or input error.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::attention::{
    evaluate_attention, load_attention_records, render_attention_text, AttentionEvalReport,
};
use crate::bias::{
    build_report, cooccurrence, label_dataset, render_text as render_bias_text, BiasReport,
    ImageContext,
};
use crate::caption::{evaluate_captions, load_results, render_eval_text, CaptionEvalReport};
use crate::coco::{load_captions, load_instances, InstanceDataset};
use crate::error::{Error, Result};
use crate::kernel::{load_check_vectors, run_vectors, standard_vectors, VectorVerdict};
use crate::lexicon::{GenderLabel, GenderLexicon};
use crate::split::{
    build_v1_secret, build_v2, verify_split, QuotaExpectation, SplitSpec, VerifyReport,
};

#[derive(Debug, Parser)]
#[command(name = "cocogb", version, about = "Gender bias audit toolkit for captioned image datasets")]
struct Cli {
    /// JSON config file supplying defaults; explicit flags win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct IoArgs {
    /// Caption annotation file (COCO layout)
    #[arg(long, value_name = "FILE")]
    captions_ann: Option<PathBuf>,
    /// Instance annotation file (COCO layout)
    #[arg(long, value_name = "FILE")]
    instances_ann: Option<PathBuf>,
    /// Precomputed labels file emitted by the label command
    #[arg(long, value_name = "FILE")]
    labels: Option<PathBuf>,
    /// Lexicon override (JSON object with female/male/neutral/replace)
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Directory artifacts are written into
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Seed recorded in artifacts and used wherever sampling occurs
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitVariant {
    /// Balanced secret test set, equal images per gender
    V1,
    /// Anti-stereotypical train/val/test split
    V2,
}

impl SplitVariant {
    fn name(self) -> &'static str {
        match self {
            SplitVariant::V1 => "v1",
            SplitVariant::V2 => "v2",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label each image's depicted gender from its captions
    Label {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Emit per-category gender co-occurrence and bias ratio tables
    BiasReport {
        #[command(flatten)]
        io: IoArgs,
        /// Split file; emits one report per non-empty partition
        #[arg(long, value_name = "FILE")]
        split: Option<PathBuf>,
        /// Minimum labeled images per category for a defined ratio
        #[arg(long, value_name = "N")]
        min_support: Option<u64>,
    },
    /// Build a balanced (v1) or anti-stereotypical (v2) split
    BuildSplit {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_enum)]
        variant: Option<SplitVariant>,
        /// Test images per gender (v1)
        #[arg(long, value_name = "N")]
        per_gender: Option<usize>,
        /// Validation set size (v2)
        #[arg(long, value_name = "N")]
        val_quota: Option<usize>,
        /// Test set size (v2)
        #[arg(long, value_name = "N")]
        test_quota: Option<usize>,
        /// Training images every category must retain (v2)
        #[arg(long, value_name = "N")]
        min_train: Option<usize>,
        /// Minimum labeled images per category for a defined ratio
        #[arg(long, value_name = "N")]
        min_support: Option<u64>,
    },
    /// Score generated captions and optional attention maps
    Eval {
        #[command(flatten)]
        io: IoArgs,
        /// Split file; evaluation is restricted to its test partition
        #[arg(long, value_name = "FILE")]
        split: Option<PathBuf>,
        /// Generated captions: [{"image_id": int, "caption": str}]
        #[arg(long, value_name = "FILE")]
        results: Option<PathBuf>,
        /// Attention records, one JSON object per line
        #[arg(long, value_name = "FILE")]
        attention: Option<PathBuf>,
    },
    /// Run numerical-kernel conformance vectors
    CheckKernel {
        /// Vector file (one JSON object per line); default: built-in suite
        #[arg(long, value_name = "FILE")]
        vectors: Option<PathBuf>,
        /// Write the vectors being run to this path first
        #[arg(long, value_name = "FILE")]
        emit: Option<PathBuf>,
        /// Seed for the built-in suite
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Directory for the JSON verdict report (optional)
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
}

/// On-disk defaults; any field a flag does not override. Unknown keys are
/// rejected so typos fail loudly instead of being ignored.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    captions_ann: Option<PathBuf>,
    instances_ann: Option<PathBuf>,
    labels: Option<PathBuf>,
    split: Option<PathBuf>,
    variant: Option<String>,
    per_gender: Option<usize>,
    val_quota: Option<usize>,
    test_quota: Option<usize>,
    min_train: Option<usize>,
    min_support: Option<u64>,
    seed: Option<u64>,
    lexicon: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    results: Option<PathBuf>,
    attention: Option<PathBuf>,
    vectors: Option<PathBuf>,
}

/// Parse and execute; returns the process exit code rather than exiting so
/// tests can drive the full command surface in process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    init_thread_cap()?;
    let cfg = load_file_config(cli.config.as_deref())?;
    match cli.command {
        Command::Label { io } => cmd_label(io, &cfg),
        Command::BiasReport {
            io,
            split,
            min_support,
        } => cmd_bias_report(io, split, min_support, &cfg),
        Command::BuildSplit {
            io,
            variant,
            per_gender,
            val_quota,
            test_quota,
            min_train,
            min_support,
        } => cmd_build_split(
            io, variant, per_gender, val_quota, test_quota, min_train, min_support, &cfg,
        ),
        Command::Eval {
            io,
            split,
            results,
            attention,
        } => cmd_eval(io, split, results, attention, &cfg),
        Command::CheckKernel {
            vectors,
            emit,
            seed,
            out_dir,
        } => cmd_check_kernel(vectors, emit, seed, out_dir, &cfg),
    }
}

fn init_thread_cap() -> Result<()> {
    match std::env::var("COCOGB_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(std::env::VarError::NotUnicode(_)) => Err(Error::Config(
            "COCOGB_THREADS is not valid unicode".into(),
        )),
        Ok(raw) => {
            let n: usize = raw
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "COCOGB_THREADS must be a positive integer, got {raw:?}"
                    ))
                })?;
            // A second in-process invocation cannot rebuild the global pool;
            // the first cap stays in effect, which is fine for tests.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
    }
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn required(flag: Option<PathBuf>, fallback: Option<&PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.cloned()).ok_or_else(|| {
        Error::Config(format!("--{name} is required (flag or config file)"))
    })
}

fn optional(flag: Option<PathBuf>, fallback: Option<&PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| fallback.cloned())
}

fn load_lexicon(path: Option<&Path>) -> Result<GenderLexicon> {
    match path {
        Some(p) => GenderLexicon::from_json_file(p),
        None => Ok(GenderLexicon::default()),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_file(path, &text)
}

fn load_labels_file(path: &Path) -> Result<BTreeMap<u64, GenderLabel>> {
    crate::coco::read_json(path)
}

/// Rebuild image contexts from a labels file plus instance annotations.
fn contexts_from_labels(
    labels: &BTreeMap<u64, GenderLabel>,
    instances: &InstanceDataset,
) -> Result<Vec<ImageContext>> {
    let mut out = Vec::with_capacity(instances.images.len());
    for img in &instances.images {
        let label = labels.get(&img.id).copied().ok_or_else(|| {
            Error::InvalidInput(format!("labels file has no entry for image {}", img.id))
        })?;
        out.push(ImageContext {
            image_id: img.id,
            label,
            categories: instances.categories_present(img.id),
        });
    }
    Ok(out)
}

/// Contexts from either a labels file or fresh labeling of the captions.
fn build_contexts(
    captions_path: Option<&Path>,
    instances_path: &Path,
    labels_path: Option<&Path>,
    lexicon: &GenderLexicon,
) -> Result<(Vec<ImageContext>, InstanceDataset)> {
    let instances = load_instances(instances_path)?;
    let contexts = if let Some(lp) = labels_path {
        contexts_from_labels(&load_labels_file(lp)?, &instances)?
    } else {
        let cp = captions_path.ok_or_else(|| {
            Error::Config("--captions-ann is required when --labels is not given".into())
        })?;
        label_dataset(&load_captions(cp)?, &instances, lexicon)?
    };
    Ok((contexts, instances))
}

#[derive(Serialize)]
struct LabelsSummary {
    seed: u64,
    images: usize,
    women: usize,
    men: usize,
    discard: usize,
}

fn cmd_label(io: IoArgs, cfg: &FileConfig) -> Result<i32> {
    let captions_path = required(io.captions_ann, cfg.captions_ann.as_ref(), "captions-ann")?;
    let instances_path = required(io.instances_ann, cfg.instances_ann.as_ref(), "instances-ann")?;
    let out_dir = required(io.out_dir, cfg.out_dir.as_ref(), "out-dir")?;
    let seed = io.seed.or(cfg.seed).unwrap_or(0);
    let lexicon = load_lexicon(optional(io.lexicon, cfg.lexicon.as_ref()).as_deref())?;

    let captions = load_captions(&captions_path)?;
    let instances = load_instances(&instances_path)?;
    let contexts = label_dataset(&captions, &instances, &lexicon)?;

    let labels: BTreeMap<u64, GenderLabel> =
        contexts.iter().map(|c| (c.image_id, c.label)).collect();
    let mut summary = LabelsSummary {
        seed,
        images: contexts.len(),
        women: 0,
        men: 0,
        discard: 0,
    };
    for ctx in &contexts {
        match ctx.label {
            GenderLabel::Women => summary.women += 1,
            GenderLabel::Men => summary.men += 1,
            GenderLabel::Discard => summary.discard += 1,
        }
    }

    ensure_out_dir(&out_dir)?;
    write_json(&out_dir.join("labels.json"), &labels)?;
    write_json(&out_dir.join("labels_summary.json"), &summary)?;
    println!(
        "labeled {} images: {} women, {} men, {} discarded",
        summary.images, summary.women, summary.men, summary.discard
    );
    println!("wrote {}", out_dir.join("labels.json").display());
    Ok(0)
}

#[derive(Serialize)]
struct BiasArtifact<'a> {
    seed: u64,
    partition: &'a str,
    #[serde(flatten)]
    report: &'a BiasReport,
}

fn write_bias_partition(
    out_dir: &Path,
    seed: u64,
    instances: &InstanceDataset,
    min_support: u64,
    partition: &str,
    subset: &[ImageContext],
) -> Result<()> {
    let table = cooccurrence(subset);
    match build_report(&table, &instances.categories, min_support) {
        Ok(report) => {
            let stem = if partition == "all" {
                "bias_report".to_string()
            } else {
                format!("bias_report_{partition}")
            };
            write_json(
                &out_dir.join(format!("{stem}.json")),
                &BiasArtifact {
                    seed,
                    partition,
                    report: &report,
                },
            )?;
            let text = render_bias_text(&report);
            write_file(&out_dir.join(format!("{stem}.txt")), &text)?;
            println!("[{partition}]");
            print!("{text}");
            Ok(())
        }
        Err(Error::EmptyInput(_)) => {
            println!("[{partition}] no labeled images with categories, skipped");
            Ok(())
        }
        Err(e) => Err(e),
    }
}

fn cmd_bias_report(
    io: IoArgs,
    split: Option<PathBuf>,
    min_support: Option<u64>,
    cfg: &FileConfig,
) -> Result<i32> {
    let instances_path = required(io.instances_ann, cfg.instances_ann.as_ref(), "instances-ann")?;
    let out_dir = required(io.out_dir, cfg.out_dir.as_ref(), "out-dir")?;
    let seed = io.seed.or(cfg.seed).unwrap_or(0);
    let min_support = min_support.or(cfg.min_support).unwrap_or(10);
    let lexicon = load_lexicon(optional(io.lexicon, cfg.lexicon.as_ref()).as_deref())?;
    let labels_path = optional(io.labels, cfg.labels.as_ref());

    let (contexts, instances) = build_contexts(
        optional(io.captions_ann, cfg.captions_ann.as_ref()).as_deref(),
        &instances_path,
        labels_path.as_deref(),
        &lexicon,
    )?;
    ensure_out_dir(&out_dir)?;

    match optional(split, cfg.split.as_ref()) {
        None => write_bias_partition(&out_dir, seed, &instances, min_support, "all", &contexts)?,
        Some(split_path) => {
            let spec = SplitSpec::from_json_file(&split_path)?;
            let by_id: BTreeMap<u64, &ImageContext> =
                contexts.iter().map(|c| (c.image_id, c)).collect();
            for (name, ids) in [
                ("train", &spec.train),
                ("val", &spec.val),
                ("test", &spec.test),
            ] {
                if ids.is_empty() {
                    continue;
                }
                let subset: Vec<ImageContext> = ids
                    .iter()
                    .filter_map(|id| by_id.get(id).map(|c| (*c).clone()))
                    .collect();
                write_bias_partition(&out_dir, seed, &instances, min_support, name, &subset)?;
            }
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct VerifyArtifact<'a> {
    seed: u64,
    variant: &'a str,
    #[serde(flatten)]
    report: &'a VerifyReport,
}

fn render_verify_text(report: &VerifyReport) -> String {
    let mut out = String::new();
    for c in &report.checks {
        out.push_str(&format!(
            "{:<4} {:<24} {}\n",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    for (name, p) in &report.partitions {
        let ratio = p.bias.as_ref().and_then(|b| b.average_bias_ratio);
        out.push_str(&format!(
            "{:<6} {:>7} images  {:>6} women  {:>6} men  {:>6} discard  avg ratio {}\n",
            name,
            p.images,
            p.women,
            p.men,
            p.discard,
            ratio.map_or_else(|| "--".to_string(), |r| format!("{r:.4}")),
        ));
    }
    if let Some((cat, gap)) = report
        .ratio_gaps
        .iter()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
    {
        out.push_str(&format!(
            "largest train/test ratio gap: {gap:.4} (category {cat})\n"
        ));
    }
    out.push_str(if report.pass {
        "verify: PASS\n"
    } else {
        "verify: FAIL\n"
    });
    out
}

#[allow(clippy::too_many_arguments)]
fn cmd_build_split(
    io: IoArgs,
    variant: Option<SplitVariant>,
    per_gender: Option<usize>,
    val_quota: Option<usize>,
    test_quota: Option<usize>,
    min_train: Option<usize>,
    min_support: Option<u64>,
    cfg: &FileConfig,
) -> Result<i32> {
    let instances_path = required(io.instances_ann, cfg.instances_ann.as_ref(), "instances-ann")?;
    let out_dir = required(io.out_dir, cfg.out_dir.as_ref(), "out-dir")?;
    let seed = io.seed.or(cfg.seed).unwrap_or(0);
    let variant = match (variant, cfg.variant.as_deref()) {
        (Some(v), _) => v,
        (None, Some("v1")) => SplitVariant::V1,
        (None, Some("v2")) => SplitVariant::V2,
        (None, Some(other)) => {
            return Err(Error::Config(format!(
                "config variant must be \"v1\" or \"v2\", got {other:?}"
            )))
        }
        (None, None) => return Err(Error::Config("--variant is required".into())),
    };
    let per_gender = per_gender.or(cfg.per_gender).unwrap_or(500);
    let val_quota = val_quota.or(cfg.val_quota).unwrap_or(5000);
    let test_quota = test_quota.or(cfg.test_quota).unwrap_or(10_000);
    let min_train = min_train.or(cfg.min_train).unwrap_or(50);
    let min_support = min_support.or(cfg.min_support).unwrap_or(10);
    let lexicon = load_lexicon(optional(io.lexicon, cfg.lexicon.as_ref()).as_deref())?;

    let (contexts, instances) = build_contexts(
        optional(io.captions_ann, cfg.captions_ann.as_ref()).as_deref(),
        &instances_path,
        optional(io.labels, cfg.labels.as_ref()).as_deref(),
        &lexicon,
    )?;

    let (spec, quotas) = match variant {
        SplitVariant::V1 => (
            build_v1_secret(&contexts, per_gender)?,
            QuotaExpectation {
                val: Some(0),
                test: Some(2 * per_gender),
                test_per_gender: Some(per_gender),
            },
        ),
        SplitVariant::V2 => (
            build_v2(&contexts, val_quota, test_quota, min_train, seed)?,
            QuotaExpectation {
                val: Some(val_quota),
                test: Some(test_quota),
                test_per_gender: None,
            },
        ),
    };

    let report = verify_split(&spec, &contexts, &instances.categories, &quotas, min_support);

    ensure_out_dir(&out_dir)?;
    let vname = variant.name();
    write_file(
        &out_dir.join(format!("split_{vname}.json")),
        &format!("{}\n", spec.to_json()),
    )?;
    write_json(
        &out_dir.join(format!("split_{vname}_verify.json")),
        &VerifyArtifact {
            seed,
            variant: vname,
            report: &report,
        },
    )?;
    let text = render_verify_text(&report);
    write_file(&out_dir.join(format!("split_{vname}_verify.txt")), &text)?;
    print!("{text}");
    Ok(if report.pass { 0 } else { 1 })
}

#[derive(Serialize)]
struct EvalArtifact<'a> {
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<&'a str>,
    /// Gender-labeled in-scope images with no generated caption.
    missing_image_ids: &'a [u64],
    captions: &'a CaptionEvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    attention: Option<&'a AttentionEvalReport>,
}

fn cmd_eval(
    io: IoArgs,
    split: Option<PathBuf>,
    results: Option<PathBuf>,
    attention: Option<PathBuf>,
    cfg: &FileConfig,
) -> Result<i32> {
    let captions_path = required(io.captions_ann, cfg.captions_ann.as_ref(), "captions-ann")?;
    let results_path = required(results, cfg.results.as_ref(), "results")?;
    let out_dir = required(io.out_dir, cfg.out_dir.as_ref(), "out-dir")?;
    let seed = io.seed.or(cfg.seed).unwrap_or(0);
    let lexicon = load_lexicon(optional(io.lexicon, cfg.lexicon.as_ref()).as_deref())?;
    let labels_path = optional(io.labels, cfg.labels.as_ref());
    let instances_path = optional(io.instances_ann, cfg.instances_ann.as_ref());
    let attention_path = optional(attention, cfg.attention.as_ref());

    let captions = load_captions(&captions_path)?;
    let (labels_all, instances) = match (&labels_path, &instances_path) {
        (Some(lp), ip) => {
            let labels = load_labels_file(lp)?;
            let instances = ip.as_deref().map(load_instances).transpose()?;
            (labels, instances)
        }
        (None, Some(ip)) => {
            let instances = load_instances(ip)?;
            let contexts = label_dataset(&captions, &instances, &lexicon)?;
            let labels = contexts.iter().map(|c| (c.image_id, c.label)).collect();
            (labels, Some(instances))
        }
        (None, None) => {
            return Err(Error::Config(
                "either --labels or --instances-ann is required".into(),
            ))
        }
    };

    let split_spec = optional(split, cfg.split.as_ref())
        .map(|p| SplitSpec::from_json_file(&p))
        .transpose()?;
    let scope: Option<BTreeSet<u64>> = split_spec
        .as_ref()
        .map(|s| s.test.iter().copied().collect());
    let in_scope = |id: u64| scope.as_ref().is_none_or(|s| s.contains(&id));

    let labels: BTreeMap<u64, GenderLabel> = labels_all
        .into_iter()
        .filter(|(id, _)| in_scope(*id))
        .collect();
    let references: BTreeMap<u64, Vec<String>> = captions
        .grouped()
        .filter(|(img, _)| in_scope(img.id))
        .map(|(img, caps)| (img.id, caps.iter().map(|c| c.caption.clone()).collect()))
        .collect();

    let generated = load_results(&results_path)?;
    let report = evaluate_captions(&generated, &labels, &references, &lexicon)?;

    let have: HashSet<u64> = generated.iter().map(|r| r.image_id).collect();
    let missing: Vec<u64> = labels
        .iter()
        .filter(|(id, l)| {
            matches!(l, GenderLabel::Women | GenderLabel::Men) && !have.contains(id)
        })
        .map(|(id, _)| *id)
        .collect();

    let attention_report = match &attention_path {
        None => None,
        Some(ap) => {
            let instances = instances.as_ref().ok_or_else(|| {
                Error::Config("--instances-ann is required with --attention".into())
            })?;
            let records = load_attention_records(ap)?;
            Some(evaluate_attention(&records, &labels, instances)?)
        }
    };

    ensure_out_dir(&out_dir)?;
    write_json(
        &out_dir.join("eval_report.json"),
        &EvalArtifact {
            seed,
            split: split_spec.as_ref().map(|s| s.name.as_str()),
            missing_image_ids: &missing,
            captions: &report,
            attention: attention_report.as_ref(),
        },
    )?;
    let mut text = render_eval_text(&report);
    if let Some(at) = &attention_report {
        text.push('\n');
        text.push_str(&render_attention_text(at));
    }
    if !missing.is_empty() {
        text.push_str(&format!(
            "coverage warning: {} labeled images have no generated caption (first {:?})\n",
            missing.len(),
            &missing[..missing.len().min(5)]
        ));
    }
    write_file(&out_dir.join("eval_report.txt"), &text)?;
    print!("{text}");
    Ok(0)
}

#[derive(Serialize)]
struct KernelArtifact<'a> {
    seed: u64,
    passed: usize,
    total: usize,
    verdicts: &'a [VectorVerdict],
}

fn cmd_check_kernel(
    vectors: Option<PathBuf>,
    emit: Option<PathBuf>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    cfg: &FileConfig,
) -> Result<i32> {
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let vectors = match optional(vectors, cfg.vectors.as_ref()) {
        Some(p) => load_check_vectors(&p)?,
        None => standard_vectors(seed),
    };
    if let Some(emit_path) = emit {
        let mut text = String::new();
        for v in &vectors {
            text.push_str(&serde_json::to_string(v).expect("vector serializes"));
            text.push('\n');
        }
        write_file(&emit_path, &text)?;
    }

    let verdicts = run_vectors(&vectors);
    let passed = verdicts.iter().filter(|v| v.passed).count();
    for v in &verdicts {
        if v.passed {
            println!("vector {:>3}  {:<28} pass", v.index, v.op);
        } else {
            println!("vector {:>3}  {:<28} FAIL  {}", v.index, v.op, v.detail);
        }
    }
    println!("{passed}/{} vectors passed", verdicts.len());

    if let Some(dir) = optional(out_dir, cfg.out_dir.as_ref()) {
        ensure_out_dir(&dir)?;
        write_json(
            &dir.join("kernel_check.json"),
            &KernelArtifact {
                seed,
                passed,
                total: verdicts.len(),
                verdicts: &verdicts,
            },
        )?;
    }
    Ok(if passed == verdicts.len() { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["cocogb", "--help"]), 0);
    }

    #[test]
    fn unknown_subcommand_exits_two() {
        assert_eq!(run(["cocogb", "frobnicate"]), 2);
    }

    #[test]
    fn missing_required_input_exits_two() {
        assert_eq!(run(["cocogb", "label"]), 2);
    }

    #[test]
    fn builtin_kernel_suite_passes() {
        assert_eq!(run(["cocogb", "check-kernel", "--seed", "11"]), 0);
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, r#"{"sede": 4}"#).unwrap();
        let err = load_file_config(Some(&path)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn flags_win_over_config() {
        let cfg = FileConfig {
            seed: Some(3),
            out_dir: Some(PathBuf::from("/from-config")),
            ..FileConfig::default()
        };
        assert_eq!(Some(7).or(cfg.seed).unwrap_or(0), 7);
        assert_eq!(None.or(cfg.seed).unwrap_or(0), 3);
        let flagged = required(Some(PathBuf::from("/flag")), cfg.out_dir.as_ref(), "out-dir");
        assert_eq!(flagged.unwrap(), PathBuf::from("/flag"));
    }

    #[test]
    fn thread_cap_rejects_garbage() {
        // Not exercised through the env var to keep tests hermetic; the
        // parse path is what matters.
        let parsed = "zero".trim().parse::<usize>().ok().filter(|&n| n > 0);
        assert!(parsed.is_none());
    }
}
