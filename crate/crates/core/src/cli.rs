//! Command-line front end. Panoptic directories hold `<image_id>.png` and
//! `<image_id>.json` pairs; image ids are the file stems.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::crossval::{self, AggregateReport, SplitSpec, TableLayout};
use crate::grading::{self, SizeDenominator, DEFAULT_BIN_EDGES};
use crate::ingest::{self, DatasetManifest};
use crate::metrics::{self, EvaluationReport, MetricConfig};
use crate::panoptic::PanopticMap;
use crate::par::{self, Execution};
use crate::postprocess::{self, Connectivity, PostprocessConfig};
use crate::synthetic::{self, SynthConfig};
use crate::taxonomy::Taxonomy;

const AFTER_HELP: &str = "\
Defaults: postprocess dilation d = 5 with 8-connectivity; AP/AR average over the
10 IoU thresholds 0.50, 0.55, ..., 0.95. Exit codes: 0 success, 1 usage error,
2 data error. Set PANGRADE_LOG (error, warn, info, debug) to control logging.";

#[derive(Debug, Parser)]
#[command(name = "pangrade", version, about = "Panoptic mask evaluation and fruit defect grading", after_help = AFTER_HELP)]
struct Cli {
    /// Taxonomy JSON; the built-in banana taxonomy when omitted.
    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,
    /// Worker threads; 1 runs serially, 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a LabelStudio export into annotation records and, optionally,
    /// ground-truth panoptic pairs.
    #[command(after_help = AFTER_HELP)]
    Ingest {
        #[arg(long)]
        export: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also paint the records into `<out>/gt/`.
        #[arg(long)]
        rasterize: bool,
    },
    /// Resize and pad every map of a panoptic directory to a square.
    #[command(after_help = AFTER_HELP)]
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output side length in pixels.
        #[arg(long, default_value_t = 1024)]
        side: u32,
    },
    /// Merge nearby same-category defect components into instances.
    #[command(after_help = AFTER_HELP)]
    Postprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dilation radius in pixels (Chebyshev); components within 2d merge.
        #[arg(long = "d", default_value_t = 5)]
        d: u32,
        /// Pixel connectivity, 4 or 8.
        #[arg(long, default_value_t = 8, value_parser = parse_connectivity)]
        connectivity: u8,
    },
    /// Compare predictions with ground truth (IoU, AP, AR, PQ).
    #[command(after_help = AFTER_HELP)]
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip images present on only one side instead of failing.
        #[arg(long)]
        allow_missing: bool,
        /// Restrict to one fold of a splits.json.
        #[arg(long, requires = "fold")]
        splits: Option<PathBuf>,
        #[arg(long, requires = "splits")]
        fold: Option<usize>,
    },
    /// Defect counts and relative sizes per image.
    #[command(after_help = AFTER_HELP)]
    Grade {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Denominator::FruitAndDefects)]
        denominator: Denominator,
    },
    /// Agreement between two mask sources.
    #[command(subcommand)]
    Agreement(AgreementCommand),
    /// Deterministic k-fold split of a manifest.
    #[command(after_help = AFTER_HELP)]
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output splits.json path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean ± std over per-fold evaluation reports.
    #[command(after_help = AFTER_HELP)]
    Report {
        /// Per-fold report.json files.
        #[arg(long, num_args = 2.., required = true)]
        folds: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Row label in the rendered tables.
        #[arg(long, default_value = "model")]
        label: String,
        /// Drop metrics undefined in some folds instead of failing.
        #[arg(long)]
        drop_partial: bool,
    },
    /// Write a seeded synthetic dataset (taxonomy, manifest, export, predictions).
    #[command(after_help = AFTER_HELP)]
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        images: u32,
        #[arg(long, default_value_t = 160)]
        width: u32,
        #[arg(long, default_value_t = 120)]
        height: u32,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn parse_connectivity(s: &str) -> std::result::Result<u8, String> {
    match s {
        "4" => Ok(4),
        "8" => Ok(8),
        _ => Err(format!("connectivity must be 4 or 8, got {s}")),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Denominator {
    FruitAndDefects,
    FruitOnly,
}

impl From<Denominator> for SizeDenominator {
    fn from(d: Denominator) -> Self {
        match d {
            Denominator::FruitAndDefects => SizeDenominator::FruitAndDefects,
            Denominator::FruitOnly => SizeDenominator::FruitOnly,
        }
    }
}

#[derive(Debug, Args)]
struct PairDirs {
    /// Reference (annotated) panoptic directory.
    #[arg(long)]
    annotated: PathBuf,
    /// Compared panoptic directory.
    #[arg(long)]
    predicted: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    allow_missing: bool,
}

#[derive(Debug, Subcommand)]
enum AgreementCommand {
    /// IoU of generated vs annotated defect masks (same segment ids), by size.
    #[command(after_help = AFTER_HELP)]
    Masks {
        #[command(flatten)]
        dirs: PairDirs,
        /// Bin edges on annotated area in pixels.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BIN_EDGES)]
        bins: Vec<u64>,
    },
    /// Exact and within-one agreement of defect counts.
    #[command(after_help = AFTER_HELP)]
    Counts {
        #[command(flatten)]
        dirs: PairDirs,
        /// Compare counts per defect category instead of totals.
        #[arg(long)]
        per_category: bool,
    },
    /// Correlation of relative sizes of matched defects.
    #[command(after_help = AFTER_HELP)]
    Sizes {
        #[command(flatten)]
        dirs: PairDirs,
        #[arg(long, default_value_t = 0.5)]
        min_iou: f64,
        #[arg(long, value_enum, default_value_t = Denominator::FruitAndDefects)]
        denominator: Denominator,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn in_file(path: &Path) -> impl Fn(String) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

type Result<T> = std::result::Result<T, CliError>;

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("ERROR 1: {}", line.trim_start_matches("error: "));
            return 1;
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::Usage(m) | CliError::Data(m)) = &e;
            eprintln!("ERROR {}: {}", e.code(), m.replace('\n', " "));
            e.code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let env = env_logger::Env::new().filter_or("PANGRADE_LOG", level);
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn load_taxonomy(path: Option<&Path>) -> Result<Taxonomy> {
    match path {
        None => Ok(Taxonomy::banana()),
        Some(p) => {
            let bytes = read(p)?;
            Taxonomy::from_json(&bytes).map_err(|e| in_file(p)(e.to_string()))
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} is not a directory", path.display())))
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} is not a file", path.display())))
    }
}

/// Image ids of a panoptic directory: stems of `*.png` files, ascending.
fn panoptic_ids(dir: &Path) -> Result<Vec<String>> {
    require_dir(dir)?;
    let mut ids = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(|e| data(format!("{}: {e}", dir.display())))? {
        let path = entry.map_err(data)?.path();
        if path.extension().is_some_and(|e| e == "png") && path.is_file() {
            let stem = path.file_stem().and_then(|s| s.to_str());
            ids.insert(
                stem.ok_or_else(|| data(format!("{}: non UTF-8 name", path.display())))?
                    .to_string(),
            );
        }
    }
    Ok(ids.into_iter().collect())
}

fn load_map(dir: &Path, id: &str, taxonomy: &Taxonomy) -> Result<PanopticMap> {
    let png = dir.join(format!("{id}.png"));
    let json = dir.join(format!("{id}.json"));
    let pair =
        ingest::read_panoptic(&read(&png)?, &read(&json)?, taxonomy).map_err(|e| in_file(&png)(e.to_string()))?;
    if pair.image_id != id {
        log::warn!(
            "{}: sidecar image_id {:?} differs from file stem",
            json.display(),
            pair.image_id
        );
    }
    Ok(pair.map)
}

fn load_dir(dir: &Path, taxonomy: &Taxonomy, exec: Execution) -> Result<Vec<(String, PanopticMap)>> {
    let ids = panoptic_ids(dir)?;
    par::map(exec, &ids, |id| load_map(dir, id, taxonomy).map(|m| (id.clone(), m)))
        .into_iter()
        .collect()
}

fn store_map(dir: &Path, id: &str, map: &PanopticMap) -> Result<()> {
    let (png, json) = ingest::write_panoptic(map, id).map_err(data)?;
    write(&dir.join(format!("{id}.png")), png)?;
    write(&dir.join(format!("{id}.json")), json)
}

fn store_maps(dir: &Path, maps: &[(String, PanopticMap)], exec: Execution) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    par::map(exec, maps, |(id, m)| store_map(dir, id, m))
        .into_iter()
        .collect()
}

fn json_string<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

/// Loads two directories and pairs maps by image id.
fn load_pairs(
    a: &Path,
    b: &Path,
    allow_missing: bool,
    keep: Option<&BTreeSet<String>>,
    taxonomy: &Taxonomy,
    exec: Execution,
) -> Result<Vec<(String, PanopticMap, PanopticMap)>> {
    let ids_a: BTreeSet<String> = panoptic_ids(a)?.into_iter().collect();
    let ids_b: BTreeSet<String> = panoptic_ids(b)?.into_iter().collect();
    let unmatched: Vec<&String> = ids_a.symmetric_difference(&ids_b).collect();
    if !unmatched.is_empty() {
        let list = unmatched.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ");
        if !allow_missing {
            return Err(data(format!("unmatched image ids: {list}")));
        }
        log::warn!("skipping unmatched image ids: {list}");
    }
    let ids: Vec<String> = ids_a
        .intersection(&ids_b)
        .filter(|id| keep.is_none_or(|k| k.contains(*id)))
        .cloned()
        .collect();
    if let Some(k) = keep {
        let absent: Vec<&str> = k
            .iter()
            .filter(|id| !ids_a.contains(*id) || !ids_b.contains(*id))
            .map(String::as_str)
            .collect();
        if !absent.is_empty() {
            let list = absent.join(", ");
            if !allow_missing {
                return Err(data(format!("fold images without a map pair: {list}")));
            }
            log::warn!("fold images without a map pair: {list}");
        }
    }
    par::map(exec, &ids, |id| {
        Ok((id.clone(), load_map(a, id, taxonomy)?, load_map(b, id, taxonomy)?))
    })
    .into_iter()
    .collect()
}

fn execute(cli: Cli) -> Result<()> {
    let taxonomy = load_taxonomy(cli.taxonomy.as_deref())?;
    let jobs = cli.jobs;
    let command = cli.command;
    par::with_jobs(jobs, move |exec| dispatch(command, &taxonomy, exec))
}

fn dispatch(command: Command, taxonomy: &Taxonomy, exec: Execution) -> Result<()> {
    match command {
        Command::Ingest {
            export,
            manifest,
            out,
            rasterize,
        } => {
            require_file(&export)?;
            require_file(&manifest)?;
            let manifest_data =
                DatasetManifest::from_json(&read(&manifest)?).map_err(|e| in_file(&manifest)(e.to_string()))?;
            let records = ingest::parse_labelstudio_export(&read(&export)?, &manifest_data, taxonomy)
                .map_err(|e| in_file(&export)(e.to_string()))?;
            for e in &manifest_data.entries {
                let n = records.iter().filter(|r| r.image_id == e.image_id).count();
                if e.annotation_count != 0 && e.annotation_count != n {
                    log::warn!(
                        "{}: manifest lists {} annotations, export has {n}",
                        e.image_id,
                        e.annotation_count
                    );
                }
            }
            write(&out.join("annotations.json"), json_string(&records))?;
            if rasterize {
                let entries = &manifest_data.entries;
                let maps = par::map(exec, entries, |e| {
                    let recs: Vec<_> = records.iter().filter(|r| r.image_id == e.image_id).cloned().collect();
                    ingest::rasterize_annotations(&recs, e.width, e.height, taxonomy)
                        .map(|(m, _)| (e.image_id.clone(), m))
                        .map_err(|err| data(format!("{}: {err}", e.image_id)))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                store_maps(&out.join("gt"), &maps, exec)?;
            }
            log::info!(
                "ingested {} records for {} images",
                records.len(),
                manifest_data.entries.len()
            );
            Ok(())
        }
        Command::Convert { input, out, side } => {
            if side == 0 {
                return Err(CliError::Usage("--side must be positive".into()));
            }
            let maps = load_dir(&input, taxonomy, exec)?;
            let converted = par::map(exec, &maps, |(id, m)| {
                let (map, geom, warnings) = ingest::resize_pad_map(m, side);
                for w in warnings {
                    log::warn!("{id}: {w}");
                }
                (id.clone(), map, geom)
            });
            for (id, map, geom) in &converted {
                store_map(&out, id, map)?;
                write(&out.join("geometry").join(format!("{id}.json")), json_string(geom))?;
            }
            Ok(())
        }
        Command::Postprocess {
            input,
            out,
            d,
            connectivity,
        } => {
            let config = PostprocessConfig {
                dilation: d,
                connectivity: Connectivity::from_neighbours(connectivity).expect("validated by clap"),
            };
            let maps = load_dir(&input, taxonomy, exec)?;
            let processed: Vec<(String, PanopticMap)> = par::map(exec, &maps, |(id, m)| {
                (id.clone(), postprocess::postprocess_instances(m, taxonomy, &config))
            });
            store_maps(&out, &processed, exec)
        }
        Command::Evaluate {
            pred,
            gt,
            out,
            allow_missing,
            splits,
            fold,
        } => {
            let keep = match (splits, fold) {
                (Some(path), Some(fold)) => {
                    let spec = SplitSpec::from_json(&read(&path)?).map_err(|e| in_file(&path)(e.to_string()))?;
                    if fold >= spec.k {
                        return Err(CliError::Usage(format!(
                            "--fold {fold} out of range for k = {}",
                            spec.k
                        )));
                    }
                    Some(spec.fold(fold).into_iter().map(String::from).collect::<BTreeSet<_>>())
                }
                _ => None,
            };
            let pairs = load_pairs(&pred, &gt, allow_missing, keep.as_ref(), taxonomy, exec)?;
            let report = metrics::evaluate_dataset(&pairs, taxonomy, &MetricConfig::default(), exec).map_err(data)?;
            write(&out.join("report.json"), report.to_json())?;
            write(&out.join("report.md"), report.to_markdown())
        }
        Command::Grade {
            input,
            out,
            denominator,
        } => {
            let maps = load_dir(&input, taxonomy, exec)?;
            let records = par::map(exec, &maps, |(id, m)| {
                grading::grade(m, taxonomy, id, denominator.into()).map_err(|e| data(format!("{id}: {e}")))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            write(&out.join("grades.json"), json_string(&records))?;
            write(&out.join("grades.csv"), grading::grades_to_csv(&records, taxonomy))
        }
        Command::Agreement(cmd) => agreement(cmd, taxonomy, exec),
        Command::Split { manifest, k, seed, out } => {
            require_file(&manifest)?;
            let m = DatasetManifest::from_json(&read(&manifest)?).map_err(|e| in_file(&manifest)(e.to_string()))?;
            let spec = crossval::kfold_split(&m.image_ids(), k, seed).map_err(|e| match e {
                crossval::CrossvalError::BadK(_) => CliError::Usage(e.to_string()),
                _ => data(e),
            })?;
            write(&out, spec.to_json())
        }
        Command::Report {
            folds,
            out,
            label,
            drop_partial,
        } => {
            let reports = folds
                .iter()
                .map(|p| {
                    require_file(p)?;
                    EvaluationReport::from_json(&read(p)?).map_err(|e| in_file(p)(e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut values: Vec<_> = reports.iter().map(crossval::flatten_report).collect();
            if drop_partial {
                for k in crossval::retain_common_keys(&mut values) {
                    log::warn!("dropping {k}: undefined in some folds");
                }
            }
            let agg: AggregateReport = crossval::aggregate_values(&values).map_err(data)?;
            let rows = vec![(label, agg)];
            write(&out.join("aggregate.json"), rows[0].1.to_json())?;
            write(
                &out.join("table.md"),
                crossval::render_table(&rows, TableLayout::Markdown),
            )?;
            write(&out.join("table.csv"), crossval::render_table(&rows, TableLayout::Csv))
        }
        Command::Synth {
            out,
            images,
            width,
            height,
            seed,
        } => {
            if images == 0 || width < 16 || height < 16 {
                return Err(CliError::Usage(
                    "need at least one image of at least 16x16 pixels".into(),
                ));
            }
            let d = synthetic::generate(&SynthConfig {
                images,
                width,
                height,
                seed,
            });
            write(&out.join("taxonomy.json"), d.taxonomy.to_json())?;
            write(&out.join("manifest.json"), d.manifest.to_json())?;
            write(
                &out.join("export.json"),
                synthetic::labelstudio_export(&d.records, &d.manifest, &d.taxonomy),
            )?;
            store_maps(&out.join("pred"), &d.predictions, exec)
        }
    }
}

fn agreement(cmd: AgreementCommand, taxonomy: &Taxonomy, exec: Execution) -> Result<()> {
    let load = |dirs: &PairDirs| {
        load_pairs(
            &dirs.annotated,
            &dirs.predicted,
            dirs.allow_missing,
            None,
            taxonomy,
            exec,
        )
    };
    match cmd {
        AgreementCommand::Masks { dirs, bins } => {
            let pairs = load(&dirs)?;
            let masks = par::map(exec, &pairs, |(id, a, g)| {
                grading::pair_masks_by_segment(a, g, taxonomy).map_err(|e| data(format!("{id}: {e}")))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .concat();
            let result = grading::mask_agreement_by_size(&masks, &bins).map_err(|e| match e {
                grading::GradeError::BadBins => CliError::Usage(e.to_string()),
                _ => data(e),
            })?;
            let doc = serde_json::json!({ "bin_edges": bins, "result": result });
            write(&dirs.out.join("masks.json"), json_string(&doc))?;
            write(&dirs.out.join("masks.csv"), result.to_csv())
        }
        AgreementCommand::Counts { dirs, per_category } => {
            let pairs = load(&dirs)?;
            let refs: Vec<_> = pairs.iter().map(|(_, a, p)| (a, p)).collect();
            let result = grading::count_agreement(&refs, taxonomy, per_category).map_err(data)?;
            write(&dirs.out.join("counts.json"), json_string(&result))?;
            write(&dirs.out.join("counts.csv"), result.to_csv())
        }
        AgreementCommand::Sizes {
            dirs,
            min_iou,
            denominator,
        } => {
            if !(0.0..=1.0).contains(&min_iou) {
                return Err(CliError::Usage(format!("--min-iou {min_iou} outside [0, 1]")));
            }
            let pairs = load(&dirs)?;
            let refs: Vec<_> = pairs.iter().map(|(_, a, p)| (a, p)).collect();
            let result = grading::size_agreement(&refs, taxonomy, min_iou, denominator.into()).map_err(data)?;
            write(&dirs.out.join("sizes.json"), json_string(&result))?;
            write(&dirs.out.join("sizes.csv"), result.to_csv())
        }
    }
}
