//! Command-line front end. Each subcommand reads and writes plain files
//! (VOL1 volumes, CSV tables, JSON documents) so stages compose in scripts.
//!
//! Exit codes: 0 on success, 2 for usage errors, 1 for data or contract
//! errors. Outputs are written atomically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::initialization::{self, extract_first_order, normalize_features, select_diverse_initial};
use crate::metrics::dice_score;
use crate::par;
use crate::selection::{self, select_nonsimilar, select_random, select_representative, select_topk_uncertain};
use crate::similarity::{features_from_csv, FeatureVector};
use crate::simulation::{compare_strategies, simulate, SimulationConfig};
use crate::tabular::{csv_string, fmt_real, write_atomic, NumericTable};
use crate::uncertainty::{self, bootstrap_score, dropout_topfraction_score, margins_score};
use crate::volume::{load_volume, ProbabilityMap, SegmentationMask};
use crate::ItemId;

#[derive(Debug, Parser)]
#[command(name = "alcore", version, about = "Active-learning query strategies for 3D segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScoreMethod {
    Margins,
    Bootstrap,
    Dropout,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectStrategy {
    Random,
    Topk,
    Representative,
    Nonsimilar,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitModeArg {
    Random,
    Diverse,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Json,
    /// One identifier per line.
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score items for uncertainty from per-item probability maps.
    Score {
        /// Uncertainty method.
        #[arg(long, value_enum)]
        method: ScoreMethod,
        /// Directory with one sub-directory per item holding pred_<j>.vol files.
        #[arg(long)]
        maps: PathBuf,
        /// Share of highest-variance voxels averaged by the dropout score.
        #[arg(long, default_value_t = uncertainty::DEFAULT_TOP_FRACTION)]
        top_fraction: f64,
        /// Output CSV (item_id,method,score,n_predictions), ranked.
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose the next batch to annotate.
    Select {
        /// Query strategy.
        #[arg(long, value_enum)]
        strategy: SelectStrategy,
        /// Uncertainty score CSV as written by `score`.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Feature CSV (item_id,f0,...) of unannotated items.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Feature CSV of already annotated items (nonsimilar only).
        #[arg(long)]
        annotated: Option<PathBuf>,
        /// Shortlist size (defaults to the whole pool).
        #[arg(long)]
        k: Option<usize>,
        /// Number of items to select.
        #[arg(long, default_value_t = selection::DEFAULT_BATCH_M)]
        m: usize,
        /// Seed for the random pick or start item.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output encoding.
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick an initial training set from a feature table.
    Init {
        /// CSV with item_id followed by numeric feature columns.
        #[arg(long)]
        features: PathBuf,
        /// Number of items to pick.
        #[arg(long)]
        n: usize,
        /// Random draw or max-min diverse pick.
        #[arg(long, value_enum)]
        mode: InitModeArg,
        /// Seed for the random pick or start item.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output encoding.
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract first-order intensity features from VOL1 volumes.
    Features {
        /// Directory of <item_id>.vol intensity volumes.
        #[arg(long)]
        volumes: PathBuf,
        /// Directory of <item_id>.vol masks (default: non-zero voxels).
        #[arg(long)]
        masks: Option<PathBuf>,
        /// Histogram bins for entropy.
        #[arg(long, default_value_t = initialization::DEFAULT_BINS)]
        bins: usize,
        /// Raw feature CSV (item_id,mean,median,entropy,energy).
        #[arg(long)]
        out: PathBuf,
        /// Also write the z-scored table here.
        #[arg(long)]
        normalized: Option<PathBuf>,
    },
    /// Dice overlap between predicted and true masks.
    Dice {
        /// Mask file, or directory of <item_id>.vol masks.
        #[arg(long)]
        pred: PathBuf,
        /// Mask file, or directory with the same file names.
        #[arg(long)]
        truth: PathBuf,
        /// CSV of item_id,dice.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one simulated active-learning experiment.
    Simulate {
        /// SimulationConfig JSON.
        #[arg(long)]
        config: PathBuf,
        /// RunLog JSON Lines.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare configs over seeded repeats.
    Compare {
        /// Directory of SimulationConfig JSON files.
        #[arg(long)]
        configs: PathBuf,
        /// Seeded repeats per config.
        #[arg(long)]
        repeats: usize,
        /// Output directory for report.csv and report.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    v.retain(|p| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| !n.starts_with('.'))
    });
    v.sort();
    Ok(v)
}

fn file_stem(p: &Path) -> Result<String> {
    p.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::invalid(format!("{} has no UTF-8 file name", p.display())))
}

fn vol_files(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "vol"))
        .collect())
}

/// `pred_<j>.vol` files of one item directory, ordered by `j`.
fn item_maps(dir: &Path) -> Result<Vec<ProbabilityMap>> {
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for p in vol_files(dir)? {
        let stem = file_stem(&p)?;
        let j = stem
            .strip_prefix("pred_")
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| Error::invalid(format!("{}: expected pred_<j>.vol", p.display())))?;
        found.push((j, p));
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::invalid(format!("{}: no prediction maps", dir.display())));
    }
    let maps = found
        .iter()
        .map(|(_, p)| {
            ProbabilityMap::new(load_volume(p)?)
                .map_err(|e| Error::invalid(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(m) = maps.iter().find(|m| m.dims() != maps[0].dims()) {
        return Err(Error::DimMismatch(format!(
            "{}: maps of {} and {} within one item",
            dir.display(),
            maps[0].dims(),
            m.dims()
        )));
    }
    Ok(maps)
}

fn cmd_score(method: ScoreMethod, maps: &Path, top_fraction: f64, out: &Path) -> Result<()> {
    let items: Vec<PathBuf> = sorted_entries(maps)?.into_iter().filter(|p| p.is_dir()).collect();
    if items.is_empty() {
        return Err(Error::invalid(format!("{}: no item directories", maps.display())));
    }
    let scores = par::map(&items, |dir| {
        let id = ItemId::new(dir.file_name().and_then(|n| n.to_str()).unwrap_or_default());
        let maps = item_maps(dir)?;
        match method {
            ScoreMethod::Margins => {
                if maps.len() != 1 {
                    return Err(Error::invalid(format!(
                        "{}: margins needs exactly one map, found {}",
                        dir.display(),
                        maps.len()
                    )));
                }
                margins_score(id, &maps[0])
            }
            ScoreMethod::Bootstrap => bootstrap_score(id, &maps),
            ScoreMethod::Dropout => dropout_topfraction_score(id, &maps, top_fraction),
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_atomic(out, uncertainty::scores_to_csv(&scores)?.as_bytes())
}

fn strategy_name(s: SelectStrategy) -> &'static str {
    match s {
        SelectStrategy::Random => "random",
        SelectStrategy::Topk => "topk",
        SelectStrategy::Representative => "representative",
        SelectStrategy::Nonsimilar => "nonsimilar",
    }
}

fn read_features(path: &Path) -> Result<Vec<FeatureVector>> {
    features_from_csv(&read_text(path)?, &path.display().to_string())
}

fn lookup<'a>(features: &'a BTreeMap<ItemId, FeatureVector>, id: &ItemId) -> Result<&'a FeatureVector> {
    features
        .get(id)
        .ok_or_else(|| Error::invalid(format!("no feature row for item {id}")))
}

#[allow(clippy::too_many_arguments)]
fn cmd_select(
    strategy: SelectStrategy,
    scores: Option<&Path>,
    features: Option<&Path>,
    annotated: Option<&Path>,
    k: Option<usize>,
    m: usize,
    seed: u64,
) -> Result<selection::SelectionResult> {
    fn need<'p>(p: Option<&'p Path>, strategy: SelectStrategy, flag: &str) -> Result<&'p Path> {
        p.ok_or_else(|| Error::invalid(format!("--strategy {} requires {flag}", strategy_name(strategy))))
    }
    let scores = scores
        .map(|p| uncertainty::scores_from_csv(&read_text(p)?, &p.display().to_string()))
        .transpose()?;
    let pool: Vec<ItemId> = match (&scores, features) {
        (Some(s), _) => s.iter().map(|s| s.item_id.clone()).collect(),
        (None, Some(f)) => read_features(f)?.iter().map(|v| v.item_id().clone()).collect(),
        (None, None) => return Err(Error::invalid("select needs --scores or --features")),
    };
    let k = k.unwrap_or(pool.len());
    if m > k {
        return Err(Error::invalid(format!("m = {m} exceeds k = {k}")));
    }
    if k > pool.len() {
        return Err(Error::invalid(format!("k = {k} exceeds the pool of {}", pool.len())));
    }
    match strategy {
        SelectStrategy::Random => select_random(&pool, m, seed),
        SelectStrategy::Topk => {
            let scores = scores.ok_or_else(|| Error::invalid("--strategy topk requires --scores"))?;
            select_topk_uncertain(&scores, m)
        }
        SelectStrategy::Representative | SelectStrategy::Nonsimilar => {
            let scores = scores.ok_or_else(|| {
                Error::invalid(format!("--strategy {} requires --scores", strategy_name(strategy)))
            })?;
            let table: BTreeMap<ItemId, FeatureVector> = read_features(need(features, strategy, "--features")?)?
                .into_iter()
                .map(|v| (v.item_id().clone(), v))
                .collect();
            let shortlist = uncertainty::rank_by_uncertainty(&scores)?
                .into_iter()
                .take(k)
                .map(|id| lookup(&table, &id).cloned())
                .collect::<Result<Vec<_>>>()?;
            if let SelectStrategy::Representative = strategy {
                select_representative(&shortlist, m, seed)
            } else {
                let known = read_features(need(annotated, strategy, "--annotated")?)?;
                select_nonsimilar(&shortlist, &known, m, seed)
            }
        }
    }
}

fn cmd_init(features: &Path, n: usize, mode: InitModeArg, seed: u64) -> Result<selection::SelectionResult> {
    let table = NumericTable::read(features)?;
    if n > table.ids.len() {
        return Err(Error::invalid(format!(
            "n = {n} exceeds the {} feature rows",
            table.ids.len()
        )));
    }
    match mode {
        InitModeArg::Random => select_random(&table.ids, n, seed),
        InitModeArg::Diverse => select_diverse_initial(&initialization::normalize_table(&table)?, n, seed),
    }
}

fn cmd_features(volumes: &Path, masks: Option<&Path>, bins: usize, out: &Path, normalized: Option<&Path>) -> Result<()> {
    let files = vol_files(volumes)?;
    if files.is_empty() {
        return Err(Error::invalid(format!("{}: no .vol files", volumes.display())));
    }
    let feats = par::map(&files, |p| {
        let id = file_stem(p)?;
        let volume = load_volume(p)?;
        let mask = match masks {
            Some(dir) => SegmentationMask::new(load_volume(dir.join(format!("{id}.vol")))?)?,
            None => {
                let bits: Vec<bool> = volume.values().iter().map(|&v| v != 0.0).collect();
                SegmentationMask::from_bools(volume.dims(), &bits)?
            }
        };
        extract_first_order(id, &volume, &mask, bins)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_atomic(out, initialization::features_to_csv(&feats)?.as_bytes())?;
    if let Some(path) = normalized {
        write_atomic(path, normalize_features(&feats)?.to_csv()?.as_bytes())?;
    }
    Ok(())
}

fn cmd_dice(pred: &Path, truth: &Path, out: &Path) -> Result<()> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if pred.is_dir() {
        vol_files(pred)?
            .into_iter()
            .map(|p| {
                let id = file_stem(&p)?;
                let name = p.file_name().expect("listed file has a name");
                Ok((id, truth.join(name), p))
            })
            .collect::<Result<_>>()?
    } else {
        vec![(file_stem(pred)?, truth.to_path_buf(), pred.to_path_buf())]
    };
    let rows = par::map(&pairs, |(id, t, p)| {
        let p = SegmentationMask::new(load_volume(p)?)?;
        let t = SegmentationMask::new(load_volume(t)?)?;
        dice_score(id.as_str(), &p, &t)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let text = csv_string(
        &["item_id", "dice"],
        rows.iter().map(|d| vec![d.item_id.to_string(), fmt_real(d.value)]),
    )?;
    write_atomic(out, text.as_bytes())
}

fn read_config(path: &Path) -> Result<SimulationConfig> {
    SimulationConfig::from_json(&read_text(path)?).map_err(|e| match e {
        Error::Config(errs) => Error::Config(errs.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
        other => other,
    })
}

fn cmd_simulate(config: &Path, out: &Path) -> Result<()> {
    let cfg = read_config(config)?;
    let log = simulate(&cfg)?;
    for rec in &log.iterations {
        eprintln!(
            "iteration {:>3}: annotated {:>4}, mean dice {:.4} ({:.2?})",
            rec.iteration, rec.point.annotated_count, rec.point.mean_dice, rec.wall_time
        );
    }
    write_atomic(out, log.to_jsonl().as_bytes())
}

fn cmd_compare(configs: &Path, repeats: usize, out: &Path) -> Result<()> {
    let files: Vec<PathBuf> = sorted_entries(configs)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    if files.is_empty() {
        return Err(Error::invalid(format!("{}: no .json configs", configs.display())));
    }
    let cfgs = files.iter().map(|p| read_config(p)).collect::<Result<Vec<_>>>()?;
    let report = compare_strategies(&cfgs, repeats)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_atomic(&out.join("report.csv"), report.to_csv()?.as_bytes())?;
    write_atomic(&out.join("report.json"), report.to_json().as_bytes())
}

fn emit(result: &selection::SelectionResult, format: OutputFormat, out: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Json => {
            let mut s = result.to_json();
            s.push('\n');
            s
        }
        OutputFormat::Text => result.to_text(),
    };
    write_atomic(out, text.as_bytes())
}

/// Execute a parsed command.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Score { method, maps, top_fraction, out } => cmd_score(*method, maps, *top_fraction, out),
        Command::Select { strategy, scores, features, annotated, k, m, seed, format, out } => {
            let r = cmd_select(*strategy, scores.as_deref(), features.as_deref(), annotated.as_deref(), *k, *m, *seed)?;
            emit(&r, *format, out)
        }
        Command::Init { features, n, mode, seed, format, out } => emit(&cmd_init(features, *n, *mode, *seed)?, *format, out),
        Command::Features { volumes, masks, bins, out, normalized } => {
            cmd_features(volumes, masks.as_deref(), *bins, out, normalized.as_deref())
        }
        Command::Dice { pred, truth, out } => cmd_dice(pred, truth, out),
        Command::Simulate { config, out } => cmd_simulate(config, out),
        Command::Compare { configs, repeats, out } => cmd_compare(configs, *repeats, out),
    }
}

/// Parse `args`, honour `ALCORE_THREADS`, run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = match par::threads_from_env() {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    match par::with_threads(threads, || execute(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["alcore", "score", "--bogus"]), 2);
        assert_eq!(main_with_args(["alcore", "frobnicate"]), 2);
        assert_eq!(main_with_args(["alcore", "init", "--help"]), 0);
    }

    #[test]
    fn data_errors_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.json");
        let out = dir.path().join("out.jsonl");
        let code = main_with_args([
            "alcore".as_ref(),
            "simulate".as_ref(),
            "--config".as_ref(),
            missing.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, 1);
        assert!(!out.exists());
    }

    #[test]
    fn every_flag_is_documented() {
        for sub in Cli::command().get_subcommands() {
            assert!(sub.get_about().is_some(), "{} lacks help", sub.get_name());
            for arg in sub.get_arguments() {
                let id = arg.get_id().as_str();
                if id == "help" {
                    continue;
                }
                assert!(arg.get_help().is_some(), "{} --{id} lacks help", sub.get_name());
            }
        }
    }
}
