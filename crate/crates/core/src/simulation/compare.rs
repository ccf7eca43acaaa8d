use serde::{Deserialize, Serialize};

use super::config::SimulationConfig;
use super::run::{simulate, RunLog};
use crate::error::{Error, Result};
use crate::numeric::{mean, population_std};
use crate::par;
use crate::tabular::{csv_string, fmt_real};

/// Across-repeat summary of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub iteration: usize,
    pub annotated_count: usize,
    pub fraction: f64,
    /// Mean over repeats of each run's mean test Dice.
    pub mean_dice: f64,
    /// Population standard deviation of the same.
    pub std_dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyCurve {
    pub label: String,
    pub strategy: String,
    pub uncertainty: String,
    pub init_mode: String,
    pub seeds: Vec<u64>,
    pub points: Vec<AggregatePoint>,
    /// Per repeat: first annotated count whose mean Dice reached the target.
    pub count_to_target: Vec<Option<usize>>,
    /// First annotated count at which the across-repeat mean reached the target.
    pub mean_count_to_target: Option<usize>,
    pub fraction_to_target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dice_target: f64,
    pub repeats: usize,
    pub curves: Vec<StrategyCurve>,
}

const VARYING: [&str; 4] = ["strategy", "init_mode", "seed", "label"];

fn base_of(cfg: &SimulationConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        for k in VARYING {
            obj.remove(k);
        }
    }
    v
}

/// Annotated count of the first point whose Dice reaches `target`.
pub fn count_to_target(points: &[(usize, f64)], target: f64) -> Option<usize> {
    points.iter().find(|(_, d)| *d >= target).map(|(c, _)| *c)
}

/// Run every config `repeats` times (repeat `r` uses `seed + r`, so the same
/// repeat of different configs shares its pool and test split) and summarize.
pub fn compare_strategies(configs: &[SimulationConfig], repeats: usize) -> Result<ComparisonReport> {
    Ok(compare_with_runs(configs, repeats)?.0)
}

/// Like [`compare_strategies`], also returning every run log
/// (`runs[config][repeat]`).
pub fn compare_with_runs(
    configs: &[SimulationConfig],
    repeats: usize,
) -> Result<(ComparisonReport, Vec<Vec<RunLog>>)> {
    let first = configs.first().ok_or_else(|| Error::invalid("no configs to compare"))?;
    if repeats == 0 {
        return Err(Error::invalid("repeats must be positive"));
    }
    let base = base_of(first);
    let mut mismatched = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        c.validate()?;
        if base_of(c) != base {
            mismatched.push(format!(
                "config {i} ({}) differs from config 0 outside strategy/init_mode/seed/label",
                c.display_label()
            ));
        }
    }
    if !mismatched.is_empty() {
        return Err(Error::Config(mismatched));
    }

    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..repeats).map(move |r| (c, r)))
        .collect();
    let logs = par::map(&jobs, |&(c, r)| {
        let cfg = SimulationConfig {
            seed: configs[c].seed.wrapping_add(r as u64),
            ..configs[c].clone()
        };
        simulate(&cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut runs: Vec<Vec<RunLog>> = (0..configs.len()).map(|_| Vec::with_capacity(repeats)).collect();
    for ((c, _), log) in jobs.into_iter().zip(logs) {
        runs[c].push(log);
    }

    let target = first.dice_target;
    let mut labels: Vec<String> = Vec::new();
    let mut curves = Vec::with_capacity(configs.len());
    for (cfg, logs) in configs.iter().zip(&runs) {
        let mut label = cfg.display_label();
        if labels.contains(&label) {
            label = format!("{label}#{}", labels.len());
        }
        labels.push(label.clone());

        let points: Vec<AggregatePoint> = (0..=cfg.iterations)
            .map(|t| {
                let dices: Vec<f64> = logs.iter().map(|l| l.iterations[t].point.mean_dice).collect();
                let p = &logs[0].iterations[t].point;
                AggregatePoint {
                    iteration: t,
                    annotated_count: p.annotated_count,
                    fraction: p.fraction_of_pool,
                    mean_dice: mean(&dices),
                    std_dice: population_std(&dices),
                }
            })
            .collect();
        let per_repeat = logs
            .iter()
            .map(|l| {
                let pts: Vec<_> = l.curve().iter().map(|p| (p.annotated_count, p.mean_dice)).collect();
                count_to_target(&pts, target)
            })
            .collect();
        let agg: Vec<_> = points.iter().map(|p| (p.annotated_count, p.mean_dice)).collect();
        let mean_count = count_to_target(&agg, target);
        curves.push(StrategyCurve {
            label,
            strategy: cfg.strategy.name().to_owned(),
            uncertainty: cfg.uncertainty.name().to_owned(),
            init_mode: cfg.init_mode.name().to_owned(),
            seeds: logs.iter().map(|l| l.config.seed).collect(),
            fraction_to_target: mean_count.map(|c| c as f64 / cfg.training_pool() as f64),
            mean_count_to_target: mean_count,
            count_to_target: per_repeat,
            points,
        });
    }

    Ok((
        ComparisonReport {
            dice_target: target,
            repeats,
            curves,
        },
        runs,
    ))
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per curve point; the to-target column repeats per label and is
    /// empty when the target was never reached.
    pub fn to_csv(&self) -> Result<String> {
        let header = [
            "label",
            "strategy",
            "iteration",
            "annotated_count",
            "fraction",
            "mean_dice",
            "std_dice",
            "fraction_to_target",
        ];
        let rows = self.curves.iter().flat_map(|c| {
            c.points.iter().map(move |p| {
                vec![
                    c.label.clone(),
                    c.strategy.clone(),
                    p.iteration.to_string(),
                    p.annotated_count.to_string(),
                    fmt_real(p.fraction),
                    fmt_real(p.mean_dice),
                    fmt_real(p.std_dice),
                    c.fraction_to_target.map(fmt_real).unwrap_or_default(),
                ]
            })
        });
        csv_string(&header, rows)
    }
}
