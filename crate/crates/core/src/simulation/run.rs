use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{InitMode, SimulationConfig};
use super::oracle::{EnsembleKind, OraclePredictor, Predictor};
use super::phantom::{generate_phantom_pool, ItemState, PoolItem};
use crate::error::{Error, Result};
use crate::initialization::{extract_first_order, normalize_features, select_diverse_initial};
use crate::metrics::{dice_score, summarize, CurvePoint};
use crate::par;
use crate::seed::{self, tag};
use crate::selection::{
    select_nonsimilar, select_random, select_representative_with, select_topk_uncertain,
    SelectionResult, Strategy,
};
use crate::uncertainty::{
    bootstrap_score, bootstrap_score_focused, dropout_topfraction_score, margins_score, ranked,
    Method, UncertaintyScore,
};
use crate::volume::{ProbabilityMap, SegmentationMask};
use crate::ItemId;

/// One annotate/retrain/evaluate round. Iteration 0 is the initial set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub selection: SelectionResult,
    pub point: CurvePoint,
    /// Not serialized: logs must replay byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: SimulationConfig,
    pub test_ids: Vec<ItemId>,
    pub iterations: Vec<IterationRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: SimulationConfig,
    test_ids: Vec<ItemId>,
}

impl RunLog {
    /// JSON Lines: a header with the config echo, then one line per round.
    pub fn to_jsonl(&self) -> String {
        let header = Header {
            config: self.config.clone(),
            test_ids: self.test_ids.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for rec in &self.iterations {
            out.push_str(&serde_json::to_string(rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| Error::parse("run log", "empty"))?;
        let header: Header =
            serde_json::from_str(head).map_err(|e| Error::parse("run log header", e.to_string()))?;
        let iterations = lines
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::parse(format!("run log line {}", i + 2), e.to_string()))
            })
            .collect::<Result<_>>()?;
        Ok(RunLog {
            config: header.config,
            test_ids: header.test_ids,
            iterations,
        })
    }

    pub fn curve(&self) -> Vec<CurvePoint> {
        self.iterations.iter().map(|r| r.point.clone()).collect()
    }

    /// Identifiers chosen in every round, in order.
    pub fn chosen_sequence(&self) -> Vec<Vec<ItemId>> {
        self.iterations.iter().map(|r| r.selection.chosen.clone()).collect()
    }
}

/// Ensemble behaviour the reference oracle needs for a given score.
pub fn ensemble_kind(method: Method) -> EnsembleKind {
    match method {
        Method::Bootstrap => EnsembleKind::Bootstrap,
        _ => EnsembleKind::Dropout,
    }
}

/// Generate the phantom pool and run the loop against the reference oracle.
pub fn simulate(config: &SimulationConfig) -> Result<RunLog> {
    let pool = generate_phantom_pool(config)?;
    let oracle = OraclePredictor::new(config.oracle, ensemble_kind(config.uncertainty));
    run_active_learning(config, pool, &oracle)
}

struct Loop<'a> {
    config: &'a SimulationConfig,
    predictor: &'a dyn Predictor,
    pool: Vec<PoolItem>,
    /// Annotated indices in annotation order.
    annotated: Vec<usize>,
    test: Vec<usize>,
    training_pool: usize,
}

impl Loop<'_> {
    fn predict(&self, item: &PoolItem, n: usize, snapshot: &[&PoolItem], seed: u64) -> Result<Vec<ProbabilityMap>> {
        let maps = self.predictor.predict(item, n, snapshot, seed)?;
        if maps.len() != n {
            return Err(Error::Contract(format!(
                "asked for {n} predictions of {}, got {}",
                item.item_id,
                maps.len()
            )));
        }
        if let Some(m) = maps.iter().find(|m| m.dims() != item.truth.dims()) {
            return Err(Error::Contract(format!(
                "prediction of {} is {} but the image is {}",
                item.item_id,
                m.dims(),
                item.truth.dims()
            )));
        }
        if self.config.strict && self.predictor.predict(item, n, snapshot, seed)? != maps {
            return Err(Error::Contract(format!(
                "predictions of {} differ between identical calls",
                item.item_id
            )));
        }
        Ok(maps)
    }

    /// Training portion of the annotated set after this round's validation split.
    fn snapshot(&self, iteration: usize) -> Vec<usize> {
        let mut ids = self.annotated.clone();
        ids.sort_by(|&a, &b| self.pool[a].item_id.cmp(&self.pool[b].item_id));
        let mut rng = seed::rng(seed::derive(self.config.seed, &[tag::VALIDATION, iteration as u64]));
        ids.shuffle(&mut rng);
        let hold = (ids.len() as f64 * self.config.validation_fraction).round() as usize;
        let hold = hold.min(ids.len().saturating_sub(1));
        let mut train = ids.split_off(hold);
        train.sort_unstable();
        train
    }

    fn evaluate(&self, iteration: usize, snapshot: &[usize]) -> Result<CurvePoint> {
        let snap: Vec<&PoolItem> = snapshot.iter().map(|&i| &self.pool[i]).collect();
        let threshold = self.config.oracle.threshold as f32;
        let eval_seed = seed::derive(self.config.seed, &[tag::EVAL]);
        let dices = par::map(&self.test, |&i| {
            let item = &self.pool[i];
            let map = self.predict(item, 1, &snap, eval_seed)?.remove(0);
            dice_score(item.item_id.clone(), &SegmentationMask::threshold(&map, threshold), &item.truth)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        summarize(&dices, iteration, self.annotated.len(), self.training_pool)
    }

    fn score(&self, item: &PoolItem, snapshot: &[&PoolItem], seed: u64) -> Result<UncertaintyScore> {
        let cfg = self.config;
        let id = item.item_id.clone();
        match cfg.uncertainty {
            Method::Margins => margins_score(id, &self.predict(item, 1, snapshot, seed)?[0]),
            Method::Bootstrap => {
                let maps = self.predict(item, cfg.n_predictions, snapshot, seed)?;
                match cfg.bootstrap_top_fraction {
                    Some(f) => bootstrap_score_focused(id, &maps, f),
                    None => bootstrap_score(id, &maps),
                }
            }
            Method::DropoutTopFraction => {
                let maps = self.predict(item, cfg.n_predictions, snapshot, seed)?;
                dropout_topfraction_score(id, &maps, cfg.top_fraction)
            }
        }
    }

    fn unannotated(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.pool.len())
            .filter(|&i| self.pool[i].state == ItemState::Unannotated)
            .collect();
        v.sort_by(|&a, &b| self.pool[a].item_id.cmp(&self.pool[b].item_id));
        v
    }

    fn select(&self, iteration: usize, snapshot: &[usize]) -> Result<SelectionResult> {
        let cfg = self.config;
        let it = iteration as u64;
        let select_seed = seed::derive(cfg.seed, &[tag::SELECT, it]);
        let unannotated = self.unannotated();
        if unannotated.len() < cfg.batch_m {
            return Err(Error::invalid(format!(
                "pool exhausted: {} unannotated items left, batch needs {}",
                unannotated.len(),
                cfg.batch_m
            )));
        }
        let ids_of = |idx: &[usize]| -> Vec<ItemId> { idx.iter().map(|&i| self.pool[i].item_id.clone()).collect() };

        if cfg.strategy == Strategy::Random {
            return select_random(&ids_of(&unannotated), cfg.batch_m, select_seed);
        }

        let candidates = match cfg.score_subsample {
            Some(s) if s < unannotated.len() => {
                let pick = select_random(
                    &ids_of(&unannotated),
                    s,
                    seed::derive(cfg.seed, &[tag::SUBSAMPLE, it]),
                )?;
                let mut idx: Vec<usize> = pick.chosen.iter().map(|id| self.index_of(id)).collect();
                idx.sort_by(|&a, &b| self.pool[a].item_id.cmp(&self.pool[b].item_id));
                idx
            }
            _ => unannotated,
        };

        let snap: Vec<&PoolItem> = snapshot.iter().map(|&i| &self.pool[i]).collect();
        let predict_seed = seed::derive(cfg.seed, &[tag::PREDICT, it]);
        let scores = par::map(&candidates, |&i| self.score(&self.pool[i], &snap, predict_seed))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

        match cfg.strategy {
            Strategy::TopK => select_topk_uncertain(&scores, cfg.batch_m),
            Strategy::Representative | Strategy::NonSimilar => {
                let k = cfg.shortlist_k.min(scores.len());
                let shortlist: Vec<_> = ranked(&scores)?
                    .into_iter()
                    .take(k)
                    .map(|s| self.predictor.features(&self.pool[self.index_of(&s.item_id)]))
                    .collect();
                if cfg.strategy == Strategy::Representative {
                    select_representative_with(&shortlist, cfg.batch_m, select_seed, cfg.universe)
                } else {
                    let annotated: Vec<_> = self
                        .annotated
                        .iter()
                        .map(|&i| self.predictor.features(&self.pool[i]))
                        .collect();
                    select_nonsimilar(&shortlist, &annotated, cfg.batch_m, select_seed)
                }
            }
            Strategy::Random => unreachable!(),
        }
    }

    fn index_of(&self, id: &ItemId) -> usize {
        self.pool
            .binary_search_by(|p| p.item_id.cmp(id))
            .expect("selected id comes from the pool")
    }

    fn annotate(&mut self, ids: &[ItemId]) -> Result<()> {
        for id in ids {
            let i = self.index_of(id);
            self.pool[i].annotate()?;
            self.annotated.push(i);
        }
        Ok(())
    }

    fn initial(&self) -> Result<SelectionResult> {
        let cfg = self.config;
        let init_seed = seed::derive(cfg.seed, &[tag::INIT]);
        let training = self.unannotated();
        match cfg.init_mode {
            InitMode::Random => {
                let ids: Vec<ItemId> = training.iter().map(|&i| self.pool[i].item_id.clone()).collect();
                select_random(&ids, cfg.initial_n, init_seed)
            }
            InitMode::RadiomicsDiverse => {
                let raw = par::map(&training, |&i| {
                    let item = &self.pool[i];
                    extract_first_order(item.item_id.clone(), &item.volume, &item.brain_mask(), cfg.entropy_bins)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                select_diverse_initial(&normalize_features(&raw)?, cfg.initial_n, init_seed)
            }
        }
    }
}

/// Run the full loop: split off a test set, pick the initial training set,
/// then per round score the unannotated items, select a batch, annotate it
/// and evaluate mean test Dice with the updated snapshot.
pub fn run_active_learning(
    config: &SimulationConfig,
    mut pool: Vec<PoolItem>,
    predictor: &dyn Predictor,
) -> Result<RunLog> {
    config.validate()?;
    if pool.len() != config.pool_size {
        return Err(Error::invalid(format!(
            "config expects {} items, pool has {}",
            config.pool_size,
            pool.len()
        )));
    }
    pool.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    if pool.windows(2).any(|w| w[0].item_id == w[1].item_id) {
        return Err(Error::invalid("duplicate item ids in pool"));
    }
    if pool.iter().any(|p| p.state != ItemState::Unannotated) {
        return Err(Error::invalid("every pool item must start unannotated"));
    }

    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive(config.seed, &[tag::SPLIT])));
    let mut test: Vec<usize> = order[..config.test_count()].to_vec();
    test.sort_unstable();
    for &i in &test {
        pool[i].state = ItemState::Test;
    }
    let test_ids = test.iter().map(|&i| pool[i].item_id.clone()).collect();

    let mut state = Loop {
        config,
        predictor,
        training_pool: pool.len() - test.len(),
        pool,
        annotated: Vec::new(),
        test,
    };

    let mut iterations = Vec::with_capacity(config.iterations + 1);
    let started = Instant::now();
    let init = state.initial()?;
    state.annotate(&init.chosen)?;
    let mut snapshot = state.snapshot(0);
    iterations.push(IterationRecord {
        iteration: 0,
        point: state.evaluate(0, &snapshot)?,
        selection: init,
        wall_time: started.elapsed(),
    });

    for t in 1..=config.iterations {
        let started = Instant::now();
        let selection = state.select(t, &snapshot)?;
        state.annotate(&selection.chosen)?;
        snapshot = state.snapshot(t);
        iterations.push(IterationRecord {
            iteration: t,
            point: state.evaluate(t, &snapshot)?,
            selection,
            wall_time: started.elapsed(),
        });
    }

    Ok(RunLog {
        config: config.clone(),
        test_ids,
        iterations,
    })
}
