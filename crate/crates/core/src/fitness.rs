//! Retrospective mutant-ranking study: perplexity-ranked selection against
//! random mutagenesis baselines over a range of design budgets.

use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{perplexity_from_logprobs, teacher_forced_logprobs};
use crate::featurizer::MultiGraph;
use crate::model::Model;
use crate::rna_io::encode_sequence;
use crate::seeds::derive_seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub sequence: String,
    pub fitness: f64,
    /// Hamming distance to the wild type.
    pub mutation_order: usize,
}

pub fn hamming(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).filter(|(x, y)| x != y).count()
}

impl FitnessRecord {
    pub fn new(sequence: &str, fitness: f64, wild_type: &str) -> Result<Self> {
        let sequence = sequence.trim().to_ascii_uppercase();
        if sequence.chars().count() != wild_type.chars().count() {
            return Err(Error::LengthMismatch {
                expected: wild_type.chars().count(),
                found: sequence.chars().count(),
            });
        }
        Ok(Self {
            mutation_order: hamming(&sequence, wild_type),
            sequence,
            fitness,
        })
    }
}

#[derive(Deserialize)]
struct LandscapeRow {
    sequence: String,
    fitness: f64,
}

/// Reads a `sequence,fitness` CSV.
pub fn read_landscape(path: &Path, wild_type: &str) -> Result<Vec<FitnessRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: LandscapeRow = row?;
        out.push(FitnessRecord::new(&row.sequence, row.fitness, wild_type)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    All,
    Single,
    SingleDouble,
}

impl Pool {
    pub fn contains(self, r: &FitnessRecord) -> bool {
        match self {
            Pool::All => true,
            Pool::Single => r.mutation_order == 1,
            Pool::SingleDouble => (1..=2).contains(&r.mutation_order),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    RandomAll,
    RandomSingle,
    RandomSingleDouble,
    Perplexity,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::RandomAll => "random_all",
            Strategy::RandomSingle => "random_single",
            Strategy::RandomSingleDouble => "random_single_double",
            Strategy::Perplexity => "perplexity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub strategy: Strategy,
    pub budget: usize,
    /// Candidates actually drawn (the budget clamped to the pool size).
    pub effective_budget: usize,
    pub median_max_improvement: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q25: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q75: Option<f64>,
    /// Best selected fitness over wild-type fitness, when the latter is positive.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_change: Option<f64>,
    pub clamped: bool,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn fold_change(wild_type_fitness: f64, improvement: f64) -> Option<f64> {
    (wild_type_fitness > 0.0).then(|| (wild_type_fitness + improvement) / wild_type_fitness)
}

/// Draws `budget` records without replacement `n_sims` times and reports
/// the distribution of `max(fitness) - wild_type_fitness`. Simulation `s`
/// uses its own generator seeded from `(seed, s)`.
pub fn simulate_baseline(
    records: &[FitnessRecord],
    wild_type_fitness: f64,
    pool: Pool,
    budget: usize,
    n_sims: usize,
    seed: u64,
) -> Result<BudgetReport> {
    let fitness: Vec<f64> = records.iter().filter(|r| pool.contains(r)).map(|r| r.fitness).collect();
    if fitness.is_empty() {
        return Err(Error::InvalidArgument(format!("{pool:?} pool is empty")));
    }
    let strategy = match pool {
        Pool::All => Strategy::RandomAll,
        Pool::Single => Strategy::RandomSingle,
        Pool::SingleDouble => Strategy::RandomSingleDouble,
    };
    let take = budget.min(fitness.len());
    if take < budget {
        log::warn!("{} budget {budget} exceeds pool of {}; clamped", strategy.name(), fitness.len());
    }
    let mut gains: Vec<f64> = (0..n_sims.max(1))
        .into_par_iter()
        .map(|s| {
            if take == 0 {
                return 0.0;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, s as u64));
            let best = index::sample(&mut rng, fitness.len(), take)
                .iter()
                .map(|i| fitness[i])
                .fold(f64::NEG_INFINITY, f64::max);
            best - wild_type_fitness
        })
        .collect();
    gains.sort_by(f64::total_cmp);
    let median = quantile(&gains, 0.5);
    Ok(BudgetReport {
        strategy,
        budget,
        effective_budget: take,
        median_max_improvement: median,
        q25: Some(quantile(&gains, 0.25)),
        q75: Some(quantile(&gains, 0.75)),
        fold_change: fold_change(wild_type_fitness, median),
        clamped: take < budget,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub sequence: String,
    pub perplexity: f64,
}

/// Candidates by ascending perplexity on the wild-type backbone, ties by
/// sequence. Full-length candidates are read at the graph's residues.
pub fn rank_by_perplexity(model: &Model, mg: &MultiGraph, candidates: &[String]) -> Result<Vec<RankedCandidate>> {
    let residues = mg.residues();
    let mut encoded = Vec::with_capacity(candidates.len());
    for c in candidates {
        let full = encode_sequence(c)?;
        if residues.iter().any(|&r| r >= full.len()) {
            return Err(Error::LengthMismatch {
                expected: residues.last().map_or(0, |&r| r + 1),
                found: full.len(),
            });
        }
        encoded.push(residues.iter().map(|&r| full[r]).collect::<Vec<usize>>());
    }
    let chunk = encoded.len().div_ceil(rayon::current_num_threads().max(1)).max(1);
    let scores: Vec<Result<Vec<f64>>> = encoded
        .par_chunks(chunk)
        .map(|seqs| {
            let mut session = model.eval_session();
            let enc = session.encode(mg)?;
            seqs.iter()
                .map(|s| Ok(perplexity_from_logprobs(&teacher_forced_logprobs(&mut session, mg, &enc, s)?)))
                .collect()
        })
        .collect();
    let mut ranked = Vec::with_capacity(candidates.len());
    let mut idx = 0;
    for chunk in scores {
        for p in chunk? {
            ranked.push(RankedCandidate {
                sequence: candidates[idx].clone(),
                perplexity: p,
            });
            idx += 1;
        }
    }
    sort_ranking(&mut ranked);
    Ok(ranked)
}

pub fn sort_ranking(ranked: &mut [RankedCandidate]) {
    ranked.sort_by(|a, b| a.perplexity.total_cmp(&b.perplexity).then_with(|| a.sequence.cmp(&b.sequence)));
}

/// Improvement of the best record among the first `budget` ranked
/// candidates (0 for an empty selection).
pub fn ranked_improvement(records: &[FitnessRecord], wild_type_fitness: f64, ranked: &[RankedCandidate], budget: usize) -> f64 {
    let fitness: std::collections::HashMap<&str, f64> = records.iter().map(|r| (r.sequence.as_str(), r.fitness)).collect();
    let best = ranked
        .iter()
        .take(budget)
        .filter_map(|c| fitness.get(c.sequence.as_str()).copied())
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        0.0
    } else {
        best - wild_type_fitness
    }
}

/// The three random baselines plus the ranked strategy at every budget.
pub fn evaluate_strategies(
    records: &[FitnessRecord],
    wild_type_fitness: f64,
    ranked: &[RankedCandidate],
    budgets: &[usize],
    n_sims: usize,
    seed: u64,
) -> Result<Vec<BudgetReport>> {
    let mut out = Vec::new();
    for (b_idx, &budget) in budgets.iter().enumerate() {
        for (p_idx, pool) in [Pool::All, Pool::Single, Pool::SingleDouble].into_iter().enumerate() {
            let s = derive_seed(derive_seed(seed, b_idx as u64), p_idx as u64);
            match simulate_baseline(records, wild_type_fitness, pool, budget, n_sims, s) {
                Ok(r) => out.push(r),
                Err(e) => log::warn!("skipping {pool:?} baseline: {e}"),
            }
        }
        let take = budget.min(ranked.len());
        let gain = ranked_improvement(records, wild_type_fitness, ranked, take);
        out.push(BudgetReport {
            strategy: Strategy::Perplexity,
            budget,
            effective_budget: take,
            median_max_improvement: gain,
            q25: None,
            q75: None,
            fold_change: fold_change(wild_type_fitness, gain),
            clamped: take < budget,
        });
    }
    Ok(out)
}

/// CSV with columns `strategy,budget,effective_budget,median,q25,q75,fold_change,clamped`;
/// fields absent for a row are left empty.
pub fn reports_to_csv(reports: &[BudgetReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "budget", "effective_budget", "median", "q25", "q75", "fold_change", "clamped"])?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v}"));
    for r in reports {
        w.write_record([
            r.strategy.name().to_string(),
            r.budget.to_string(),
            r.effective_budget.to_string(),
            format!("{}", r.median_max_improvement),
            opt(r.q25),
            opt(r.q75),
            opt(r.fold_change),
            r.clamped.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
