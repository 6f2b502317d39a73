use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::paired::group_cases;
use super::Scorer;
use crate::data::{PairedTestCase, SongId};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrrReport {
    pub mrr_up: f64,
    pub mrr_down: f64,
    /// Songs ranked per case, target included.
    pub pool_size: usize,
    pub cases: usize,
}

/// `1 / rank` of `target` among `others`, where a block of tied scores
/// shares the mean of the ranks it spans.
pub fn reciprocal_rank(target: f64, others: &[f64]) -> f64 {
    let above = others.iter().filter(|&&s| s > target).count() as f64;
    let ties = others.iter().filter(|&&s| s == target).count() as f64;
    1.0 / (1.0 + above + ties / 2.0)
}

/// Ranks each case's positive and negative song against the same
/// `pool_size - 1` random catalog songs (excluding both targets), scored in
/// the case's context.
pub fn mrr<S: Scorer>(
    scorer: &S,
    cases: &[PairedTestCase],
    pool_size: usize,
    catalog_size: usize,
    seed: u64,
) -> Result<MrrReport> {
    if pool_size < 2 {
        return Err(Error::Config("MRR pool size must be at least 2".into()));
    }
    if cases.is_empty() {
        return Err(Error::EmptyPartition("paired test cases"));
    }
    if catalog_size < 3 {
        return Err(Error::CatalogTooSmall {
            needed: 2,
            available: catalog_size,
        });
    }
    let others_wanted = (pool_size - 1).min(catalog_size - 2);
    let groups = group_cases(cases);
    let per_group: Vec<Vec<(f64, f64)>> = groups
        .par_iter()
        .map(|idx| {
            let first = &cases[idx[0]];
            let q = scorer.prepare(&first.context, first.station)?;
            Ok(idx
                .iter()
                .map(|&i| {
                    let c = &cases[i];
                    let mut rng = rng_for(seed, &[stream::MRR, i as u64]);
                    let (pos, neg) = (c.positive.song, c.negative.song);
                    let others: Vec<f64> = index::sample(&mut rng, catalog_size, others_wanted + 2)
                        .into_iter()
                        .map(|s| SongId(s as u32))
                        .filter(|&s| s != pos && s != neg)
                        .take(others_wanted)
                        .map(|s| scorer.score(&q, s))
                        .collect();
                    (
                        reciprocal_rank(scorer.score(&q, pos), &others),
                        reciprocal_rank(scorer.score(&q, neg), &others),
                    )
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let n = cases.len() as f64;
    let (up, down) = per_group
        .iter()
        .flatten()
        .fold((0.0, 0.0), |(a, b), (u, d)| (a + u, b + d));
    Ok(MrrReport {
        mrr_up: up / n,
        mrr_down: down / n,
        pool_size: others_wanted + 1,
        cases: cases.len(),
    })
}
