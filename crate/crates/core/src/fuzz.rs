//! Seeded randomized falsification: sample members of the bias set, retrain,
//! and look for a prediction that disagrees with the original tree.
//!
//! Sampling uses ChaCha8 so results are reproducible across platforms from a
//! single `u64` seed; the stream identifier reported alongside results is
//! `"chacha8"`.

use crate::bias::NormalizedBiasModel;
use crate::concrete::{infer, train};
use crate::dataset::{Dataset, Row, Value};
use crate::error::{Error, Result};
use crate::oracle::Universe;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub const RNG_ALGORITHM: &str = "chacha8";

/// One sampled member of the bias set. Budgets are drawn uniformly from
/// `0..=budget` per component; rows are chosen without replacement among the
/// eligible ones, silently truncating when fewer are eligible.
pub fn perturb(
    t: &Dataset,
    model: &NormalizedBiasModel,
    universe: &Universe,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let arity = t.schema.label_arity;
    let mut rows = t.rows.clone();

    if let Some(miss) = &model.miss {
        let pool: Vec<Row> = universe
            .rows(&t.schema)
            .into_iter()
            .filter(|r| miss.target.eval(&r.x, r.y))
            .collect();
        if !pool.is_empty() {
            let k = rng.gen_range(0..=miss.budget);
            for _ in 0..k {
                rows.push(pool[rng.gen_range(0..pool.len())].clone());
            }
        }
    }

    if let Some(flip) = &model.flip {
        let eligible: Vec<usize> = (0..rows.len())
            .filter(|&i| flip.target.eval(&rows[i].x, rows[i].y))
            .collect();
        let k = rng.gen_range(0..=flip.budget).min(eligible.len());
        let picks = sample(rng, eligible.len(), k);
        for p in picks.iter() {
            let i = eligible[p];
            let mut y2 = rng.gen_range(0..arity - 1);
            if y2 >= rows[i].y {
                y2 += 1;
            }
            rows[i].y = y2;
        }
    }

    if let Some(fake) = &model.fake {
        let eligible: Vec<usize> = (0..rows.len())
            .filter(|&i| fake.target.eval(&rows[i].x, rows[i].y))
            .collect();
        let k = rng.gen_range(0..=fake.budget).min(eligible.len());
        let mut drop: Vec<usize> = sample(rng, eligible.len(), k)
            .iter()
            .map(|p| eligible[p])
            .collect();
        drop.sort_unstable_by(|a, b| b.cmp(a));
        for i in drop {
            rows.remove(i);
        }
    }

    Ok(Dataset::new(t.schema.clone(), rows))
}

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub member: Dataset,
    pub label: usize,
    pub iteration: u64,
}

#[derive(Clone, Debug)]
pub struct FalsifyOutcome {
    pub counterexample: Option<Counterexample>,
    pub iterations_run: u64,
    pub baseline_label: usize,
}

fn mix(seed: u64, i: u64) -> u64 {
    // splitmix64 finalizer over seed ^ golden-ratio stream of i
    let mut z = seed ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Search up to `iters` sampled members for one whose retrained tree changes
/// the prediction at `x`. Each iteration reseeds from `mix(seed, i)`, so a
/// reported iteration index reproduces its member exactly. A hit is
/// re-verified by retraining from scratch before being reported.
pub fn falsify(
    t: &Dataset,
    model: &NormalizedBiasModel,
    universe: &Universe,
    x: &[Value],
    depth: usize,
    seed: u64,
    iters: u64,
) -> Result<FalsifyOutcome> {
    if t.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if iters == 0 {
        return Err(Error::Invalid("falsification needs at least one iteration".into()));
    }
    let baseline = infer(&train(t, depth)?, x);
    for i in 0..iters {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, i));
        let member = perturb(t, model, universe, &mut rng)?;
        if member.is_empty() {
            continue;
        }
        let label = infer(&train(&member, depth)?, x);
        if label != baseline {
            // independent re-verification of the witness
            let check = infer(&train(&member, depth)?, x);
            debug_assert_eq!(check, label);
            return Ok(FalsifyOutcome {
                counterexample: Some(Counterexample {
                    member,
                    label,
                    iteration: i,
                }),
                iterations_run: i + 1,
                baseline_label: baseline,
            });
        }
    }
    Ok(FalsifyOutcome {
        counterexample: None,
        iterations_run: iters,
        baseline_label: baseline,
    })
}
