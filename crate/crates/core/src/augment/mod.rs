//! Class balancing by random oversampling, and mixup.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::ingest::{CycleLabel, NUM_CLASSES};

pub const DEFAULT_ALPHA: f64 = 0.4;

/// A probability vector over the four classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftLabel {
    pub probs: [f64; NUM_CLASSES],
}

impl SoftLabel {
    pub fn one_hot(label: CycleLabel) -> Self {
        let mut probs = [0.0; NUM_CLASSES];
        probs[label.index()] = 1.0;
        Self { probs }
    }

    pub fn new(probs: [f64; NUM_CLASSES]) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "{probs:?} is not a probability vector"
            )));
        }
        Ok(Self { probs })
    }

    /// Most probable class; the first maximum wins.
    pub fn argmax(&self) -> CycleLabel {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        CycleLabel::from_index(best).expect("class index")
    }
}

/// A mixing coefficient drawn from `Beta(alpha, alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupDraw {
    pub gamma: f64,
    pub alpha: f64,
}

impl MixupDraw {
    pub fn sample(alpha: f64, rng: &mut impl Rng) -> Result<Self> {
        let beta = Beta::new(alpha, alpha)
            .map_err(|e| Error::Config(format!("mixup.alpha = {alpha}: {e}")))?;
        Ok(Self {
            gamma: beta.sample(rng).clamp(0.0, 1.0),
            alpha,
        })
    }
}

/// Duplicates random same-class items until every class matches the largest
/// one. Originals come first, in input order.
pub fn oversample_balance<T: Clone>(
    items: &[T],
    class_of: impl Fn(&T) -> CycleLabel,
    seed: u64,
) -> Result<Vec<T>> {
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, item) in items.iter().enumerate() {
        by_class[class_of(item).index()].push(i);
    }
    if let Some(empty) = CycleLabel::ALL
        .iter()
        .find(|c| by_class[c.index()].is_empty())
    {
        return Err(Error::EmptyClass(empty.name().to_string()));
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = items.to_vec();
    for members in &by_class {
        for _ in members.len()..target {
            out.push(items[*members.choose(&mut rng).expect("nonempty class")].clone());
        }
    }
    Ok(out)
}

/// Mixes two items and their labels:
/// `(g x1 + (1-g) x2, g y1 + (1-g) y2)` and `((1-g) x1 + g x2, (1-g) y1 + g y2)`.
pub fn mixup_pair(
    x1: &[f32],
    y1: &SoftLabel,
    x2: &[f32],
    y2: &SoftLabel,
    gamma: f64,
) -> ((Vec<f32>, SoftLabel), (Vec<f32>, SoftLabel)) {
    assert_eq!(x1.len(), x2.len(), "mixup operands differ in size");
    assert!((0.0..=1.0).contains(&gamma), "gamma outside [0, 1]");
    let mix = |g: f64| -> (Vec<f32>, SoftLabel) {
        let x = x1
            .iter()
            .zip(x2)
            .map(|(&a, &b)| (g * a as f64 + (1.0 - g) * b as f64) as f32)
            .collect();
        let mut probs = [0.0; NUM_CLASSES];
        for (k, p) in probs.iter_mut().enumerate() {
            *p = g * y1.probs[k] + (1.0 - g) * y2.probs[k];
        }
        (x, SoftLabel { probs })
    };
    (mix(gamma), mix(1.0 - gamma))
}

/// Replaces a batch with its mixup. The batch is shuffled, item `i` is paired
/// with item `(i + n/2) mod n` under a fresh coefficient, and both outputs of
/// each pair are kept. With an odd size the leftover item is mixed with the
/// first one and only its own output is kept.
pub fn mixup_batch(
    xs: &[f32],
    ys: &[SoftLabel],
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<(Vec<f32>, Vec<SoftLabel>)> {
    let n = ys.len();
    if n == 0 || !xs.len().is_multiple_of(n) {
        return Err(Error::shape(format!(
            "{} values do not split into {n} items",
            xs.len()
        )));
    }
    let d = xs.len() / n;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let item = |k: usize| &xs[order[k] * d..(order[k] + 1) * d];
    let half = n / 2;
    let mut out_x = vec![0.0; xs.len()];
    let mut out_y = vec![
        SoftLabel {
            probs: [0.0; NUM_CLASSES]
        };
        n
    ];
    let mut put = |slot: usize, (x, y): (Vec<f32>, SoftLabel)| {
        out_x[slot * d..(slot + 1) * d].copy_from_slice(&x);
        out_y[slot] = y;
    };
    for i in 0..half {
        let j = i + half;
        let g = MixupDraw::sample(alpha, rng)?.gamma;
        let (a, b) = mixup_pair(item(i), &ys[order[i]], item(j), &ys[order[j]], g);
        put(i, a);
        put(j, b);
    }
    if n % 2 == 1 {
        let last = n - 1;
        let g = MixupDraw::sample(alpha, rng)?.gamma;
        let (a, _) = mixup_pair(item(last), &ys[order[last]], item(0), &ys[order[0]], g);
        put(last, a);
    }
    Ok((out_x, out_y))
}
