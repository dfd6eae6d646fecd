use std::cell::Cell;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Single thread, bit-reproducible for a fixed seed.
    #[default]
    Sequential,
    /// Hogwild-style lock-free updates across threads. Not reproducible.
    Async { threads: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            window: 10,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            seed: 0,
            mode: TrainMode::Sequential,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::validation("embedding dim must be at least 2"));
        }
        if self.window < 1 {
            return Err(Error::validation("window must be at least 1"));
        }
        if self.epochs < 1 {
            return Err(Error::validation("epochs must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Parameter storage that can be read and written through a shared reference.
trait Store {
    fn get(&self, i: usize) -> f64;
    fn set(&self, i: usize, v: f64);
}

struct Local<'a>(&'a [Cell<f64>]);

impl Store for Local<'_> {
    fn get(&self, i: usize) -> f64 {
        self.0[i].get()
    }
    fn set(&self, i: usize, v: f64) {
        self.0[i].set(v)
    }
}

impl Store for [AtomicU64] {
    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self[i].load(Ordering::Relaxed))
    }
    fn set(&self, i: usize, v: f64) {
        self[i].store(v.to_bits(), Ordering::Relaxed)
    }
}

/// Cumulative unigram^0.75 distribution over walk occurrences.
struct NegativeTable {
    cumulative: Vec<f64>,
    nodes: Vec<usize>,
}

impl NegativeTable {
    fn new(counts: &[u64]) -> Self {
        let mut cumulative = Vec::new();
        let mut nodes = Vec::new();
        let mut acc = 0.0;
        for (node, &c) in counts.iter().enumerate() {
            if c > 0 {
                acc += (c as f64).powf(0.75);
                cumulative.push(acc);
                nodes.push(node);
            }
        }
        Self { cumulative, nodes }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = self.cumulative[self.cumulative.len() - 1];
        let r = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= r);
        self.nodes[k.min(self.nodes.len() - 1)]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Trainer<'a, S: Store + ?Sized> {
    syn0: &'a S,
    syn1: &'a S,
    dim: usize,
    negatives: usize,
    table: &'a NegativeTable,
}

impl<S: Store + ?Sized> Trainer<'_, S> {
    fn pair<R: Rng>(&self, center: usize, context: usize, lr: f64, rng: &mut R, grad: &mut [f64]) {
        let dim = self.dim;
        let c0 = center * dim;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for d in 0..=self.negatives {
            let (target, label) = if d == 0 {
                (context, 1.0)
            } else {
                let t = self.table.sample(rng);
                if t == context {
                    continue;
                }
                (t, 0.0)
            };
            let t0 = target * dim;
            let mut f = 0.0;
            for k in 0..dim {
                f += self.syn0.get(c0 + k) * self.syn1.get(t0 + k);
            }
            let g = (label - sigmoid(f)) * lr;
            for k in 0..dim {
                let out = self.syn1.get(t0 + k);
                grad[k] += g * out;
                self.syn1.set(t0 + k, out + g * self.syn0.get(c0 + k));
            }
        }
        for k in 0..dim {
            self.syn0.set(c0 + k, self.syn0.get(c0 + k) + grad[k]);
        }
    }

    /// One pass over `walks`; `done` counts processed tokens for the lr schedule.
    fn run<R: Rng>(
        &self,
        walks: &[Vec<usize>],
        window: usize,
        lr0: f64,
        total_tokens: usize,
        done: &AtomicUsize,
        rng: &mut R,
    ) {
        let mut grad = vec![0.0; self.dim];
        for walk in walks {
            let progress = done.load(Ordering::Relaxed) as f64 / total_tokens as f64;
            let lr = lr0 * (1.0 - 0.99 * progress.min(1.0));
            for (pos, &center) in walk.iter().enumerate() {
                let lo = pos.saturating_sub(window);
                let hi = (pos + window + 1).min(walk.len());
                for (cpos, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if cpos != pos {
                        self.pair(center, context, lr, rng, &mut grad);
                    }
                }
            }
            done.fetch_add(walk.len(), Ordering::Relaxed);
        }
    }
}

/// Skip-gram with negative sampling over node sequences.
///
/// Every (center, context) pair within `window` positions is a positive example;
/// negatives are drawn from walk frequencies raised to 0.75. The learning rate
/// decays linearly to `lr / 100`. Returns input vectors for nodes that occur in
/// the walks and `None` for the rest.
pub fn train_skipgram(
    walks: &[Vec<usize>],
    n_nodes: usize,
    cfg: &SkipGramConfig,
) -> Result<Vec<Option<Vec<f64>>>> {
    cfg.validate()?;
    if !walks.iter().any(|w| w.len() >= 2) {
        return Err(Error::validation("need at least one walk of length 2"));
    }
    let mut counts = vec![0u64; n_nodes];
    for w in walks {
        for &n in w {
            if n >= n_nodes {
                return Err(Error::validation(format!("walk visits unknown node {n}")));
            }
            counts[n] += 1;
        }
    }
    let table = NegativeTable::new(&counts);
    let dim = cfg.dim;

    let mut init_rng = rng_from(derive_seed(cfg.seed, &[0]));
    let half = 0.5 / dim as f64;
    let init0: Vec<f64> = (0..n_nodes * dim)
        .map(|_| init_rng.random_range(-half..half))
        .collect();

    let total_tokens: usize = walks.iter().map(Vec::len).sum::<usize>() * cfg.epochs;
    let done = AtomicUsize::new(0);

    let syn0: Vec<f64> = match cfg.mode {
        TrainMode::Sequential => {
            let mut syn0 = init0;
            let mut syn1 = vec![0.0; n_nodes * dim];
            let s0 = Local(Cell::from_mut(syn0.as_mut_slice()).as_slice_of_cells());
            let s1 = Local(Cell::from_mut(syn1.as_mut_slice()).as_slice_of_cells());
            let trainer = Trainer {
                syn0: &s0,
                syn1: &s1,
                dim,
                negatives: cfg.negatives,
                table: &table,
            };
            let mut rng = rng_from(derive_seed(cfg.seed, &[1]));
            for _ in 0..cfg.epochs {
                trainer.run(walks, cfg.window, cfg.lr, total_tokens, &done, &mut rng);
            }
            syn0
        }
        TrainMode::Async { threads } => {
            let threads = threads.max(1);
            let syn0: Vec<AtomicU64> = init0.iter().map(|v| AtomicU64::new(v.to_bits())).collect();
            let syn1: Vec<AtomicU64> = (0..n_nodes * dim).map(|_| AtomicU64::new(0)).collect();
            let trainer = Trainer {
                syn0: syn0.as_slice(),
                syn1: syn1.as_slice(),
                dim,
                negatives: cfg.negatives,
                table: &table,
            };
            let chunk = walks.len().div_ceil(threads);
            std::thread::scope(|scope| {
                for (t, shard) in walks.chunks(chunk.max(1)).enumerate() {
                    let trainer = &trainer;
                    let done = &done;
                    scope.spawn(move || {
                        let mut rng = rng_from(derive_seed(cfg.seed, &[2, t as u64]));
                        for _ in 0..cfg.epochs {
                            trainer.run(shard, cfg.window, cfg.lr, total_tokens, done, &mut rng);
                        }
                    });
                }
            });
            syn0.iter().map(|a| f64::from_bits(a.load(Ordering::Relaxed))).collect()
        }
    };

    Ok((0..n_nodes)
        .map(|n| (counts[n] > 0).then(|| syn0[n * dim..(n + 1) * dim].to_vec()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::cosine;

    #[test]
    fn rejects_bad_config() {
        let walks = vec![vec![0, 1]];
        let cfg = SkipGramConfig {
            dim: 1,
            ..Default::default()
        };
        assert!(train_skipgram(&walks, 2, &cfg).is_err());
        let cfg = SkipGramConfig {
            window: 0,
            ..Default::default()
        };
        assert!(train_skipgram(&walks, 2, &cfg).is_err());
        assert!(train_skipgram(&[vec![0]], 2, &SkipGramConfig::default()).is_err());
    }

    #[test]
    fn components_separate() {
        // two triangles {0,1,2} and {3,4,5} with no path between them
        let mut rng = rng_from(9);
        let walks: Vec<Vec<usize>> = (0..60)
            .map(|i| {
                let base = if i % 2 == 0 { 0 } else { 3 };
                (0..20).map(|_| base + rng.random_range(0..3)).collect()
            })
            .collect();
        let cfg = SkipGramConfig {
            dim: 16,
            window: 3,
            negatives: 3,
            epochs: 5,
            seed: 5,
            ..Default::default()
        };
        let v = train_skipgram(&walks, 6, &cfg).unwrap();
        let cos = |a: usize, b: usize| cosine(v[a].as_ref().unwrap(), v[b].as_ref().unwrap()).unwrap();
        assert!(cos(0, 1) > cos(0, 3), "{} vs {}", cos(0, 1), cos(0, 3));
        assert!(cos(3, 4) > cos(1, 4));
    }

    #[test]
    fn unseen_node_has_no_vector() {
        let walks = vec![vec![0, 1, 0, 1]];
        let cfg = SkipGramConfig {
            dim: 4,
            ..Default::default()
        };
        let v = train_skipgram(&walks, 3, &cfg).unwrap();
        assert!(v[2].is_none());
        assert!(v[0].as_ref().unwrap().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn sequential_is_bit_reproducible() {
        let walks: Vec<Vec<usize>> = (0..10).map(|i| vec![i % 4, (i + 1) % 4, (i + 2) % 4]).collect();
        let cfg = SkipGramConfig {
            dim: 8,
            seed: 99,
            ..Default::default()
        };
        assert_eq!(
            train_skipgram(&walks, 4, &cfg).unwrap(),
            train_skipgram(&walks, 4, &cfg).unwrap()
        );
    }

    #[test]
    fn async_mode_produces_finite_vectors() {
        let walks: Vec<Vec<usize>> = (0..40).map(|i| vec![i % 5, (i + 1) % 5, (i + 3) % 5]).collect();
        let cfg = SkipGramConfig {
            dim: 8,
            mode: TrainMode::Async { threads: 3 },
            ..Default::default()
        };
        let v = train_skipgram(&walks, 5, &cfg).unwrap();
        assert!(v.iter().flatten().flatten().all(|x| x.is_finite()));
    }
}
