use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_corpus, write_embeddings, Corpus, EmbeddingTable, Post};
use crate::util::{norm, rng_from, stage_seed};

/// Parameters of a synthetic corpus with planted coordination.
///
/// Organic users each follow one topic. A share of their posts uses that
/// topic's popular hashtags, the rest draw from a long tail shared by all
/// topics, and posting times follow exponential gaps. Coordinated users are
/// split into groups; each group hijacks the popular hashtags of one topic in
/// bursts where every member posts a near-duplicate message within
/// `coordination_window_secs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_organic_users: usize,
    pub n_coordinated_users: usize,
    pub coordination_groups: usize,
    pub topics: usize,
    pub popular_hashtags_per_topic: usize,
    pub long_tail_hashtags: usize,
    pub organic_posts_min: usize,
    pub organic_posts_max: usize,
    /// Probability that an organic post uses a popular hashtag of its topic.
    pub topic_share: f64,
    pub mean_gap_hours: f64,
    pub time_span_days: f64,
    pub bursts_per_group: usize,
    pub coordination_window_secs: i64,
    /// Standard deviation of per-component noise around a burst's message vector.
    pub duplicate_noise: f64,
    pub embedding_dim: usize,
    pub start_timestamp: i64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_organic_users: 500,
            n_coordinated_users: 20,
            coordination_groups: 4,
            topics: 4,
            popular_hashtags_per_topic: 40,
            long_tail_hashtags: 5000,
            organic_posts_min: 4,
            organic_posts_max: 12,
            topic_share: 0.25,
            mean_gap_hours: 18.0,
            time_span_days: 60.0,
            bursts_per_group: 80,
            coordination_window_secs: 300,
            duplicate_noise: 0.02,
            embedding_dim: 32,
            start_timestamp: 1_600_000_000,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_coordinated_users > 0 && self.coordination_groups == 0 {
            return Err(Error::validation("coordinated users need at least one group"));
        }
        if self.topics == 0 || self.popular_hashtags_per_topic == 0 || self.long_tail_hashtags == 0 {
            return Err(Error::validation("hashtag pools must be non-empty"));
        }
        if self.organic_posts_min < 2 || self.organic_posts_max < self.organic_posts_min {
            return Err(Error::validation("organic post counts must satisfy 2 <= min <= max"));
        }
        if !(0.0..=1.0).contains(&self.topic_share) {
            return Err(Error::validation("topic_share must be in [0, 1]"));
        }
        if self.n_coordinated_users > 0 && self.bursts_per_group < 2 {
            return Err(Error::validation("need at least 2 bursts per group"));
        }
        if self.coordination_window_secs < 1 {
            return Err(Error::validation("coordination window must be positive"));
        }
        // the planted signal must sit well below organic posting gaps
        if self.coordination_window_secs as f64 * 10.0 > self.mean_gap_hours * 3600.0 {
            return Err(Error::validation(
                "coordination window must be much shorter than the organic posting gap",
            ));
        }
        if !(self.time_span_days > 0.0 && self.mean_gap_hours > 0.0) {
            return Err(Error::validation("time span and posting gap must be positive"));
        }
        if self.embedding_dim < 2 || !(self.duplicate_noise >= 0.0) {
            return Err(Error::validation("bad embedding parameters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub embeddings: EmbeddingTable,
    pub coordinated_users: BTreeSet<String>,
    /// Pairs of users in the same coordination group, as `(a, b)` with `a < b`.
    pub coordinated_pairs: BTreeSet<(String, String)>,
}

impl SynthCorpus {
    pub fn is_coordinated_pair(&self, a: &str, b: &str) -> bool {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.coordinated_pairs.contains(&(a.to_string(), b.to_string()))
    }

    /// Write `posts.jsonl`, `embeddings.jsonl` and `truth.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_corpus(&dir.join("posts.jsonl"), &self.corpus)?;
        write_embeddings(&dir.join("embeddings.jsonl"), &self.embeddings, false)?;
        let path = dir.join("truth.csv");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&path, e);
        writeln!(w, "user_a,user_b").map_err(io)?;
        for (a, b) in &self.coordinated_pairs {
            writeln!(w, "{a},{b}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn words<R: Rng>(rng: &mut R, prefix: &str, count: usize, vocab: usize) -> String {
    (0..count)
        .map(|_| format!("{prefix}{}", rng.random_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn synth_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = rng_from(stage_seed(spec.seed, "synth"));
    let dim = spec.embedding_dim;
    let span = (spec.time_span_days * 86_400.0) as i64;
    let gap = Exp::new(1.0 / (spec.mean_gap_hours * 3600.0))
        .map_err(|e| Error::validation(e.to_string()))?;
    let popular = |topic: usize, k: usize| format!("topic{topic}_{k:02}");

    let mut posts = Vec::new();
    let mut embeddings = EmbeddingTable::new(dim)?;
    let mut next_id = 0usize;
    let mut push = |posts: &mut Vec<Post>,
                    table: &mut EmbeddingTable,
                    user: &str,
                    timestamp: i64,
                    text: String,
                    tags: Vec<String>,
                    v: Vec<f64>|
     -> Result<()> {
        let post_id = format!("p{next_id:07}");
        next_id += 1;
        table.insert(post_id.clone(), v)?;
        posts.push(Post {
            user_id: user.to_string(),
            post_id,
            timestamp,
            text,
            hashtags: tags,
        });
        Ok(())
    };

    for u in 0..spec.n_organic_users {
        let user = format!("org{u:04}");
        let topic = u % spec.topics;
        let n_posts = rng.random_range(spec.organic_posts_min..=spec.organic_posts_max);
        let mut t = rng.random_range(0..span) as f64;
        for _ in 0..n_posts {
            let tag = if rng.random_bool(spec.topic_share) {
                popular(topic, rng.random_range(0..spec.popular_hashtags_per_topic))
            } else {
                format!("tail{:05}", rng.random_range(0..spec.long_tail_hashtags))
            };
            let text = format!("{} #{tag}", words(&mut rng, "w", 6, 2000));
            let v = unit_vector(&mut rng, dim);
            let ts = spec.start_timestamp + (t as i64).rem_euclid(span);
            push(&mut posts, &mut embeddings, &user, ts, text, vec![tag], v)?;
            t += gap.sample(&mut rng);
        }
    }

    let mut coordinated_users = BTreeSet::new();
    let mut coordinated_pairs = BTreeSet::new();
    let groups = spec.coordination_groups.min(spec.n_coordinated_users);
    for g in 0..groups {
        let members: Vec<String> = (0..spec.n_coordinated_users)
            .filter(|c| c % groups == g)
            .map(|c| format!("coord{c:03}"))
            .collect();
        for (i, a) in members.iter().enumerate() {
            coordinated_users.insert(a.clone());
            for b in &members[i + 1..] {
                coordinated_pairs.insert((a.clone(), b.clone()));
            }
        }
        let topic = g % spec.topics;
        for _ in 0..spec.bursts_per_group {
            let tag = popular(topic, rng.random_range(0..spec.popular_hashtags_per_topic));
            let start = spec.start_timestamp + rng.random_range(0..span);
            let message = unit_vector(&mut rng, dim);
            let text = words(&mut rng, "c", 8, 200);
            for m in &members {
                let offset = rng.random_range(0..spec.coordination_window_secs);
                let v: Vec<f64> = message
                    .iter()
                    .map(|x| x + spec.duplicate_noise * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let body = format!("{text} #{tag}");
                push(&mut posts, &mut embeddings, m, start + offset, body, vec![tag.clone()], v)?;
            }
        }
    }

    Ok(SynthCorpus {
        corpus: Corpus::new(posts),
        embeddings,
        coordinated_users,
        coordinated_pairs,
    })
}
