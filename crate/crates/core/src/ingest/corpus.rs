use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One original post. `hashtags` are lowercase and carry no leading `#`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub user_id: String,
    pub post_id: String,
    pub timestamp: i64,
    pub text: String,
    pub hashtags: Vec<String>,
}

/// A list of posts plus the user and hashtag sets derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    posts: Vec<Post>,
    users: BTreeSet<String>,
    hashtags: BTreeSet<String>,
}

impl Corpus {
    pub fn new(posts: Vec<Post>) -> Self {
        let users = posts.iter().map(|p| p.user_id.clone()).collect();
        let hashtags = posts
            .iter()
            .flat_map(|p| p.hashtags.iter().cloned())
            .collect();
        Self {
            posts,
            users,
            hashtags,
        }
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn users(&self) -> &BTreeSet<String> {
        &self.users
    }

    pub fn hashtags(&self) -> &BTreeSet<String> {
        &self.hashtags
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn into_posts(self) -> Vec<Post> {
        self.posts
    }

    /// Posts grouped by author, in corpus order within each user.
    pub fn posts_by_user(&self) -> BTreeMap<&str, Vec<&Post>> {
        let mut out: BTreeMap<&str, Vec<&Post>> = BTreeMap::new();
        for p in &self.posts {
            out.entry(p.user_id.as_str()).or_default().push(p);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[default]
    Jsonl,
    Csv,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(InputFormat::Jsonl),
            "csv" => Ok(InputFormat::Csv),
            other => Err(Error::validation(format!("unknown input format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Number of malformed records tolerated before loading fails. Zero fails on the first.
    pub max_rejects: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub rejected: usize,
}

pub fn normalize_hashtag(tag: &str) -> Option<String> {
    let t = tag.trim().trim_start_matches('#').to_lowercase();
    (!t.is_empty()).then_some(t)
}

/// Drop mention, URL and hashtag tokens and collapse whitespace.
pub fn clean_text(text: &str) -> String {
    text.split_whitespace()
        .filter(|tok| {
            let lower = tok.to_ascii_lowercase();
            !(lower.starts_with("http")
                || lower.starts_with("www.")
                || tok.starts_with('@')
                || tok.starts_with('#'))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn load_corpus(path: &Path, format: InputFormat, opts: LoadOptions) -> Result<LoadedCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut posts = Vec::new();
    let mut rejected = 0usize;
    let mut reject = |line: usize, message: String| -> Result<()> {
        rejected += 1;
        if rejected > opts.max_rejects {
            return Err(Error::Record {
                path: path.to_path_buf(),
                line,
                message,
            });
        }
        log::warn!("{}:{line}: skipping record: {message}", path.display());
        Ok(())
    };

    match format {
        InputFormat::Jsonl => {
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line_no = idx + 1;
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match parse_json_record(&line) {
                    Ok(p) => posts.push(p),
                    Err(msg) => reject(line_no, msg)?,
                }
            }
        }
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
            let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
            let col = |name: &str| headers.iter().position(|h| h.trim() == name);
            let cols = [
                col("user_id"),
                col("post_id"),
                col("timestamp"),
                col("text"),
                col("hashtags"),
            ];
            for rec in rdr.records() {
                let rec = rec.map_err(|e| Error::csv(path, e))?;
                let line_no = rec.position().map_or(0, |p| p.line() as usize);
                match parse_csv_record(&rec, &cols) {
                    Ok(p) => posts.push(p),
                    Err(msg) => reject(line_no, msg)?,
                }
            }
        }
    }

    Ok(LoadedCorpus {
        corpus: Corpus::new(posts),
        rejected,
    })
}

fn id_field(obj: &serde_json::Map<String, Value>, key: &str) -> std::result::Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(Value::String(_)) => Err(format!("field `{key}` is empty")),
        Some(_) => Err(format!("field `{key}` has the wrong type")),
        None => Err(format!("missing required field `{key}`")),
    }
}

fn parse_json_record(line: &str) -> std::result::Result<Post, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed json: {e}"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| "record is not a json object".to_string())?;
    let user_id = id_field(obj, "user_id")?;
    let post_id = id_field(obj, "post_id")?;
    let timestamp = match obj.get("timestamp") {
        Some(Value::Number(n)) => n
            .as_i64()
            .ok_or_else(|| "field `timestamp` must be an integer".to_string())?,
        Some(_) => return Err("field `timestamp` must be an integer".into()),
        None => return Err("missing required field `timestamp`".into()),
    };
    let text = match obj.get("text") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) => String::new(),
        Some(_) => return Err("field `text` must be a string".into()),
        None => return Err("missing required field `text`".into()),
    };
    let hashtags = match obj.get("hashtags") {
        Some(Value::Array(tags)) => tags
            .iter()
            .map(|t| {
                t.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| "field `hashtags` must hold strings".to_string())
            })
            .collect::<std::result::Result<Vec<_>, _>>()?,
        Some(_) => return Err("field `hashtags` must be an array".into()),
        None => return Err("missing required field `hashtags`".into()),
    };
    build_post(user_id, post_id, timestamp, text, &hashtags)
}

fn parse_csv_record(
    rec: &csv::StringRecord,
    cols: &[Option<usize>; 5],
) -> std::result::Result<Post, String> {
    const NAMES: [&str; 5] = ["user_id", "post_id", "timestamp", "text", "hashtags"];
    let mut vals = Vec::with_capacity(5);
    for (name, col) in NAMES.iter().zip(cols) {
        let v = col
            .and_then(|c| rec.get(c))
            .ok_or_else(|| format!("missing required field `{name}`"))?;
        vals.push(v.trim().to_string());
    }
    if vals[0].is_empty() || vals[1].is_empty() {
        return Err("empty user_id or post_id".into());
    }
    if vals[2].is_empty() {
        return Err("missing required field `timestamp`".into());
    }
    let timestamp: i64 = vals[2]
        .parse()
        .map_err(|_| format!("timestamp `{}` is not an integer", vals[2]))?;
    let tags: Vec<String> = vals[4]
        .split(|c: char| c.is_whitespace() || c == ';')
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect();
    build_post(
        vals[0].clone(),
        vals[1].clone(),
        timestamp,
        vals[3].clone(),
        &tags,
    )
}

fn build_post(
    user_id: String,
    post_id: String,
    timestamp: i64,
    text: String,
    tags: &[String],
) -> std::result::Result<Post, String> {
    if timestamp < 0 {
        return Err(format!("negative timestamp {timestamp}"));
    }
    Ok(Post {
        user_id,
        post_id,
        timestamp,
        text,
        hashtags: tags.iter().filter_map(|t| normalize_hashtag(t)).collect(),
    })
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in corpus.posts() {
        let line = serde_json::to_string(p).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Dedup by post id (first occurrence wins), clean text, drop hashtag-less posts,
/// then drop users left with fewer than two posts.
pub fn preprocess(corpus: &Corpus) -> Result<Corpus> {
    let mut seen = HashSet::new();
    let mut posts: Vec<Post> = corpus
        .posts()
        .iter()
        .filter(|p| seen.insert(p.post_id.as_str()))
        .cloned()
        .collect();
    let duplicates = corpus.len() - posts.len();

    for p in &mut posts {
        p.text = clean_text(&p.text);
        p.hashtags = p
            .hashtags
            .iter()
            .filter_map(|t| normalize_hashtag(t))
            .collect();
    }
    posts.retain(|p| !p.hashtags.is_empty());

    let mut dropped_users = 0usize;
    loop {
        let mut per_user: HashMap<&str, usize> = HashMap::new();
        for p in &posts {
            *per_user.entry(p.user_id.as_str()).or_default() += 1;
        }
        let sparse: HashSet<String> = per_user
            .into_iter()
            .filter(|&(_, n)| n < 2)
            .map(|(u, _)| u.to_owned())
            .collect();
        if sparse.is_empty() {
            break;
        }
        dropped_users += sparse.len();
        posts.retain(|p| !sparse.contains(&p.user_id));
    }

    log::info!(
        "preprocess: {} posts in, {} duplicates, {} users dropped, {} posts kept",
        corpus.len(),
        duplicates,
        dropped_users,
        posts.len()
    );
    if posts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus::new(posts))
}
