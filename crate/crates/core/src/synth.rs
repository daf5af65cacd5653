//! Synthetic stand-ins for the Stack Overflow data: labelled pairs whose
//! classes differ in how much topical vocabulary the two sides share, and
//! plain token corpora for embedding experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::task::Task;
use crate::text::{QuestionText, RawRecord};

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const FILLER: [&str; 24] = [
    "error", "method", "class", "return", "value", "string", "object", "list", "array", "server", "client",
    "request", "output", "input", "library", "version", "problem", "example", "project", "build", "window",
    "thread", "memory", "query",
];

/// Settings for [`generate_pairs`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub topics: usize,
    pub words_per_topic: usize,
    /// Fraction of y's topic words copied from x, per class
    /// (duplicate, direct, indirect, isolated).
    pub shared: [f64; 4],
    /// Fraction of words drawn from the shared filler pool.
    pub filler_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            topics: 8,
            words_per_topic: 30,
            shared: [0.85, 0.4, 0.1, 0.0],
            filler_rate: 0.2,
        }
    }
}

/// Pronounceable made-up words, unique, grouped by topic.
fn topic_lexicon(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let mut seen = std::collections::HashSet::new();
    let mut topics = Vec::with_capacity(cfg.topics);
    for _ in 0..cfg.topics {
        let mut words = Vec::with_capacity(cfg.words_per_topic);
        while words.len() < cfg.words_per_topic {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(rng).expect("non-empty"));
                w.push_str(VOWELS.choose(rng).expect("non-empty"));
            }
            w.push_str(ONSETS.choose(rng).expect("non-empty"));
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        topics.push(words);
    }
    topics
}

struct Writer<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
}

impl Writer<'_> {
    fn word(&mut self, topic: &[String], source: &[String], shared: f64) -> String {
        if self.rng.gen_bool(self.cfg.filler_rate) {
            return FILLER.choose(&mut self.rng).expect("non-empty").to_string();
        }
        if !source.is_empty() && self.rng.gen_bool(shared) {
            return source.choose(&mut self.rng).expect("non-empty").clone();
        }
        topic.choose(&mut self.rng).expect("non-empty").clone()
    }

    fn words(&mut self, n: usize, topic: &[String], source: &[String], shared: f64) -> Vec<String> {
        (0..n).map(|_| self.word(topic, source, shared)).collect()
    }

    /// Builds one question with some markup noise; returns it and its content words.
    fn question(&mut self, id: String, topic: &[String], source: &[String], shared: f64) -> (QuestionText, Vec<String>) {
        let n_title = self.rng.gen_range(4..=7);
        let n_body = self.rng.gen_range(10..=20);
        let title = self.words(n_title, topic, source, shared);
        let body = self.words(n_body, topic, source, shared);
        let mut all = title.clone();
        all.extend(body.iter().cloned());
        let mut body_text = format!("<p>{}</p>", body.join(" "));
        if self.rng.gen_bool(0.3) {
            body_text.push_str("<pre><code>int x = 42;\nreturn x;</code></pre>");
        }
        if self.rng.gen_bool(0.2) {
            body_text.push_str(&format!(" see https://example.org/q/{}", self.rng.gen_range(1..9999)));
        }
        let mut answers = Vec::new();
        for _ in 0..self.rng.gen_range(0..=2) {
            let n = self.rng.gen_range(5..=12);
            let a = self.words(n, topic, source, shared);
            all.extend(a.iter().cloned());
            answers.push(a.join(" "));
        }
        let answers = if answers.is_empty() {
            "null".to_string()
        } else {
            answers.join(" ")
        };
        (
            QuestionText {
                id,
                title: capitalize(&title.join(" ")),
                body: body_text,
                answers,
            },
            all,
        )
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// `n` labelled pairs with balanced classes, in shuffled order.
///
/// Four-class relations: duplicate and direct pairs share a topic with
/// high and medium word overlap, indirect pairs use the neighbouring topic
/// with light overlap, isolated pairs use an unrelated topic. For the binary
/// task, non-duplicates are drawn from the three non-duplicate relations.
pub fn generate_pairs(n: usize, task: Task, seed: u64, cfg: &SynthConfig) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = topic_lexicon(cfg, &mut rng);
    let mut labels: Vec<usize> = (0..n).map(|i| i % task.num_classes()).collect();
    labels.shuffle(&mut rng);
    let mut w = Writer {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)),
    };
    let t = cfg.topics;
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let relation = match task {
                Task::Ku4 => label,
                Task::Binary if label == 0 => 0,
                Task::Binary => w.rng.gen_range(1..4),
            };
            let tx = w.rng.gen_range(0..t);
            let ty = match relation {
                0 | 1 => tx,
                2 => (tx + 1) % t,
                _ => (tx + t / 2 + w.rng.gen_range(0..(t / 4).max(1))) % t,
            };
            let (x, x_words) = w.question(format!("q{}", 2 * i), &lexicon[tx], &[], 0.0);
            let topical: Vec<String> = x_words.into_iter().filter(|s| !FILLER.contains(&s.as_str())).collect();
            let (y, _) = w.question(format!("q{}", 2 * i + 1), &lexicon[ty], &topical, cfg.shared[relation]);
            RawRecord {
                pair_id: format!("syn-{i:05}"),
                x,
                y,
                label,
                task,
            }
        })
        .collect()
}

/// Token sequences of roughly `n_tokens` words in total, each sentence
/// drawn from one topic plus filler.
pub fn generate_corpus(n_tokens: usize, seed: u64) -> Vec<Vec<String>> {
    let cfg = SynthConfig {
        words_per_topic: 12,
        ..SynthConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = topic_lexicon(&cfg, &mut rng);
    let mut out = Vec::new();
    let mut total = 0;
    while total < n_tokens {
        let topic = &lexicon[rng.gen_range(0..cfg.topics)];
        let len = rng.gen_range(8..=14).min(n_tokens - total);
        let sentence: Vec<String> = (0..len)
            .map(|_| {
                if rng.gen_bool(cfg.filler_rate) {
                    FILLER.choose(&mut rng).expect("non-empty").to_string()
                } else {
                    topic.choose(&mut rng).expect("non-empty").clone()
                }
            })
            .collect();
        total += sentence.len();
        out.push(sentence);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::label_histogram;

    #[test]
    fn balanced_and_deterministic() {
        let a = generate_pairs(100, Task::Ku4, 3, &SynthConfig::default());
        let b = generate_pairs(100, Task::Ku4, 3, &SynthConfig::default());
        assert_eq!(a, b);
        assert!(label_histogram(&a).values().all(|&c| c == 25));
    }

    #[test]
    fn binary_labels() {
        let a = generate_pairs(10, Task::Binary, 1, &SynthConfig::default());
        assert!(a.iter().all(|r| r.label < 2 && r.task == Task::Binary));
    }

    #[test]
    fn corpus_size() {
        let c = generate_corpus(1000, 5);
        assert_eq!(c.iter().map(Vec::len).sum::<usize>(), 1000);
    }
}
