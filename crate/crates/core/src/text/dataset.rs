//! Tab-separated dataset files.
//!
//! Knowledge-unit files carry ten columns:
//! `pair_id, x_id, x_title, x_body, x_answers, y_id, y_title, y_body, y_answers, label`.
//! AskUbuntu files carry six: `pair_id, x_title, x_body, y_title, y_body, label`.
//! Tabs, newlines and backslashes inside fields are escaped as `\t`, `\n`
//! and `\\`. A first line starting with `pair_id` is treated as a header.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::Task;

pub const KU_COLUMNS: [&str; 10] = [
    "pair_id", "x_id", "x_title", "x_body", "x_answers", "y_id", "y_title", "y_body", "y_answers", "label",
];
pub const ASKUBUNTU_COLUMNS: [&str; 6] = ["pair_id", "x_title", "x_body", "y_title", "y_body", "label"];

/// Question text of one side of a pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionText {
    pub id: String,
    pub title: String,
    pub body: String,
    pub answers: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub pair_id: String,
    pub x: QuestionText,
    pub y: QuestionText,
    /// Class index under `task`.
    pub label: usize,
    pub task: Task,
}

impl RawRecord {
    pub fn label_name(&self) -> &'static str {
        self.task.label_name(self.label)
    }
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Joins several answers into one text, highest score first when scores
/// are known (ties and unscored answers keep their given order).
pub fn join_answers(answers: &[(String, Option<i64>)]) -> String {
    let mut ordered: Vec<&(String, Option<i64>)> = answers.iter().collect();
    if answers.iter().all(|(_, s)| s.is_some()) {
        ordered.sort_by_key(|(_, s)| std::cmp::Reverse(s.unwrap_or(0)));
    }
    ordered
        .iter()
        .map(|(t, _)| t.trim())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// The literal "null" marks a missing part in the published data.
fn normalize_part(s: String) -> String {
    if s.trim().eq_ignore_ascii_case("null") {
        String::new()
    } else {
        s
    }
}

fn parse_rows<R: BufRead>(
    reader: R,
    path: &Path,
    columns: usize,
    task: Task,
    build: impl Fn(Vec<String>, usize) -> RawRecord,
) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if line_no == 1 && fields[0] == "pair_id" {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        if fields.len() != columns {
            return Err(parse_err(format!("expected {columns} columns, found {}", fields.len())));
        }
        let label_text = fields[columns - 1].trim();
        let label = task
            .label_index(label_text)
            .ok_or_else(|| parse_err(format!("unknown label '{label_text}' for task {task}")))?;
        let fields: Vec<String> = fields.iter().map(|f| unescape_field(f)).collect();
        if !seen.insert(fields[0].clone()) {
            return Err(parse_err(format!("duplicate pair_id '{}'", fields[0])));
        }
        records.push(build(fields, label));
    }
    report_counts(path, task, &records);
    Ok(records)
}

fn report_counts(path: &Path, task: Task, records: &[RawRecord]) {
    if records.is_empty() {
        log::warn!("{}: no records", path.display());
        return;
    }
    let hist = label_histogram(records);
    let summary: Vec<String> = hist.iter().map(|(k, v)| format!("{}={v}", task.label_name(*k))).collect();
    log::info!("{}: {} records ({})", path.display(), records.len(), summary.join(", "));
}

/// Count of records per class index.
pub fn label_histogram(records: &[RawRecord]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for r in records {
        *hist.entry(r.label).or_insert(0) += 1;
    }
    hist
}

pub fn parse_ku_reader<R: BufRead>(reader: R, path: &Path) -> Result<Vec<RawRecord>> {
    parse_rows(reader, path, KU_COLUMNS.len(), Task::Ku4, |mut f, label| {
        let mut take = |i: usize| std::mem::take(&mut f[i]);
        RawRecord {
            pair_id: take(0),
            x: QuestionText {
                id: take(1),
                title: normalize_part(take(2)),
                body: normalize_part(take(3)),
                answers: normalize_part(take(4)),
            },
            y: QuestionText {
                id: take(5),
                title: normalize_part(take(6)),
                body: normalize_part(take(7)),
                answers: normalize_part(take(8)),
            },
            label,
            task: Task::Ku4,
        }
    })
}

pub fn parse_askubuntu_reader<R: BufRead>(reader: R, path: &Path) -> Result<Vec<RawRecord>> {
    parse_rows(reader, path, ASKUBUNTU_COLUMNS.len(), Task::Binary, |mut f, label| {
        let mut take = |i: usize| std::mem::take(&mut f[i]);
        RawRecord {
            pair_id: take(0),
            x: QuestionText {
                id: String::new(),
                title: normalize_part(take(1)),
                body: normalize_part(take(2)),
                answers: String::new(),
            },
            y: QuestionText {
                id: String::new(),
                title: normalize_part(take(3)),
                body: normalize_part(take(4)),
                answers: String::new(),
            },
            label,
            task: Task::Binary,
        }
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn parse_ku_dataset(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    parse_ku_reader(open(path)?, path)
}

pub fn parse_askubuntu(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    parse_askubuntu_reader(open(path)?, path)
}

/// Parses a file in the column format belonging to `task`.
pub fn parse_dataset(path: impl AsRef<Path>, task: Task) -> Result<Vec<RawRecord>> {
    match task {
        Task::Ku4 => parse_ku_dataset(path),
        Task::Binary => parse_askubuntu(path),
    }
}

/// Writes records in the column format of their task, with a header line.
pub fn write_dataset<W: Write>(mut out: W, records: &[RawRecord], task: Task) -> std::io::Result<()> {
    let header: &[&str] = match task {
        Task::Ku4 => &KU_COLUMNS,
        Task::Binary => &ASKUBUNTU_COLUMNS,
    };
    writeln!(out, "{}", header.join("\t"))?;
    for r in records {
        let fields: Vec<String> = match task {
            Task::Ku4 => vec![
                r.pair_id.clone(),
                r.x.id.clone(),
                r.x.title.clone(),
                r.x.body.clone(),
                r.x.answers.clone(),
                r.y.id.clone(),
                r.y.title.clone(),
                r.y.body.clone(),
                r.y.answers.clone(),
                task.label_name(r.label).to_string(),
            ],
            Task::Binary => vec![
                r.pair_id.clone(),
                r.x.title.clone(),
                r.x.body.clone(),
                r.y.title.clone(),
                r.y.body.clone(),
                task.label_name(r.label).to_string(),
            ],
        };
        let escaped: Vec<String> = fields.iter().map(|f| escape_field(f)).collect();
        writeln!(out, "{}", escaped.join("\t"))?;
    }
    Ok(())
}

/// Shuffles with `seed` and cuts into consecutive pieces by `fractions`;
/// the last piece takes the remainder.
pub fn split_records<T: Clone>(records: &[T], fractions: &[f64], seed: u64) -> Vec<Vec<T>> {
    let mut shuffled = records.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = shuffled.len();
    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for (i, f) in fractions.iter().enumerate() {
        let end = if i + 1 == fractions.len() {
            n
        } else {
            (start + (f * n as f64).round() as usize).min(n)
        };
        out.push(shuffled[start..end].to_vec());
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse_ku(text: &str) -> Result<Vec<RawRecord>> {
        parse_ku_reader(Cursor::new(text), Path::new("mem.tsv"))
    }

    const TABLE1_DUPLICATE: &str = "p1\t36734301\tHow to declare a call a 2d array in java\tI am trying to read an image's pixels and fill them in a 2d array however I do not know how to declare a global array any help please\tnull\t19894714\tHow can I create 2D arrays in java\tHow would I go about designing something like this using 2D arrays in java\tYou would replace name with what you would like to name the array\tduplicate\n";

    #[test]
    fn parses_published_duplicate_example() {
        let recs = parse_ku(TABLE1_DUPLICATE).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].label_name(), "duplicate");
        assert_eq!(recs[0].x.id, "36734301");
        assert_eq!(recs[0].y.id, "19894714");
        assert_eq!(recs[0].x.answers, "");
    }

    #[test]
    fn empty_file_gives_no_records() {
        assert!(parse_ku("").unwrap().is_empty());
    }

    #[test]
    fn unknown_label_names_the_row() {
        let text = format!("{}{}", TABLE1_DUPLICATE, TABLE1_DUPLICATE.replace("p1", "p2").replace("duplicate\n", "related\n"));
        match parse_ku(&text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("related"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn column_count_mismatch() {
        assert!(matches!(parse_ku("a\tb\tduplicate\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_pair_ids_rejected() {
        let text = format!("{TABLE1_DUPLICATE}{TABLE1_DUPLICATE}");
        assert!(matches!(parse_ku(&text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn askubuntu_examples() {
        let text = "pair_id\tx_title\tx_body\ty_title\ty_body\tlabel\n\
            a1\tWhere can I find the source code of Ubuntu?\tI would like to know where to find the source code of Ubuntu 12.04.\tHow can I know which is the source of an specific standard shared libraries?\tHow can I get access to the source code of standard shared libraries?\tduplicate\n\
            a2\tGrafics on Thinkpad R50e\tAfter installing Ubuntu 12.04 LTS on a Thinkpad R50e, there is no graphics driver.\tHow to share files between Windows7(Guest) and Ubuntu 12.04(Host)?\tI searched on the internet but all issues have Ubuntu as the Guest.\tnon-duplicate\n";
        let recs = parse_askubuntu_reader(Cursor::new(text), Path::new("au.tsv")).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].label_name(), "duplicate");
        assert_eq!(recs[1].label_name(), "non-duplicate");
        assert_eq!(recs[1].x.answers, "");
        let bad = "a3\tonly\tthree\n";
        assert!(matches!(
            parse_askubuntu_reader(Cursor::new(bad), Path::new("au.tsv")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn escapes_roundtrip() {
        let s = "tab\there\nnew line \\ backslash";
        assert_eq!(unescape_field(&escape_field(s)), s);
        assert!(!escape_field(s).contains('\t'));
    }

    #[test]
    fn answers_join_by_score() {
        let answers = vec![("low".to_string(), Some(1)), ("high".to_string(), Some(9))];
        assert_eq!(join_answers(&answers), "high low");
        let unscored = vec![("first".to_string(), None), ("second".to_string(), Some(5))];
        assert_eq!(join_answers(&unscored), "first second");
    }

    #[test]
    fn split_keeps_every_record() {
        let items: Vec<u32> = (0..100).collect();
        let parts = split_records(&items, &[0.6, 0.1, 0.3], 3);
        assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), vec![60, 10, 30]);
        let mut all: Vec<u32> = parts.concat();
        all.sort();
        assert_eq!(all, items);
    }
}
