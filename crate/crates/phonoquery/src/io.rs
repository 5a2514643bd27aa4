//! On-disk formats: language bundles, step logs, datasets and posteriors.
//!
//! Every writer goes through a temporary file and a rename so an interrupted
//! grid run never leaves a truncated result behind.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use phonoquery_core::experiment::{language_rng, StepRecord};
use phonoquery_core::inference::{Label, Posterior};
use phonoquery_core::oracles::{build_atr_language, gen_language, Language, LanguageKind};
use phonoquery_core::phonology::{WordForm, CONSTRAINT_COUNT};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a run's language comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LanguageSource {
    /// ATR harmony with a lexicon and test set sampled from the seed.
    Atr,
    /// A procedurally generated language drawn from the seed.
    Generated,
    Bundle(std::path::PathBuf),
}

impl FromStr for LanguageSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "atr" => Ok(LanguageSource::Atr),
            "generated" => Ok(LanguageSource::Generated),
            "" => Err(Error::LanguageSource(s.to_owned())),
            path => Ok(LanguageSource::Bundle(path.into())),
        }
    }
}

impl LanguageSource {
    pub fn load(&self, seed: u64) -> Result<Language> {
        match self {
            LanguageSource::Atr => Ok(build_atr_language(&mut language_rng(seed))?),
            LanguageSource::Generated => Ok(gen_language(&mut language_rng(seed))?),
            LanguageSource::Bundle(path) => read_json(path),
        }
    }
}

pub fn language_for(kind: LanguageKind, seed: u64) -> Result<Language> {
    match kind {
        LanguageKind::Atr => LanguageSource::Atr.load(seed),
        LanguageKind::Generated => LanguageSource::Generated.load(seed),
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(Error::io(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(Error::json(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_atomic(path.as_ref(), |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        w.write_all(b"\n")
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(Error::io(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|source| Error::JsonLine { path: path.to_owned(), line: n + 1, source })?;
        out.push(value);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable record"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let text = to_jsonl(items);
    write_atomic(path.as_ref(), |w| w.write_all(text.as_bytes()))
}

pub(crate) fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let file = fs::File::create(&tmp).map_err(Error::io(&tmp))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(Error::io(&tmp))?;
    drop(w);
    fs::rename(&tmp, path).map_err(Error::io(path))
}

/// One observed judgment as stored in dataset files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub word: WordForm,
    pub label: Label,
    pub step: usize,
}

pub fn dataset_rows(records: &[StepRecord]) -> Vec<DatasetRow> {
    records.iter().map(|r| DatasetRow { word: r.word.clone(), label: r.label, step: r.step }).collect()
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>> {
    let mut rows: Vec<DatasetRow> = read_jsonl(path)?;
    rows.sort_by_key(|r| r.step);
    Ok(rows)
}

pub fn read_posterior(path: impl AsRef<Path>) -> Result<Posterior> {
    let post: Posterior = read_json(path.as_ref())?;
    if post.len() != CONSTRAINT_COUNT {
        return Err(phonoquery_core::Error::Dimension { expected: CONSTRAINT_COUNT, found: post.len() }.into());
    }
    Ok(post)
}

pub fn step_log(records: &[StepRecord]) -> String {
    to_jsonl(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_sources_parse() {
        assert_eq!("atr".parse::<LanguageSource>().unwrap(), LanguageSource::Atr);
        assert_eq!("generated".parse::<LanguageSource>().unwrap(), LanguageSource::Generated);
        assert_eq!(
            "runs/lang.json".parse::<LanguageSource>().unwrap(),
            LanguageSource::Bundle("runs/lang.json".into())
        );
        assert!("".parse::<LanguageSource>().is_err());
    }

    #[test]
    fn dataset_rows_sort_by_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let rows = vec![
            DatasetRow { word: "tɛpɪ".parse().unwrap(), label: Label::Acceptable, step: 1 },
            DatasetRow { word: "kɛkiqa".parse().unwrap(), label: Label::Unacceptable, step: 0 },
        ];
        write_jsonl(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"label\":1"));
        let back = read_dataset(&path).unwrap();
        assert_eq!(back[0], rows[1]);
        assert_eq!(back[1], rows[0]);
    }

    #[test]
    fn bad_lines_report_their_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        fs::write(&path, "{\"word\":\"pa\",\"label\":1,\"step\":0}\n\nnot json\n").unwrap();
        match read_dataset(&path) {
            Err(Error::JsonLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn posterior_length_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        write_json(&path, &vec![0.1; 3]).unwrap();
        assert!(read_posterior(&path).is_err());
        write_json(&path, &vec![0.1; CONSTRAINT_COUNT]).unwrap();
        assert_eq!(read_posterior(&path).unwrap().len(), CONSTRAINT_COUNT);
    }
}
