use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub speaker_id: String,
    pub utterance_id: String,
    /// Resolved path; relative paths in a manifest file are taken relative
    /// to the file's directory.
    pub wav_path: PathBuf,
    pub split: Split,
}

/// Speaker/utterance listing with a train/test split.
///
/// On disk this is a CSV with columns `speaker_id,utterance_id,wav_path,split`,
/// optionally preceded by `# key=value` metadata lines (`corpus`,
/// `sample_rate`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub corpus: String,
    pub sample_rate: Option<u32>,
    pub entries: Vec<ManifestEntry>,
}

const HEADER: [&str; 4] = ["speaker_id", "utterance_id", "wav_path", "split"];

impl DatasetManifest {
    pub fn new(corpus: impl Into<String>, sample_rate: Option<u32>, entries: Vec<ManifestEntry>) -> Self {
        Self {
            corpus: corpus.into(),
            sample_rate,
            entries,
        }
    }

    /// Sorted distinct speaker ids; a speaker's label is its index here.
    pub fn speakers(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.speaker_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn speaker_labels(&self) -> BTreeMap<String, usize> {
        self.speakers().into_iter().enumerate().map(|(i, s)| (s, i)).collect()
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    /// Non-empty, no duplicate (speaker, utterance) pairs, every speaker in
    /// both splits.
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Manifest("no entries".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.speaker_id.is_empty() || e.utterance_id.is_empty() {
                return Err(Error::Manifest("empty speaker or utterance id".into()));
            }
            if !seen.insert((&e.speaker_id, &e.utterance_id)) {
                return Err(Error::Manifest(format!(
                    "duplicate entry {}/{}",
                    e.speaker_id, e.utterance_id
                )));
            }
        }
        for s in self.speakers() {
            for split in [Split::Train, Split::Test] {
                if !self.entries.iter().any(|e| e.speaker_id == s && e.split == split) {
                    return Err(Error::Manifest(format!("speaker {s} has no {split} entries")));
                }
            }
        }
        Ok(())
    }
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "# corpus={}", manifest.corpus).map_err(io)?;
    if let Some(sr) = manifest.sample_rate {
        writeln!(out, "# sample_rate={sr}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for e in &manifest.entries {
        let p = e.wav_path.strip_prefix(base).unwrap_or(&e.wav_path);
        w.write_record([
            e.speaker_id.as_str(),
            e.utterance_id.as_str(),
            &p.to_string_lossy(),
            &e.split.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut corpus = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut sample_rate = None;
    let mut body = String::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(meta) = line.trim_start().strip_prefix('#') {
            if let Some((k, v)) = meta.split_once('=') {
                match k.trim() {
                    "corpus" => corpus = v.trim().to_string(),
                    "sample_rate" => {
                        sample_rate = Some(v.trim().parse().map_err(|_| {
                            Error::Manifest(format!("bad sample_rate {:?}", v.trim()))
                        })?)
                    }
                    _ => {}
                }
            }
            continue;
        }
        body.push_str(&line);
        body.push('\n');
    }
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Manifest(format!(
            "expected header {}, found {}",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut entries = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let wav = PathBuf::from(&rec[2]);
        entries.push(ManifestEntry {
            speaker_id: rec[0].to_string(),
            utterance_id: rec[1].to_string(),
            wav_path: if wav.is_absolute() { wav } else { base.join(wav) },
            split: rec[3].parse()?,
        });
    }
    let m = DatasetManifest {
        corpus,
        sample_rate,
        entries,
    };
    m.validate()?;
    Ok(m)
}
