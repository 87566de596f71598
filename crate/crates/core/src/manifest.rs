//! Dataset manifests: enumerated sub-image records with split and origin.
//!
//! Text form is one record per line, tab separated:
//! `hr_path <TAB> lr_path|- <TAB> origin <TAB> split`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Observed,
    Synthetic,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

macro_rules! text_enum {
    ($t:ty { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $s),+ })
            }
        }

        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($s => Ok(Self::$variant),)+
                    other => Err(format!("unknown {} {other:?}", stringify!($t).to_lowercase())),
                }
            }
        }
    };
}

text_enum!(Origin { Observed => "observed", Synthetic => "synthetic", Analytic => "analytic" });
text_enum!(Split { Train => "train", Val => "val" });

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub hr_path: PathBuf,
    pub lr_path: Option<PathBuf>,
    pub origin: Origin,
    pub split: Split,
}

impl Record {
    /// Stem of the HR file name, used as the image id in metric reports.
    pub fn image_id(&self) -> String {
        self.hr_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    records: Vec<Record>,
}

impl DatasetManifest {
    /// Rejects duplicate `(hr_path, lr_path)` entries.
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert((r.hr_path.clone(), r.lr_path.clone())) {
                return Err(Error::DuplicateRecord(r.hr_path.display().to_string()));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    /// First `n` records in manifest order.
    pub fn take(&self, n: usize) -> Self {
        Self {
            records: self.records.iter().take(n).cloned().collect(),
        }
    }

    pub fn with_split(&self, split: Split) -> Self {
        Self {
            records: self.records.iter().filter(|r| r.split == split).cloned().collect(),
        }
    }

    /// Every referenced file must exist.
    pub fn check_paths(&self) -> Result<()> {
        for r in &self.records {
            for p in std::iter::once(&r.hr_path).chain(r.lr_path.as_ref()) {
                if !p.is_file() {
                    return Err(Error::FileNotFound(p.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let lr = r
                .lr_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!("{}\t{}\t{}\t{}\n", r.hr_path.display(), lr, r.origin, r.split));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| Error::MalformedManifest { line: i + 1, reason };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(malformed(format!("expected 4 fields, found {}", fields.len())));
            }
            records.push(Record {
                hr_path: PathBuf::from(fields[0]),
                lr_path: (fields[1] != "-").then(|| PathBuf::from(fields[1])),
                origin: fields[2].parse().map_err(malformed)?,
                split: fields[3].parse().map_err(malformed)?,
            });
        }
        Self::new(records)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

impl FromIterator<Record> for DatasetManifest {
    /// Collects without the duplicate check; use [`DatasetManifest::new`]
    /// for untrusted input.
    fn from_iter<I: IntoIterator<Item = Record>>(iter: I) -> Self {
        Self {
            records: iter.into_iter().collect(),
        }
    }
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_png = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("png"))
            .unwrap_or(false);
        if is_png && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Enumerates `hr_dir`, pairing each file with the same-named file in
/// `lr_dir` when given. Records are sorted by HR path.
pub fn build_manifest(hr_dir: &Path, lr_dir: Option<&Path>, split: Split, origin: Origin) -> Result<DatasetManifest> {
    let hr_files = png_files(hr_dir)?;
    if hr_files.is_empty() {
        return Err(Error::EmptyDirectory(hr_dir.to_owned()));
    }
    let mut records = Vec::with_capacity(hr_files.len());
    for hr_path in hr_files {
        let lr_path = match lr_dir {
            Some(dir) => {
                let name = hr_path.file_name().expect("listed file has a name");
                let candidate = dir.join(name);
                if !candidate.is_file() {
                    return Err(Error::MissingCounterpart { hr: hr_path });
                }
                Some(candidate)
            }
            None => None,
        };
        records.push(Record {
            hr_path,
            lr_path,
            origin,
            split,
        });
    }
    DatasetManifest::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) {
        fs::write(dir.join(name), b"x").unwrap();
    }

    #[test]
    fn pairs_by_filename_in_order() {
        let tmp = tempfile::tempdir().unwrap();
        let (hr, lr) = (tmp.path().join("hr"), tmp.path().join("lr"));
        fs::create_dir_all(&hr).unwrap();
        fs::create_dir_all(&lr).unwrap();
        for n in ["b.png", "a.png"] {
            touch(&hr, n);
            touch(&lr, n);
        }
        touch(&hr, "notes.txt");
        let m = build_manifest(&hr, Some(&lr), Split::Train, Origin::Observed).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.records()[0].hr_path, hr.join("a.png"));
        assert_eq!(m.records()[0].lr_path.as_deref(), Some(lr.join("a.png").as_path()));
        assert_eq!(m.records()[1].image_id(), "b");
    }

    #[test]
    fn missing_counterpart() {
        let tmp = tempfile::tempdir().unwrap();
        let (hr, lr) = (tmp.path().join("hr"), tmp.path().join("lr"));
        fs::create_dir_all(&hr).unwrap();
        fs::create_dir_all(&lr).unwrap();
        touch(&hr, "a.png");
        touch(&lr, "b.png");
        let err = build_manifest(&hr, Some(&lr), Split::Train, Origin::Observed).unwrap_err();
        assert!(matches!(err, Error::MissingCounterpart { .. }));
    }

    #[test]
    fn hr_only_listing() {
        let tmp = tempfile::tempdir().unwrap();
        for i in 0..800 {
            touch(tmp.path(), &format!("{i:04}.png"));
        }
        let m = build_manifest(tmp.path(), None, Split::Train, Origin::Synthetic).unwrap();
        assert_eq!(m.len(), 800);
        assert!(m.records().iter().all(|r| r.lr_path.is_none() && r.origin == Origin::Synthetic));
    }

    #[test]
    fn empty_directory() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            build_manifest(tmp.path(), None, Split::Val, Origin::Observed),
            Err(Error::EmptyDirectory(_))
        ));
    }

    #[test]
    fn text_round_trip_and_duplicates() {
        let m = DatasetManifest::new(vec![
            Record {
                hr_path: "a/hr.png".into(),
                lr_path: Some("a/lr.png".into()),
                origin: Origin::Observed,
                split: Split::Train,
            },
            Record {
                hr_path: "b/hr.png".into(),
                lr_path: None,
                origin: Origin::Analytic,
                split: Split::Val,
            },
        ])
        .unwrap();
        let text = m.to_text();
        assert_eq!(text.lines().nth(1).unwrap(), "b/hr.png\t-\tanalytic\tval");
        assert_eq!(DatasetManifest::parse(&text).unwrap(), m);

        let dup = format!("{}{}", text, text.lines().next().unwrap());
        assert!(matches!(DatasetManifest::parse(&dup), Err(Error::DuplicateRecord(_))));
        assert!(matches!(
            DatasetManifest::parse("a\tb\tobserved\n"),
            Err(Error::MalformedManifest { line: 1, .. })
        ));
    }
}
