//! Corpus directories: one ICCMA file and one extension file per instance,
//! indexed by `manifest.tsv` (`path`, `stratum`, `split`, label digest).

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aba::{AssumptionSet, StableResult, Status};
use crate::datagen::{Corpus, Instance, Split};

use super::iccma::{parse_iccma_aba, serialize_iccma_aba, ParseError};

pub const MANIFEST: &str = "manifest.tsv";

#[derive(Debug, Error)]
pub enum CorpusIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path} line {line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: labels do not match the manifest digest")]
    Digest { path: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusIoError + '_ {
    move |source| CorpusIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line per extension listing its atom indices (1-based), in result order.
pub fn render_extensions(result: &StableResult) -> String {
    result
        .extensions
        .iter()
        .map(|e| {
            let mut line = String::from("ext");
            for a in e.iter() {
                line.push_str(&format!(" {}", a + 1));
            }
            line + "\n"
        })
        .collect()
}

pub fn label_digest(extensions: &str) -> String {
    let hash = Sha256::digest(extensions.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<(), CorpusIoError> {
    let inst_dir = dir.join("instances");
    fs::create_dir_all(&inst_dir).map_err(io_err(&inst_dir))?;
    let mut manifest = String::from("# path\tstratum\tsplit\tdigest\n");
    for inst in &corpus.instances {
        let rel = format!("instances/{}.aba", inst.name);
        let path = dir.join(&rel);
        fs::write(&path, serialize_iccma_aba(&inst.abaf)).map_err(io_err(&path))?;
        let ext = render_extensions(&inst.result);
        let ext_path = path.with_extension("ext");
        fs::write(&ext_path, &ext).map_err(io_err(&ext_path))?;
        manifest.push_str(&format!(
            "{rel}\t{}\t{}\t{}\n",
            inst.stratum,
            inst.split.name(),
            label_digest(&ext)
        ));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(io_err(&path))
}

fn parse_extensions(text: &str, num_atoms: usize, path: &Path) -> Result<Vec<AssumptionSet>, CorpusIoError> {
    let bad = |line: usize, message: &str| CorpusIoError::Manifest {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            let mut tokens = l.split_ascii_whitespace();
            if tokens.next() != Some("ext") {
                return Err(bad(i + 1, "expected `ext ...`"));
            }
            let ids = tokens
                .map(|t| match t.parse::<usize>() {
                    Ok(x) if x >= 1 && x <= num_atoms => Ok(x - 1),
                    _ => Err(bad(i + 1, "bad atom index")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AssumptionSet::from_ids(num_atoms, ids))
        })
        .collect()
}

pub fn read_corpus(dir: &Path) -> Result<Corpus, CorpusIoError> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let mut corpus = Corpus::default();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = |message: &str| CorpusIoError::Manifest {
            path: mpath.clone(),
            line: i + 1,
            message: message.to_string(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [rel, stratum, split, digest] = fields[..] else {
            return Err(bad("expected four tab-separated fields"));
        };
        let stratum: usize = stratum.parse().map_err(|_| bad("bad stratum"))?;
        let split = Split::parse(split).ok_or_else(|| bad("bad split"))?;
        let path = dir.join(rel);
        let abaf = parse_iccma_aba(&fs::read_to_string(&path).map_err(io_err(&path))?).map_err(|source| {
            CorpusIoError::Parse {
                path: path.clone(),
                source,
            }
        })?;
        let ext_path = path.with_extension("ext");
        let ext = fs::read_to_string(&ext_path).map_err(io_err(&ext_path))?;
        if label_digest(&ext) != digest {
            return Err(CorpusIoError::Digest { path: ext_path });
        }
        let extensions = parse_extensions(&ext, abaf.num_atoms(), &ext_path)?;
        let mut credulous = abaf.empty_set();
        for e in &extensions {
            for a in e.iter() {
                credulous.insert(a);
            }
        }
        let name = Path::new(rel)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| rel.to_string());
        corpus.instances.push(Instance {
            name,
            abaf,
            result: StableResult {
                extensions,
                credulous,
                status: Status::Complete,
            },
            params: None,
            stratum,
            split,
        });
    }
    Ok(corpus)
}
