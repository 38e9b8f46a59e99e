//! Reading and writing the canonical file formats.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use augbench_core::seed::sha256_hex;
use augbench_core::{ClassSchema, Dataset};
use serde::de::DeserializeOwned;

use crate::error::CliError;

/// Parses TOML, or JSON when the extension is `.json`.
pub fn read_structured<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {what} `{}`: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Config(format!("invalid {what} `{}`: {e}", path.display())))
}

pub fn read_schema(path: &Path) -> Result<ClassSchema, CliError> {
    let schema: ClassSchema = read_structured(path, "schema")?;
    schema.validate()?;
    Ok(schema)
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot open `{}`: {e}", path.display())))
}

pub fn read_dataset(path: &Path, schema: &ClassSchema) -> Result<Dataset, CliError> {
    Dataset::read_jsonl(open(path)?, schema.clone()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes to `path`, or stdout when `None`.
pub fn with_output<F>(path: Option<&Path>, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut w = BufWriter::new(File::create(p)?);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

/// Writes canonical JSONL; a file output also gets a `.provenance.json`
/// sidecar with the dataset's lineage.
pub fn write_dataset(dataset: &Dataset, path: Option<&Path>) -> Result<(), CliError> {
    with_output(path, |w| dataset.write_jsonl(w))?;
    if let Some(p) = path {
        let mut sidecar = p.as_os_str().to_owned();
        sidecar.push(".provenance.json");
        write_json(dataset.provenance(), Some(Path::new(&sidecar)))?;
    }
    Ok(())
}

pub fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    with_output(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

/// Parses every non-blank line as one JSON value.
pub fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("cannot read `{}`: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Digest of a directory tree: relative paths and contents, in sorted order.
pub fn tree_digest(path: &Path) -> Result<String, CliError> {
    if path.is_file() {
        return file_digest(path);
    }
    let mut entries = Vec::new();
    collect_files(path, path, &mut entries)?;
    entries.sort();
    let mut listing = String::new();
    for rel in entries {
        let digest = file_digest(&path.join(&rel))?;
        listing.push_str(&format!("{rel} {digest}\n"));
    }
    Ok(sha256_hex(listing.as_bytes()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}
