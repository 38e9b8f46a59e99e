use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_sample, ClassSchema, CorpusError, Dataset, Origin, Provenance, Sample};

/// On-disk layouts accepted by [`ingest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IngestFormat {
    /// One JSON record per line with `id`, `text`, `label`, `subclass`, `origin`.
    CanonicalJsonl,
    /// `id TAB text TAB level-a TAB level-b TAB level-c`, optional header row.
    OlidTsv,
    /// `label TAB text`.
    SmsTsv,
    /// `<polarity>_<truthfulness>/<id>.txt` tree.
    ReviewDir,
}

impl FromStr for IngestFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical-jsonl" => Ok(Self::CanonicalJsonl),
            "olid-tsv" => Ok(Self::OlidTsv),
            "sms-tsv" => Ok(Self::SmsTsv),
            "review-dir" => Ok(Self::ReviewDir),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

#[derive(Default)]
struct Rejections {
    malformed: usize,
    unknown_label: usize,
    duplicate_id: usize,
}

impl Rejections {
    fn total(&self) -> usize {
        self.malformed + self.unknown_label + self.duplicate_id
    }
}

enum Row {
    Sample(Sample),
    Malformed,
}

/// Reads a corpus in any supported layout into a canonical [`Dataset`].
///
/// Rows that cannot be parsed, carry a label outside the schema or repeat an
/// earlier id are skipped; the counts land in the dataset's provenance.
pub fn ingest(format: IngestFormat, path: &Path, schema: &ClassSchema) -> Result<Dataset, CorpusError> {
    schema.validate()?;
    let rows = match format {
        IngestFormat::CanonicalJsonl => read_lines(path)?.into_iter().map(|(_, l)| parse_canonical(&l)).collect(),
        IngestFormat::SmsTsv => read_lines(path)?
            .into_iter()
            .map(|(n, l)| parse_sms(n, &l))
            .collect(),
        IngestFormat::OlidTsv => {
            let lines = read_lines(path)?;
            let skip_header = lines
                .first()
                .is_some_and(|(_, l)| l.split('\t').next().is_some_and(|f| f.trim() == "id"));
            lines
                .into_iter()
                .skip(usize::from(skip_header))
                .map(|(_, l)| parse_olid(&l, schema))
                .collect()
        }
        IngestFormat::ReviewDir => read_review_dir(path, schema)?,
    };

    let mut rejected = Rejections::default();
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for row in rows {
        let sample = match row {
            Row::Sample(s) => s,
            Row::Malformed => {
                rejected.malformed += 1;
                continue;
            }
        };
        if !schema.contains_class(&sample.label) {
            rejected.unknown_label += 1;
            continue;
        }
        if check_sample(schema, &sample).is_err() {
            rejected.malformed += 1;
            continue;
        }
        if !seen.insert(sample.id.clone()) {
            rejected.duplicate_id += 1;
            continue;
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(CorpusError::NoRows(path.to_path_buf()));
    }

    let mut provenance = Provenance {
        source: Some(path.display().to_string()),
        lineage: vec![format!("ingest({})", format_name(format))],
        skipped_rows: rejected.total(),
        ..Provenance::default()
    };
    for (key, value) in [
        ("rejected_malformed", rejected.malformed),
        ("rejected_unknown_label", rejected.unknown_label),
        ("rejected_duplicate_id", rejected.duplicate_id),
    ] {
        provenance.notes.insert(key.to_string(), value.to_string());
    }
    Dataset::new(schema.clone(), samples, provenance)
}

fn format_name(format: IngestFormat) -> &'static str {
    match format {
        IngestFormat::CanonicalJsonl => "canonical-jsonl",
        IngestFormat::OlidTsv => "olid-tsv",
        IngestFormat::SmsTsv => "sms-tsv",
        IngestFormat::ReviewDir => "review-dir",
    }
}

fn unreadable(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Unreadable {
        path: path.to_path_buf(),
        source,
    }
}

/// Non-blank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CorpusError> {
    let bytes = fs::read(path).map_err(|e| unreadable(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect())
}

fn parse_canonical(line: &str) -> Row {
    match serde_json::from_str::<Sample>(line) {
        Ok(sample) => Row::Sample(sample),
        Err(_) => Row::Malformed,
    }
}

fn parse_sms(line_no: usize, line: &str) -> Row {
    match line.split_once('\t') {
        Some((label, text)) if !text.trim().is_empty() => Row::Sample(Sample::new(
            format!("sms-{line_no}"),
            text.trim(),
            label.trim(),
        )),
        _ => Row::Malformed,
    }
}

fn olid_field(value: Option<&str>) -> Option<&str> {
    value.map(str::trim).filter(|v| !v.is_empty() && *v != "NULL")
}

fn parse_olid(line: &str, schema: &ClassSchema) -> Row {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 3 {
        return Row::Malformed;
    }
    let (Some(id), Some(level_a)) = (olid_field(Some(fields[0])), olid_field(Some(fields[2]))) else {
        return Row::Malformed;
    };
    let text = fields[1].trim();
    let mut sample = Sample::new(id, text, level_a);
    let level_b = olid_field(fields.get(3).copied());
    let level_c = olid_field(fields.get(4).copied());
    if !schema.children(level_a).is_empty() {
        // Target categories: untargeted, or the targeted group from level C.
        let subclass = match (level_b, level_c) {
            (Some("UNT"), _) => Some("UNT"),
            (Some(_), Some(target)) => Some(target),
            _ => None,
        };
        match subclass {
            Some(sub) if schema.is_child(level_a, sub) => sample.subclass = Some(sub.to_string()),
            _ => return Row::Malformed,
        }
    }
    Row::Sample(sample)
}

fn collect_txt(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let entries = fs::read_dir(dir).map_err(|e| unreadable(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| unreadable(dir, e))?.path();
        if path.is_dir() {
            collect_txt(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "txt") {
            out.push(path);
        }
    }
    Ok(())
}

fn read_review_dir(root: &Path, schema: &ClassSchema) -> Result<Vec<Row>, CorpusError> {
    let entries = fs::read_dir(root).map_err(|e| unreadable(root, e))?;
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| unreadable(root, e))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();

    let mut rows = Vec::new();
    for dir in dirs {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let Some((_polarity, truthfulness)) = name.split_once('_') else {
            continue;
        };
        let mut files = Vec::new();
        collect_txt(&dir, &mut files)?;
        files.sort();
        for file in files {
            let rel = file.strip_prefix(&dir).unwrap_or(&file).with_extension("");
            let id = format!("{name}/{}", rel.to_string_lossy().replace('\\', "/"));
            let row = match fs::read(&file) {
                Ok(bytes) => {
                    let text = String::from_utf8_lossy(&bytes).trim().to_string();
                    let mut sample = Sample::new(id, text, truthfulness);
                    if schema.is_child(truthfulness, &name) {
                        sample.subclass = Some(name.clone());
                    }
                    sample.origin = Origin::True;
                    Row::Sample(sample)
                }
                Err(_) => Row::Malformed,
            };
            rows.push(row);
        }
    }
    Ok(rows)
}
