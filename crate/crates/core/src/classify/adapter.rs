//! Line-delimited train/predict protocol for external classifiers.
//!
//! The harness writes the version header, then one JSON record per line:
//! every `train` record, then every `predict` record. It closes the
//! adapter's stdin and reads `{"id", "label"}` lines back, one per predict
//! record, in any order. An adapter may report a failure with an
//! `{"error": "..."}` line and a nonzero exit.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::corpus::Dataset;

pub const ADAPTER_VERSION: &str = "augbench-adapter/1";

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("cannot start adapter `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },
    #[error("adapter io error: {0}")]
    Io(#[from] io::Error),
    #[error("adapter exited with status {code:?}: {stderr}")]
    Exit { code: Option<i32>, stderr: String },
    #[error("adapter did not finish within {0:?}")]
    Timeout(Duration),
    #[error("adapter returned no prediction for id `{0}`")]
    MissingPrediction(String),
    #[error("adapter returned more than one prediction for id `{0}`")]
    DuplicatePrediction(String),
    #[error("adapter returned a prediction for unknown id `{0}`")]
    UnknownId(String),
    #[error("adapter predicted label `{label}` for `{id}`, which is not in the schema")]
    UnknownLabel { id: String, label: String },
    #[error("malformed adapter line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("adapter reported an error: {0}")]
    Reported(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Predict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterRequest {
    pub phase: Phase,
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterResponse {
    pub id: String,
    pub label: String,
}

#[derive(Deserialize)]
struct AdapterErrorLine {
    error: String,
}

/// How to launch an adapter process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    600
}

impl AdapterConfig {
    pub fn new(program: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn with_args<I, S>(mut self, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.args = args.into_iter().map(Into::into).collect();
        self
    }
}

/// Encodes the full request stream for a train/test pair.
pub fn encode_requests(train: &Dataset, test: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(ADAPTER_VERSION.as_bytes());
    out.push(b'\n');
    let train_records = train.samples().iter().map(|s| AdapterRequest {
        phase: Phase::Train,
        id: s.id.clone(),
        text: s.text.clone(),
        label: Some(s.label.clone()),
    });
    let predict_records = test.samples().iter().map(|s| AdapterRequest {
        phase: Phase::Predict,
        id: s.id.clone(),
        text: s.text.clone(),
        label: None,
    });
    for record in train_records.chain(predict_records) {
        serde_json::to_writer(&mut out, &record).expect("request records serialize");
        out.push(b'\n');
    }
    out
}

/// Validates adapter output against the predict set; returns labels in
/// `test` order.
pub fn decode_predictions(output: &str, test: &Dataset) -> Result<Vec<String>, AdapterError> {
    let wanted: HashSet<&str> = test.ids().collect();
    let mut got: HashMap<String, String> = HashMap::new();
    for (i, line) in output.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == ADAPTER_VERSION {
            continue;
        }
        if let Ok(err) = serde_json::from_str::<AdapterErrorLine>(line) {
            return Err(AdapterError::Reported(err.error));
        }
        let response: AdapterResponse = serde_json::from_str(line).map_err(|e| AdapterError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !wanted.contains(response.id.as_str()) {
            return Err(AdapterError::UnknownId(response.id));
        }
        if !test.schema().contains_class(&response.label) {
            return Err(AdapterError::UnknownLabel {
                id: response.id,
                label: response.label,
            });
        }
        if got.contains_key(&response.id) {
            return Err(AdapterError::DuplicatePrediction(response.id));
        }
        got.insert(response.id, response.label);
    }
    test.samples()
        .iter()
        .map(|s| got.remove(&s.id).ok_or_else(|| AdapterError::MissingPrediction(s.id.clone())))
        .collect()
}

/// Trains and queries an external adapter process over stdin/stdout.
pub fn external_train_predict(
    config: &AdapterConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<String>, AdapterError> {
    let mut child = Command::new(&config.program)
        .args(&config.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| AdapterError::Spawn {
            program: config.program.clone(),
            source,
        })?;
    let payload = encode_requests(train, test);
    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    // a closed pipe just means the adapter stopped reading; its exit status tells why
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(&payload);
    });
    let reader = thread::spawn(move || {
        let mut buf = String::new();
        stdout.read_to_string(&mut buf).map(|_| buf)
    });
    let err_reader = thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });

    let timeout = Duration::from_secs(config.timeout_secs);
    let status = match child.wait_timeout(timeout)? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(AdapterError::Timeout(timeout));
        }
    };
    let _ = writer.join();
    let output = reader.join().map_err(|_| AdapterError::Protocol("stdout reader panicked".into()))??;
    let stderr = err_reader.join().unwrap_or_default();
    if !status.success() {
        if let Err(AdapterError::Reported(msg)) = decode_predictions(&output, test) {
            return Err(AdapterError::Reported(msg));
        }
        return Err(AdapterError::Exit {
            code: status.code(),
            stderr: stderr.trim().to_string(),
        });
    }
    decode_predictions(&output, test)
}

/// Misbehaviours the built-in echo adapter can be asked to exhibit, for
/// exercising protocol error paths.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EchoOptions {
    pub omit_first: bool,
    pub duplicate_first: bool,
    pub unknown_label: bool,
    pub exit_code: Option<i32>,
    pub sleep: Option<Duration>,
}

/// Reference adapter that predicts the majority training label
/// (ties to the lexicographically first label).
pub fn serve_echo<R: BufRead, W: Write>(input: R, output: W, options: &EchoOptions) -> Result<(), AdapterError> {
    let mut out = BufWriter::new(output);
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(header)) if header.trim() == ADAPTER_VERSION => {}
        Some(Ok(other)) => {
            return Err(AdapterError::Protocol(format!("unsupported header `{}`", other.trim())))
        }
        Some(Err(e)) => return Err(e.into()),
        None => return Err(AdapterError::Protocol("missing version header".into())),
    }
    let mut label_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut predicted: HashSet<String> = HashSet::new();
    let mut responses = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: AdapterRequest = serde_json::from_str(&line).map_err(|e| AdapterError::Malformed {
            line: i + 2,
            message: e.to_string(),
        })?;
        match request.phase {
            Phase::Train => {
                if !predicted.is_empty() {
                    return Err(AdapterError::Protocol("train record after predict records".into()));
                }
                let label = request
                    .label
                    .ok_or_else(|| AdapterError::Protocol(format!("train record `{}` has no label", request.id)))?;
                *label_counts.entry(label).or_insert(0) += 1;
            }
            Phase::Predict => {
                if label_counts.is_empty() {
                    return Err(AdapterError::Protocol("predict record before any train record".into()));
                }
                if !predicted.insert(request.id.clone()) {
                    return Err(AdapterError::Protocol(format!("duplicate predict id `{}`", request.id)));
                }
                responses.push(request.id);
            }
        }
    }
    if let Some(d) = options.sleep {
        thread::sleep(d);
    }
    let top = label_counts.values().copied().max().unwrap_or(0);
    let majority = label_counts
        .iter()
        .find(|(_, &n)| n == top)
        .map(|(l, _)| l.clone())
        .unwrap_or_default();
    for (i, id) in responses.iter().enumerate() {
        if i == 0 && options.omit_first {
            continue;
        }
        let label = if options.unknown_label { "__unknown__".to_string() } else { majority.clone() };
        let line = serde_json::to_string(&AdapterResponse { id: id.clone(), label }).expect("responses serialize");
        writeln!(out, "{line}")?;
        if i == 0 && options.duplicate_first {
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `{"error": message}` for a failed adapter session.
pub fn write_error_line<W: Write>(mut output: W, err: &AdapterError) -> io::Result<()> {
    let line = serde_json::json!({ "error": err.to_string() });
    writeln!(output, "{line}")?;
    output.flush()
}

/// Runs the echo adapter over `reader`, returning its raw output.
pub fn echo_session<R: Read>(reader: R, options: &EchoOptions) -> Result<String, AdapterError> {
    let mut buf = Vec::new();
    serve_echo(BufReader::new(reader), &mut buf, options)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClassSchema, Provenance, Sample};

    fn data() -> (Dataset, Dataset) {
        let schema = ClassSchema::new(&["ham", "spam"], "spam");
        let train = vec![
            Sample::new("t1", "hi", "ham"),
            Sample::new("t2", "yo", "ham"),
            Sample::new("t3", "win", "spam"),
        ];
        let test = vec![Sample::new("q1", "hello", "ham"), Sample::new("q2", "prize", "spam")];
        (
            Dataset::new(schema.clone(), train, Provenance::default()).unwrap(),
            Dataset::new(schema, test, Provenance::default()).unwrap(),
        )
    }

    #[test]
    fn echo_predicts_majority_in_process() {
        let (train, test) = data();
        let out = echo_session(&encode_requests(&train, &test)[..], &EchoOptions::default()).unwrap();
        assert_eq!(decode_predictions(&out, &test).unwrap(), ["ham", "ham"]);
    }

    #[test]
    fn request_stream_starts_with_header() {
        let (train, test) = data();
        let bytes = encode_requests(&train, &test);
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(ADAPTER_VERSION));
        assert_eq!(lines.next(), Some(r#"{"phase":"train","id":"t1","text":"hi","label":"ham"}"#));
        assert_eq!(lines.last(), Some(r#"{"phase":"predict","id":"q2","text":"prize"}"#));
    }

    #[test]
    fn decoding_flags_protocol_errors() {
        let (_, test) = data();
        let missing = r#"{"id":"q1","label":"ham"}"#;
        assert!(matches!(decode_predictions(missing, &test), Err(AdapterError::MissingPrediction(id)) if id == "q2"));
        let dup = "{\"id\":\"q1\",\"label\":\"ham\"}\n{\"id\":\"q1\",\"label\":\"ham\"}";
        assert!(matches!(decode_predictions(dup, &test), Err(AdapterError::DuplicatePrediction(_))));
        let unknown = r#"{"id":"zz","label":"ham"}"#;
        assert!(matches!(decode_predictions(unknown, &test), Err(AdapterError::UnknownId(_))));
        let bad_label = r#"{"id":"q1","label":"eggs"}"#;
        assert!(matches!(decode_predictions(bad_label, &test), Err(AdapterError::UnknownLabel { .. })));
        assert!(matches!(decode_predictions("not json", &test), Err(AdapterError::Malformed { line: 1, .. })));
        assert!(matches!(decode_predictions(r#"{"error":"boom"}"#, &test), Err(AdapterError::Reported(m)) if m == "boom"));
    }

    #[test]
    fn echo_rejects_bad_streams() {
        let predict_first = format!("{ADAPTER_VERSION}\n{{\"phase\":\"predict\",\"id\":\"a\",\"text\":\"x\"}}\n");
        assert!(echo_session(predict_first.as_bytes(), &EchoOptions::default()).is_err());
        assert!(echo_session("wrong/9\n".as_bytes(), &EchoOptions::default()).is_err());
        let dup = format!(
            "{ADAPTER_VERSION}\n{{\"phase\":\"train\",\"id\":\"t\",\"text\":\"x\",\"label\":\"a\"}}\n\
             {{\"phase\":\"predict\",\"id\":\"p\",\"text\":\"x\"}}\n{{\"phase\":\"predict\",\"id\":\"p\",\"text\":\"x\"}}\n"
        );
        let err = echo_session(dup.as_bytes(), &EchoOptions::default()).unwrap_err();
        assert!(err.to_string().contains("`p`"));
    }
}
