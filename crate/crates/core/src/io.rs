//! File formats: long-format score tables, cost tables, JSON artifacts and
//! the line protocol used by live oracles.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationArtifact, CALIBRATION_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::matrix::{LongScoreRecord, RawScoreTable, ScoreMatrix};
use crate::ranker::{ModelSpec, ScoreOracle};

pub const SCORE_HEADER: [&str; 3] = ["model_id", "item_id", "score"];
pub const COST_HEADER: [&str; 2] = ["model_id", "cost_per_item"];
pub const DEFAULT_COST: f64 = 1.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Average repeated `(model, item)` rows instead of rejecting them.
    pub aggregate_duplicates: bool,
    /// Clamp scores outside `[0, 1]` instead of rejecting them.
    pub clamp: bool,
    /// Rescale each item to `[0, 1]` by its observed range. Implies any
    /// finite input is accepted.
    pub per_item_scale: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn check_header(rdr: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    let found: Vec<&str> = header.iter().collect();
    if found.is_empty() || found == [""] {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    if found != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn parse_number(path: &Path, line: u64, field: &str, text: &str) -> Result<f64> {
    let v: f64 = text
        .parse()
        .map_err(|_| parse_err(path, line, format!("{field} `{text}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{field} `{text}` is not finite")));
    }
    Ok(v)
}

/// Read a long-format score file with header `model_id,item_id,score`.
///
/// Models and items are ordered lexicographically by id, so the result does
/// not depend on row order.
pub fn load_scores(path: impl AsRef<Path>, options: LoadOptions) -> Result<ScoreMatrix> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    check_header(&mut rdr, path, &SCORE_HEADER)?;

    let unit_range = !options.per_item_scale && !options.clamp;
    let mut cells: BTreeMap<(String, String), (f64, usize, u64)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let (model, item) = (&rec[0], &rec[1]);
        if model.is_empty() || item.is_empty() {
            return Err(parse_err(path, line, "empty model_id or item_id"));
        }
        let score = parse_number(path, line, "score", &rec[2])?;
        if unit_range && !(0.0..=1.0).contains(&score) {
            return Err(parse_err(path, line, format!("score {score} is outside [0, 1]")));
        }
        let entry = cells
            .entry((model.to_string(), item.to_string()))
            .or_insert((0.0, 0, line));
        if entry.1 > 0 && !options.aggregate_duplicates {
            return Err(parse_err(
                path,
                line,
                format!("duplicate score for ({model}, {item}), first at line {}", entry.2),
            ));
        }
        entry.0 += score;
        entry.1 += 1;
    }
    if cells.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }

    let models: BTreeSet<&String> = cells.keys().map(|(m, _)| m).collect();
    let items: BTreeSet<&String> = cells.keys().map(|(_, i)| i).collect();
    let mut raw = RawScoreTable::new(
        models.into_iter().cloned().collect(),
        items.into_iter().cloned().collect(),
    )?;
    for ((model, item), (sum, n, _)) in &cells {
        let m = raw.model_index(model).expect("collected above");
        let i = raw.item_index(item).expect("collected above");
        raw.set(m, i, sum / *n as f64)?;
    }
    if options.per_item_scale {
        Ok(raw.per_item_scale().0)
    } else {
        raw.into_unit_matrix(options.clamp)
    }
}

/// Long-format records for every observed cell, row-major.
pub fn score_records(matrix: &ScoreMatrix) -> Vec<LongScoreRecord> {
    matrix
        .cells()
        .map(|(m, i, score)| LongScoreRecord {
            model_id: matrix.models()[m].clone(),
            item_id: matrix.items()[i].clone(),
            score,
        })
        .collect()
}

/// Write a score file readable by [`load_scores`]. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_scores(path: impl AsRef<Path>, matrix: &ScoreMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(SCORE_HEADER)
            .and_then(|_| {
                score_records(matrix)
                    .iter()
                    .try_for_each(|r| w.write_record([r.model_id.as_str(), r.item_id.as_str(), &r.score.to_string()]))
            })
            .and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e),
            })?;
    }
    write_atomic(path, &buf)
}

/// Read a costs file (`model_id,cost_per_item`) and build specs for
/// `models`. Models absent from the file cost [`DEFAULT_COST`].
pub fn load_costs(path: impl AsRef<Path>, models: &[String]) -> Result<Vec<ModelSpec>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    check_header(&mut rdr, path, &COST_HEADER)?;
    let mut costs: BTreeMap<String, f64> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let cost = parse_number(path, line, "cost_per_item", &rec[1])?;
        if cost <= 0.0 {
            return Err(parse_err(path, line, format!("cost_per_item must be positive, got {cost}")));
        }
        if costs.insert(rec[0].to_string(), cost).is_some() {
            return Err(parse_err(path, line, format!("duplicate model `{}`", &rec[0])));
        }
    }
    Ok(models
        .iter()
        .map(|id| ModelSpec::new(id.clone(), costs.get(id).copied().unwrap_or(DEFAULT_COST)))
        .collect())
}

/// Write `bytes` to `path` through a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_atomic(path, &to_json(value))
}

/// Parse JSON, reporting the failing location as the schema field.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        field: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

pub fn save_calibration(path: impl AsRef<Path>, artifact: &CalibrationArtifact) -> Result<()> {
    write_json(path, artifact)
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

/// Load a calibration artifact, checking its version and invariants.
pub fn load_calibration(path: impl AsRef<Path>) -> Result<CalibrationArtifact> {
    let path = path.as_ref();
    let probe: VersionProbe = read_json(path)?;
    match probe.format_version {
        Some(CALIBRATION_FORMAT_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found,
                expected: CALIBRATION_FORMAT_VERSION,
            })
        }
        None => {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                field: "format_version".into(),
                message: "missing".into(),
            })
        }
    }
    let artifact: CalibrationArtifact = read_json(path)?;
    artifact.check().map_err(|(field, message)| Error::Schema {
        path: path.to_path_buf(),
        field,
        message,
    })?;
    Ok(artifact)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveRequest {
    pub model_id: String,
    pub item_id: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LiveResponse {
    Bare(f64),
    Object { score: f64 },
}

/// Oracle that asks an external process for each score.
///
/// Each request is one JSON line `{"model_id": .., "item_id": ..}` on
/// `output`; the reply is one line on `input`, either a bare number or
/// `{"score": ..}`.
pub struct LineOracle<R, W> {
    input: R,
    output: W,
    line: String,
}

impl<R: BufRead, W: Write> LineOracle<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self {
            input,
            output,
            line: String::new(),
        }
    }
}

impl LineOracle<BufReader<std::io::Stdin>, std::io::Stdout> {
    pub fn stdio() -> Self {
        Self::new(BufReader::new(std::io::stdin()), std::io::stdout())
    }
}

impl<R: BufRead, W: Write> ScoreOracle for LineOracle<R, W> {
    fn respond(&mut self, model: &str, item: &str) -> Result<f64> {
        let req = LiveRequest {
            model_id: model.to_string(),
            item_id: item.to_string(),
        };
        let mut msg = serde_json::to_vec(&req).expect("serializable request");
        msg.push(b'\n');
        self.output
            .write_all(&msg)
            .and_then(|_| self.output.flush())
            .map_err(|e| Error::Live(format!("write failed: {e}")))?;
        self.line.clear();
        let n = self
            .input
            .read_line(&mut self.line)
            .map_err(|e| Error::Live(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(Error::Live(format!("input closed before score for ({model}, {item})")));
        }
        let text = self.line.trim();
        let score = match serde_json::from_str::<LiveResponse>(text) {
            Ok(LiveResponse::Bare(v)) | Ok(LiveResponse::Object { score: v }) => v,
            Err(_) => return Err(Error::Live(format!("unparseable response `{text}` for ({model}, {item})"))),
        };
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange {
                model: model.to_string(),
                item: item.to_string(),
                value: score,
            });
        }
        Ok(score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::calibrate;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn duplicates_average_when_aggregating() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "model_id,item_id,score\na,x,0.4\na,x,0.6\nb,x,1\n");
        let opts = LoadOptions {
            aggregate_duplicates: true,
            ..Default::default()
        };
        let m = load_scores(&p, opts).unwrap();
        assert!((m.get_by_id("a", "x").unwrap() - 0.5).abs() < 1e-15);
        let err = load_scores(&p, LoadOptions::default()).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("duplicate"), "{err}");
    }

    #[test]
    fn out_of_range_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "model_id,item_id,score\na,x,0.5\na,y,1.2\n");
        let err = load_scores(&p, LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let clamped = load_scores(
            &p,
            LoadOptions {
                clamp: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(clamped.get_by_id("a", "y"), Some(1.0));
    }

    #[test]
    fn header_only_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        for text in ["model_id,item_id,score\n", ""] {
            let p = write(&dir, "s.csv", text);
            let err = load_scores(&p, LoadOptions::default()).unwrap_err();
            assert!(err.to_string().contains("empty score file"), "{err}");
        }
    }

    #[test]
    fn malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "model_id,item_id,score\na,x,0.5\na,y,abc\n");
        assert!(matches!(load_scores(&p, LoadOptions::default()), Err(Error::Parse { line: 3, .. })));
        let p = write(&dir, "s.csv", "model_id,item_id,score\na,x\n");
        assert!(matches!(load_scores(&p, LoadOptions::default()), Err(Error::Parse { line: 2, .. })));
        let p = write(&dir, "s.csv", "model,item,score\na,x,1\n");
        assert!(matches!(load_scores(&p, LoadOptions::default()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn per_item_scaling_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "model_id,item_id,score\na,x,2\nb,x,6\nc,x,10\na,y,3\nb,y,3\n");
        let opts = LoadOptions {
            per_item_scale: true,
            ..Default::default()
        };
        let m = load_scores(&p, opts).unwrap();
        assert_eq!(m.get_by_id("b", "x"), Some(0.5));
        assert_eq!(m.get_by_id("c", "x"), Some(1.0));
        assert_eq!(m.get_by_id("a", "y"), Some(0.5));
        assert_eq!(m.get_by_id("c", "y"), None);
    }

    #[test]
    fn scores_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let m = ScoreMatrix::from_rows(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            &[vec![0.1 + 0.2, 1.0 / 3.0], vec![0.0, 1e-17]],
        )
        .unwrap();
        let p = dir.path().join("s.csv");
        write_scores(&p, &m).unwrap();
        assert_eq!(load_scores(&p, LoadOptions::default()).unwrap(), m);
    }

    fn artifact() -> CalibrationArtifact {
        let m = ScoreMatrix::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into(), "z".into()],
            &[vec![0.9, 0.6, 0.2], vec![0.7, 0.5, 0.1], vec![0.3, 0.35, 0.05]],
        )
        .unwrap();
        calibrate(&m, 0.01).unwrap()
    }

    #[test]
    fn calibration_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let a = artifact();
        save_calibration(&p, &a).unwrap();
        assert_eq!(load_calibration(&p).unwrap(), a);
    }

    fn edited(edit: impl FnOnce(&mut serde_json::Value)) -> Result<CalibrationArtifact> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let mut v = serde_json::to_value(artifact()).unwrap();
        edit(&mut v);
        std::fs::write(&p, serde_json::to_vec(&v).unwrap()).unwrap();
        load_calibration(&p)
    }

    #[test]
    fn calibration_rejects_bad_files() {
        let e = edited(|v| v["k"] = serde_json::json!(0.0)).unwrap_err();
        assert!(matches!(e, Error::Schema { .. }), "{e}");
        let e = edited(|v| v["extra"] = serde_json::json!(1)).unwrap_err();
        assert!(e.to_string().contains("extra"), "{e}");
        let e = edited(|v| v["items"][0]["colour"] = serde_json::json!(1)).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        let e = edited(|v| v["format_version"] = serde_json::json!(7)).unwrap_err();
        assert!(matches!(e, Error::Version { found: 7, .. }), "{e}");
        let e = edited(|v| v["a"] = serde_json::json!(123.0)).unwrap_err();
        assert!(matches!(e, Error::Schema { ref field, .. } if field == "a"), "{e}");
    }

    #[test]
    fn costs_default_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", "model_id,cost_per_item\nb,5\n");
        let specs = load_costs(&p, &["a".into(), "b".into()]).unwrap();
        assert_eq!(specs[0].cost_per_item, 1.0);
        assert_eq!(specs[1].cost_per_item, 5.0);
        let p = write(&dir, "c.csv", "model_id,cost_per_item\nb,0\n");
        assert!(matches!(load_costs(&p, &[]), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn line_oracle_protocol() {
        let input = b"0.25\n{\"score\": 1}\nnope\n".as_slice();
        let mut out = Vec::new();
        let mut o = LineOracle::new(input, &mut out);
        assert_eq!(o.respond("a", "x").unwrap(), 0.25);
        assert_eq!(o.respond("b", "y").unwrap(), 1.0);
        assert!(matches!(o.respond("a", "z"), Err(Error::Live(_))));
        assert!(matches!(o.respond("a", "w"), Err(Error::Live(_))));
        let sent = String::from_utf8(out).unwrap();
        let first: LiveRequest = serde_json::from_str(sent.lines().next().unwrap()).unwrap();
        assert_eq!(first, LiveRequest { model_id: "a".into(), item_id: "x".into() });
        assert_eq!(sent.lines().count(), 4);
    }
}
