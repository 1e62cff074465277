//! File formats: line-delimited prediction records, predictions, weights,
//! learner traces, toy grids, and violation reports.
//!
//! A record file starts with one header object and then holds one object per
//! input:
//!
//! ```text
//! {"version":1,"N":3,"m":10,"epsilon":0.1,"norm":"linf"}
//! {"input_id":"x0","true_label":3,"outputs":[{"label":3,"cert":1},{"label":3,"cert":0},{"label":5,"cert":1}]}
//! ```

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::toy_lab::{GridPoint, Panel, ToyGrid, Violation};
use crate::types::{CertOutput, Label, Norm, PredictionRecord, RecordSet, WeightVector};
use crate::weight_learner::LearnerTrace;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFileHeader {
    pub version: u64,
    #[serde(rename = "N")]
    pub num_models: usize,
    #[serde(rename = "m")]
    pub num_classes: u32,
    pub epsilon: f64,
    pub norm: Norm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_names: Option<Vec<String>>,
}

impl RecordFileHeader {
    pub fn for_records(rs: &RecordSet) -> Self {
        Self {
            version: FORMAT_VERSION,
            num_models: rs.num_models(),
            num_classes: rs.num_classes(),
            epsilon: rs.epsilon(),
            norm: rs.norm(),
            model_names: rs.model_names().map(<[String]>::to_vec),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, at: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| schema(format!("{at}.{name}"), "missing field"))
}

fn as_u32(v: &Value, at: &str) -> Result<u32> {
    v.as_u64()
        .and_then(|x| u32::try_from(x).ok())
        .ok_or_else(|| schema(at, format!("expected a nonnegative integer, got {v}")))
}

fn parse_header(line: &str, line_no: usize) -> Result<RecordFileHeader> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let obj = value
        .as_object()
        .ok_or_else(|| schema("header", "expected a JSON object"))?;
    let version = field(obj, "version", "header")?;
    if version.as_u64() != Some(FORMAT_VERSION) {
        return Err(schema(
            "header.version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    serde_json::from_value(value.clone()).map_err(|e| schema("header", e.to_string()))
}

fn parse_record(line: &str, line_no: usize, header: &RecordFileHeader) -> Result<PredictionRecord> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let at = format!("line {line_no}");
    let obj = value
        .as_object()
        .ok_or_else(|| schema(at.clone(), "expected a JSON object"))?;
    let input_id = match field(obj, "input_id", &at)? {
        Value::String(s) => s.clone(),
        Value::Number(n) if n.is_u64() || n.is_i64() => n.to_string(),
        other => {
            return Err(schema(
                format!("{at}.input_id"),
                format!("expected a string or integer, got {other}"),
            ))
        }
    };
    let tagged = |e: Error| e.in_record(&input_id);
    let at = format!("{at} ({input_id})");
    let true_label = as_u32(
        field(obj, "true_label", &at).map_err(tagged)?,
        &format!("{at}.true_label"),
    )
    .map_err(tagged)?;
    let outputs = field(obj, "outputs", &at)
        .map_err(tagged)?
        .as_array()
        .ok_or_else(|| schema(format!("{at}.outputs"), "expected an array"))
        .map_err(tagged)?;
    if outputs.len() != header.num_models {
        return Err(tagged(schema(
            format!("{at}.outputs"),
            format!(
                "expected {} outputs, got {}",
                header.num_models,
                outputs.len()
            ),
        )));
    }
    let mut parsed = Vec::with_capacity(outputs.len());
    for (i, o) in outputs.iter().enumerate() {
        let at = format!("{at}.outputs[{i}]");
        let obj = o
            .as_object()
            .ok_or_else(|| schema(at.clone(), "expected an object"))
            .map_err(tagged)?;
        let label = as_u32(
            field(obj, "label", &at).map_err(tagged)?,
            &format!("{at}.label"),
        )
        .map_err(tagged)?;
        let cert = match field(obj, "cert", &at).map_err(tagged)? {
            Value::Number(n) if n.as_u64() == Some(0) => false,
            Value::Number(n) if n.as_u64() == Some(1) => true,
            Value::Bool(b) => *b,
            other => {
                return Err(tagged(schema(
                    format!("{at}.cert"),
                    format!("expected 0 or 1, got {other}"),
                )))
            }
        };
        if label >= header.num_classes {
            return Err(tagged(schema(
                format!("{at}.label"),
                format!("label {label} out of range for m = {}", header.num_classes),
            )));
        }
        parsed.push(CertOutput::new(label, cert));
    }
    if true_label >= header.num_classes {
        return Err(tagged(schema(
            format!("{at}.true_label"),
            format!(
                "label {true_label} out of range for m = {}",
                header.num_classes
            ),
        )));
    }
    Ok(PredictionRecord {
        input_id,
        true_label: Label(true_label),
        outputs: parsed,
    })
}

/// Streams a header line followed by record lines. Blank lines are skipped.
pub fn read_records(reader: impl BufRead) -> Result<RecordSet> {
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match &header {
            None => header = Some(parse_header(&line, line_no)?),
            Some(h) => records.push(parse_record(&line, line_no, h)?),
        }
    }
    let header = header.ok_or_else(|| Error::Parse {
        line: 0,
        message: "empty record file: missing header".into(),
    })?;
    let rs = RecordSet::new(
        header.num_classes,
        header.num_models,
        header.epsilon,
        header.norm,
        records,
    )?;
    match header.model_names {
        Some(names) => rs.with_model_names(names),
        None => Ok(rs),
    }
}

pub fn load_records(path: impl AsRef<Path>) -> Result<RecordSet> {
    read_records(BufReader::new(open(path.as_ref())?))
}

// Field order here is the on-disk key order.
#[derive(Serialize)]
struct OutputLine {
    label: u32,
    cert: u8,
}

impl From<&CertOutput> for OutputLine {
    fn from(o: &CertOutput) -> Self {
        Self {
            label: o.label.0,
            cert: u8::from(o.cert),
        }
    }
}

#[derive(Serialize)]
struct RecordLine<'a> {
    input_id: &'a str,
    true_label: u32,
    outputs: Vec<OutputLine>,
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    input_id: &'a str,
    label: u32,
    cert: u8,
}

fn write_line(writer: &mut impl Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *writer, value).map_err(std::io::Error::from)?;
    writeln!(writer)?;
    Ok(())
}

pub fn write_records(mut writer: impl Write, rs: &RecordSet) -> Result<()> {
    write_line(&mut writer, &RecordFileHeader::for_records(rs))?;
    for r in rs.records() {
        let line = RecordLine {
            input_id: &r.input_id,
            true_label: r.true_label.0,
            outputs: r.outputs.iter().map(OutputLine::from).collect(),
        };
        write_line(&mut writer, &line)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_records(path: impl AsRef<Path>, rs: &RecordSet) -> Result<()> {
    write_records(create(path.as_ref())?, rs)
}

/// One `{"input_id","label","cert"}` line per record, in record order.
pub fn write_predictions(
    mut writer: impl Write,
    rs: &RecordSet,
    predictions: &[CertOutput],
) -> Result<()> {
    if predictions.len() != rs.len() {
        return Err(Error::dimension(
            "predictions vs records",
            rs.len(),
            predictions.len(),
        ));
    }
    for (r, p) in rs.records().iter().zip(predictions) {
        let line = PredictionLine {
            input_id: &r.input_id,
            label: p.label.0,
            cert: u8::from(p.cert),
        };
        write_line(&mut writer, &line)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_predictions(
    path: impl AsRef<Path>,
    rs: &RecordSet,
    predictions: &[CertOutput],
) -> Result<()> {
    write_predictions(create(path.as_ref())?, rs, predictions)
}

pub fn read_predictions(reader: impl BufRead) -> Result<Vec<(String, CertOutput)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct Row {
            input_id: String,
            label: u32,
            cert: u8,
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if row.cert > 1 {
            return Err(schema(format!("line {}.cert", i + 1), "expected 0 or 1"));
        }
        out.push((row.input_id, CertOutput::new(row.label, row.cert == 1)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub version: u64,
    pub weights: WeightVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_objective: Option<f64>,
}

impl WeightsFile {
    pub fn new(weights: WeightVector) -> Self {
        Self {
            version: FORMAT_VERSION,
            weights,
            source: None,
            exact_objective: None,
        }
    }
}

pub fn write_weights(mut writer: impl Write, file: &WeightsFile) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, file).map_err(std::io::Error::from)?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(())
}

pub fn save_weights(path: impl AsRef<Path>, file: &WeightsFile) -> Result<()> {
    write_weights(create(path.as_ref())?, file)
}

/// Accepts a versioned weights object or a bare JSON array.
pub fn read_weights(mut reader: impl Read) -> Result<WeightVector> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let raw = match &value {
        Value::Array(_) => value.clone(),
        Value::Object(obj) => {
            if let Some(v) = obj.get("version") {
                if v.as_u64() != Some(FORMAT_VERSION) {
                    return Err(schema("version", format!("unsupported version {v}")));
                }
            }
            field(obj, "weights", "$")?.clone()
        }
        _ => return Err(schema("$", "expected an object or an array")),
    };
    let raw: Vec<f64> =
        serde_json::from_value(raw).map_err(|e| schema("$.weights", e.to_string()))?;
    WeightVector::new(raw)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightVector> {
    read_weights(open(path.as_ref())?)
}

pub fn render_trace_csv(trace: &LearnerTrace) -> String {
    let mut out = String::from("epoch,objective,best_objective\n");
    for (epoch, (o, b)) in trace.objectives.iter().zip(trace.best_so_far()).enumerate() {
        let _ = writeln!(out, "{epoch},{o},{b}");
    }
    out
}

pub fn save_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// `px,py,truth,s0_label,s0_cert,...` with one row per grid point, row-major
/// with y outer. Coordinates use shortest round-trip formatting.
pub fn write_grid_csv(mut writer: impl Write, grid: &ToyGrid) -> Result<()> {
    let mut header = String::from("px,py,truth");
    for i in 0..grid.num_models() {
        let _ = write!(header, ",s{i}_label,s{i}_cert");
    }
    writeln!(writer, "{header}")?;
    let mut line = String::new();
    for p in grid.points() {
        line.clear();
        let _ = write!(line, "{},{},{}", p.px, p.py, p.truth.0);
        for o in &p.outputs {
            let _ = write!(line, ",{},{}", o.label.0, u8::from(o.cert));
        }
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_grid(path: impl AsRef<Path>, grid: &ToyGrid) -> Result<()> {
    write_grid_csv(create(path.as_ref())?, grid)
}

/// Reads a grid written by [`write_grid_csv`]. Columns other than `px`, `py`,
/// `truth`, and `s<i>_label`/`s<i>_cert` are ignored; the grid's shape is
/// recovered from the row-major point order.
pub fn read_grid_csv(reader: impl BufRead) -> Result<ToyGrid> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => {
                return Err(Error::Parse {
                    line: 0,
                    message: "empty grid file".into(),
                })
            }
            Some((_, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
        }
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| schema(format!("header.{name}"), "missing column"))
    };
    let (ipx, ipy, itruth) = (find("px")?, find("py")?, find("truth")?);
    let mut model_cols = Vec::new();
    for i in 0.. {
        let (Ok(l), Ok(c)) = (find(&format!("s{i}_label")), find(&format!("s{i}_cert"))) else {
            break;
        };
        model_cols.push((l, c));
    }

    let mut points = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} cells, got {}", cols.len(), cells.len()),
            });
        }
        let bad = |what: &str, cell: &str| Error::Parse {
            line: line_no,
            message: format!("invalid {what} `{cell}`"),
        };
        let float = |k: usize| cells[k].parse::<f64>().map_err(|_| bad(cols[k], cells[k]));
        let int = |k: usize| cells[k].parse::<u32>().map_err(|_| bad(cols[k], cells[k]));
        let mut outputs = Vec::with_capacity(model_cols.len());
        for &(l, c) in &model_cols {
            let cert = match cells[c] {
                "0" => false,
                "1" => true,
                other => return Err(bad(cols[c], other)),
            };
            outputs.push(CertOutput::new(int(l)?, cert));
        }
        points.push(GridPoint {
            px: float(ipx)?,
            py: float(ipy)?,
            truth: Label(int(itruth)?),
            outputs,
        });
    }
    if points.is_empty() {
        return Ok(ToyGrid::empty());
    }
    let nx = points.iter().take_while(|p| p.py == points[0].py).count();
    if points.len() % nx != 0 {
        return Err(schema(
            "grid",
            "point count is not a multiple of the row length",
        ));
    }
    let ny = points.len() / nx;
    for (k, p) in points.iter().enumerate() {
        let (ix, iy) = (k % nx, k / nx);
        if p.px != points[ix].px || p.py != points[iy * nx].py {
            return Err(schema(
                format!("row {}", k + 2),
                "points are not a row-major rectangular grid",
            ));
        }
    }
    ToyGrid::from_points(nx, ny, points)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<ToyGrid> {
    read_grid_csv(BufReader::new(open(path.as_ref())?))
}

pub fn render_violations_csv(violations: &[Violation]) -> String {
    let mut out = String::from("p,q,p_x,p_y,q_x,q_y,distance,p_label,p_cert,q_label,q_cert\n");
    for v in violations {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            v.p,
            v.q,
            v.p_xy[0],
            v.p_xy[1],
            v.q_xy[0],
            v.q_xy[1],
            v.distance,
            v.at_p.label.0,
            u8::from(v.at_p.cert),
            v.at_q.label.0,
            u8::from(v.at_q.cert)
        );
    }
    out
}

/// The data behind a figure: one `label`/`cert` column pair per panel.
pub fn render_figure_csv(grid: &ToyGrid, panels: &[Panel]) -> Result<String> {
    for p in panels {
        if p.predictions.len() != grid.len() {
            return Err(Error::dimension(
                "panel predictions",
                grid.len(),
                p.predictions.len(),
            ));
        }
    }
    let mut out = String::from("px,py,truth");
    for (k, _) in panels.iter().enumerate() {
        let _ = write!(out, ",panel{k}_label,panel{k}_cert");
    }
    out.push('\n');
    for (i, p) in grid.points().iter().enumerate() {
        let _ = write!(out, "{},{},{}", p.px, p.py, p.truth.0);
        for panel in panels {
            let o = panel.predictions[i];
            let _ = write!(out, ",{},{}", o.label.0, u8::from(o.cert));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::build_example1_fixture;

    fn load(text: &str) -> Result<RecordSet> {
        read_records(text.as_bytes())
    }

    const HEADER: &str = r#"{"version":1,"N":3,"m":10,"epsilon":0.1,"norm":"linf"}"#;

    #[test]
    fn wrong_arity_names_the_record() {
        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"input_id":"img7","true_label":3,"outputs":[{"label":3,"cert":1},{"label":3,"cert":0}]}"#
        );
        let err = load(&text).unwrap_err();
        assert!(matches!(err, Error::Record { ref input_id, .. } if input_id == "img7"));
        assert!(err.to_string().contains("img7"), "{err}");
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(load("").is_err());
        assert!(load("\n\n").is_err());
    }

    #[test]
    fn rejects_bad_cert_and_label() {
        let bad_cert = format!(
            "{HEADER}\n{}\n",
            r#"{"input_id":"a","true_label":0,"outputs":[{"label":0,"cert":2},{"label":0,"cert":0},{"label":0,"cert":0}]}"#
        );
        let err = load(&bad_cert).unwrap_err().to_string();
        assert!(err.contains("outputs[0].cert"), "{err}");
        let bad_label = format!(
            "{HEADER}\n{}\n",
            r#"{"input_id":"a","true_label":0,"outputs":[{"label":0,"cert":1},{"label":10,"cert":0},{"label":0,"cert":0}]}"#
        );
        let err = load(&bad_label).unwrap_err().to_string();
        assert!(err.contains("outputs[1].label"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let text = format!("{HEADER}\n{{not json\n");
        assert!(matches!(load(&text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn header_version_checked() {
        let text = r#"{"version":2,"N":3,"m":10,"epsilon":0.1,"norm":"linf"}"#;
        assert!(matches!(load(text), Err(Error::Schema { .. })));
    }

    #[test]
    fn integer_input_ids_accepted() {
        let text = "{\"version\":1,\"N\":1,\"m\":2,\"epsilon\":0.1,\"norm\":\"l2\"}\n\
                    {\"input_id\":17,\"true_label\":1,\"outputs\":[{\"label\":1,\"cert\":1}]}\n";
        let rs = load(text).unwrap();
        assert_eq!(rs.records()[0].input_id, "17");
    }

    #[test]
    fn example1_round_trip() {
        let rs = build_example1_fixture();
        let mut buf = Vec::new();
        write_records(&mut buf, &rs).unwrap();
        assert_eq!(read_records(buf.as_slice()).unwrap(), rs);
    }

    #[test]
    fn files_round_trip_and_missing_paths_report_io() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let rs = build_example1_fixture()
            .with_model_names(vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        save_records(&path, &rs).unwrap();
        assert_eq!(load_records(&path).unwrap(), rs);
        let missing = dir.path().join("nope.jsonl");
        assert!(matches!(load_records(&missing), Err(Error::Io { .. })));
    }

    #[test]
    fn weights_accept_bare_array_and_object() {
        let w = read_weights("[1, 1, 2]".as_bytes()).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.25, 0.5]);
        let mut buf = Vec::new();
        write_weights(&mut buf, &WeightsFile::new(w.clone())).unwrap();
        assert_eq!(read_weights(buf.as_slice()).unwrap(), w);
        assert!(read_weights(r#"{"version":1,"weights":[-1,2]}"#.as_bytes()).is_err());
    }
}
