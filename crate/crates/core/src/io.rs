//! Interchange formats: cohort CSV, schema JSON, prediction CSV, grid JSON,
//! plus deterministic float formatting used by every writer.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::model::{
    Cohort, FeatureSchema, FeatureValue, PatientRecord, Prediction, SurvivalOutcome, TimeGrid,
};

/// Row id that marks the grid row of a prediction CSV.
pub const GRID_ROW_ID: &str = "__grid__";

/// Formats `x` with 17 significant digits (C `%.17g`), which round-trips every f64.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let prec = (16 - exp) as usize;
        trim_zeros(&format!("{x:.prec$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Pretty JSON formatter that writes floats with [`format_f64`].
struct G17Formatter {
    pretty: PrettyFormatter<'static>,
}

impl Formatter for G17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(writer)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        G17Formatter {
            pretty: PrettyFormatter::new(),
        },
    );
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_context(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn io_context(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_schema(path: &Path) -> Result<FeatureSchema> {
    let schema: FeatureSchema = read_json(path)?;
    let problems = schema.problems();
    if !problems.is_empty() {
        return Err(Error::SchemaMismatch(format!("{}: {}", path.display(), problems.join("; "))));
    }
    Ok(schema)
}

#[derive(serde::Deserialize, Serialize)]
struct GridFile {
    times: Vec<f64>,
}

pub fn read_grid(path: &Path) -> Result<TimeGrid> {
    let g: GridFile = read_json(path)?;
    TimeGrid::new(g.times)
}

pub fn write_grid(path: &Path, grid: &TimeGrid) -> Result<()> {
    write_json(
        path,
        &GridFile {
            times: grid.times().to_vec(),
        },
    )
}

fn parse_err(label: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: label.to_string(),
        line,
        message: message.into(),
    }
}

fn csv_err(label: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_err(label, line, e.to_string())
}

pub fn read_cohort(path: &Path, schema: &FeatureSchema) -> Result<Cohort> {
    let file = File::open(path).map_err(|e| io_context(path, e))?;
    read_cohort_from(file, schema, &path.display().to_string())
}

/// Parses a cohort CSV. `label` names the source in error messages.
pub fn read_cohort_from<R: Read>(reader: R, schema: &FeatureSchema, label: &str) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(label, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(label, 1, format!("missing required column '{name}'")))
    };
    let (id_col, time_col, event_col, endpoint_col) = (col("id")?, col("time")?, col("event")?, col("endpoint")?);
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|i| ![id_col, time_col, event_col, endpoint_col].contains(i))
        .collect();
    let names: Vec<&str> = feature_cols.iter().map(|&i| &headers[i]).collect();
    let expected: Vec<&str> = schema.features.iter().map(|f| f.name.as_str()).collect();
    if names != expected {
        return Err(Error::SchemaMismatch(format!(
            "{label}: feature columns {names:?} do not match schema {expected:?}"
        )));
    }

    let mut patients = Vec::new();
    let mut outcomes = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(label, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let time: f64 = row[time_col]
            .parse()
            .map_err(|_| parse_err(label, line, format!("time '{}' is not a number", &row[time_col])))?;
        let event = match &row[event_col] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(parse_err(label, line, format!("event '{other}' is not 0/1"))),
        };
        let mut values = Vec::with_capacity(feature_cols.len());
        for (&c, spec) in feature_cols.iter().zip(&schema.features) {
            let v = FeatureValue::parse(&row[c], spec.kind)
                .map_err(|m| parse_err(label, line, format!("column '{}': {m}", spec.name)))?;
            values.push(v);
        }
        patients.push(PatientRecord::new(&row[id_col], values));
        outcomes.push(SurvivalOutcome::new(time, event, &row[endpoint_col]));
    }
    Ok(Cohort {
        schema: schema.clone(),
        patients,
        outcomes,
        predictions: None,
    })
}

pub fn write_cohort<W: Write>(writer: W, cohort: &Cohort) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "time", "event", "endpoint"];
    header.extend(cohort.schema.features.iter().map(|f| f.name.as_str()));
    w.write_record(&header).map_err(csv_write)?;
    for (p, o) in cohort.patients.iter().zip(&cohort.outcomes) {
        let mut row = vec![
            p.id.clone(),
            format_f64(o.time),
            u8::from(o.event).to_string(),
            o.endpoint.clone(),
        ];
        row.extend(p.values.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_write)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_write(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Survival curves keyed by patient id, all on one grid.
#[derive(Debug, Clone)]
pub struct PredictionTable {
    pub grid: Arc<TimeGrid>,
    pub ids: Vec<String>,
    pub curves: Vec<Prediction>,
}

impl PredictionTable {
    pub fn new(grid: Arc<TimeGrid>, ids: Vec<String>, curves: Vec<Prediction>) -> Self {
        Self { grid, ids, curves }
    }
}

pub fn read_predictions(path: &Path, sidecar_grid: Option<TimeGrid>) -> Result<PredictionTable> {
    let file = File::open(path).map_err(|e| io_context(path, e))?;
    read_predictions_from(file, sidecar_grid, &path.display().to_string())
}

/// Parses a prediction CSV. The grid comes from a leading `__grid__` row or,
/// failing that, from `sidecar_grid`.
pub fn read_predictions_from<R: Read>(
    reader: R,
    sidecar_grid: Option<TimeGrid>,
    label: &str,
) -> Result<PredictionTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(label, e))?.clone();
    if headers.get(0) != Some("id") {
        return Err(parse_err(label, 1, "first column must be 'id'"));
    }
    let m = headers.len() - 1;
    let mut grid: Option<Arc<TimeGrid>> = None;
    let mut ids = Vec::new();
    let mut curves = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_err(label, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let values = row
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(label, line, format!("'{s}' is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if n == 0 && &row[0] == GRID_ROW_ID {
            let g = TimeGrid::new(values).map_err(|e| parse_err(label, line, e.to_string()))?;
            grid = Some(Arc::new(g));
            continue;
        }
        let grid = match &grid {
            Some(g) => g.clone(),
            None => {
                let g = sidecar_grid
                    .clone()
                    .ok_or_else(|| parse_err(label, line, "no __grid__ row and no grid file supplied"))?;
                if g.len() != m {
                    return Err(parse_err(label, 1, format!("{m} time columns but grid has {}", g.len())));
                }
                grid.insert(Arc::new(g)).clone()
            }
        };
        ids.push(row[0].to_string());
        curves.push(Prediction::new_unchecked(grid, values));
    }
    let grid = match grid {
        Some(g) => g,
        None => Arc::new(sidecar_grid.ok_or_else(|| parse_err(label, 1, "no grid available"))?),
    };
    Ok(PredictionTable { grid, ids, curves })
}

pub fn write_predictions<W: Write>(writer: W, table: &PredictionTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend((1..=table.grid.len()).map(|i| format!("t_{i}")));
    w.write_record(&header).map_err(csv_write)?;
    let mut grid_row = vec![GRID_ROW_ID.to_string()];
    grid_row.extend(table.grid.times().iter().map(|t| format_f64(*t)));
    w.write_record(&grid_row).map_err(csv_write)?;
    for (id, curve) in table.ids.iter().zip(&table.curves) {
        let mut row = vec![id.clone()];
        row.extend(curve.values().iter().map(|v| format_f64(*v)));
        w.write_record(&row).map_err(csv_write)?;
    }
    w.flush()?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_context(path, e))?))
}
