//! File formats: population specs and rectangles as JSON, data matrices as
//! a little-endian binary block or CSV, and CSV result tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use hdclt_core::distance::DistanceEstimate;
use hdclt_core::geometry::Hyperrectangle;
use hdclt_core::linalg::Matrix;
use hdclt_core::vectors::{CorrelationModel, EntryLaw, PopulationSpec, SampleMatrix};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{AppError, AppResult};

/// Magic bytes opening a binary matrix file.
pub const MATRIX_MAGIC: &[u8; 8] = b"HDCLTMAT";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawName {
    StandardNormal,
    Rademacher,
    ScaledLaplace,
    ScaledUniform,
    TwoPointAsymmetric,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawParams {
    /// Probability of the positive atom of an asymmetric two-point law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Identity,
    Equicorrelated,
    Ar1,
    Explicit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

/// JSON form of a [`PopulationSpec`]:
/// `{p, law, law_params, model, model_params, seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub p: usize,
    pub law: LawName,
    #[serde(default)]
    pub law_params: LawParams,
    pub model: ModelName,
    #[serde(default)]
    pub model_params: ModelParams,
    #[serde(default)]
    pub seed: u64,
}

fn missing(field: &str) -> AppError {
    AppError::validation(format!("spec: missing parameter `{field}`"))
}

impl SpecFile {
    pub fn to_spec(&self) -> AppResult<PopulationSpec> {
        let law = match self.law {
            LawName::StandardNormal => EntryLaw::StandardNormal,
            LawName::Rademacher => EntryLaw::Rademacher,
            LawName::ScaledLaplace => EntryLaw::ScaledLaplace,
            LawName::ScaledUniform => EntryLaw::ScaledUniform,
            LawName::TwoPointAsymmetric => EntryLaw::TwoPointAsymmetric(
                self.law_params.pi.ok_or_else(|| missing("law_params.pi"))?,
            ),
        };
        let mp = &self.model_params;
        let model = match self.model {
            ModelName::Identity => CorrelationModel::Identity,
            ModelName::Equicorrelated => {
                CorrelationModel::Equicorrelated(mp.rho.ok_or_else(|| missing("model_params.rho"))?)
            }
            ModelName::Ar1 => {
                CorrelationModel::Ar1(mp.phi.ok_or_else(|| missing("model_params.phi"))?)
            }
            ModelName::Explicit => {
                let rows = mp
                    .matrix
                    .as_ref()
                    .ok_or_else(|| missing("model_params.matrix"))?;
                let m = Matrix::from_rows(rows)
                    .map_err(|e| AppError::validation(format!("spec: model_params.matrix: {e}")))?;
                CorrelationModel::Explicit(m)
            }
        };
        PopulationSpec::new(self.p, law, model, self.seed)
            .map_err(|e| AppError::validation(format!("spec: {e}")))
    }

    pub fn from_spec(spec: &PopulationSpec) -> Self {
        let (law, law_params) = match spec.law {
            EntryLaw::StandardNormal => (LawName::StandardNormal, LawParams::default()),
            EntryLaw::Rademacher => (LawName::Rademacher, LawParams::default()),
            EntryLaw::ScaledLaplace => (LawName::ScaledLaplace, LawParams::default()),
            EntryLaw::ScaledUniform => (LawName::ScaledUniform, LawParams::default()),
            EntryLaw::TwoPointAsymmetric(pi) => {
                (LawName::TwoPointAsymmetric, LawParams { pi: Some(pi) })
            }
        };
        let (model, model_params) = match &spec.model {
            CorrelationModel::Identity => (ModelName::Identity, ModelParams::default()),
            CorrelationModel::Equicorrelated(rho) => (
                ModelName::Equicorrelated,
                ModelParams {
                    rho: Some(*rho),
                    ..Default::default()
                },
            ),
            CorrelationModel::Ar1(phi) => (
                ModelName::Ar1,
                ModelParams {
                    phi: Some(*phi),
                    ..Default::default()
                },
            ),
            CorrelationModel::Explicit(m) => (
                ModelName::Explicit,
                ModelParams {
                    matrix: Some((0..m.rows()).map(|i| m.row(i).to_vec()).collect()),
                    ..Default::default()
                },
            ),
        };
        Self {
            p: spec.p,
            law,
            law_params,
            model,
            model_params,
            seed: spec.seed,
        }
    }
}

pub fn spec_to_json(spec: &PopulationSpec) -> String {
    serde_json::to_string_pretty(&SpecFile::from_spec(spec)).expect("spec serializes")
}

pub fn spec_from_json(text: &str) -> AppResult<PopulationSpec> {
    let file: SpecFile =
        serde_json::from_str(text).map_err(|e| AppError::validation(format!("spec: {e}")))?;
    file.to_spec()
}

fn bound_to_value(v: f64) -> Value {
    if v == f64::INFINITY {
        Value::from("inf")
    } else if v == f64::NEG_INFINITY {
        Value::from("-inf")
    } else {
        Value::from(v)
    }
}

fn bound_from_value(v: &Value) -> AppResult<f64> {
    match v {
        Value::Number(x) => x
            .as_f64()
            .ok_or_else(|| AppError::validation("rectangle: bad number")),
        Value::String(s) if s == "inf" => Ok(f64::INFINITY),
        Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        other => Err(AppError::validation(format!(
            "rectangle: bad endpoint {other}"
        ))),
    }
}

/// `{"lower": [...], "upper": [...]}` with `"-inf"`/`"inf"` sentinels.
/// Closedness flags are written only when some finite endpoint is open.
pub fn rect_to_value(rect: &Hyperrectangle) -> Value {
    let mut obj = serde_json::Map::new();
    obj.insert(
        "lower".into(),
        rect.lower().iter().map(|&v| bound_to_value(v)).collect(),
    );
    obj.insert(
        "upper".into(),
        rect.upper().iter().map(|&v| bound_to_value(v)).collect(),
    );
    let open = |flags: &[bool], b: &[f64]| flags.iter().zip(b).any(|(&c, v)| !c && v.is_finite());
    if open(rect.lower_closed(), rect.lower()) || open(rect.upper_closed(), rect.upper()) {
        obj.insert(
            "lower_closed".into(),
            Value::from(rect.lower_closed().to_vec()),
        );
        obj.insert(
            "upper_closed".into(),
            Value::from(rect.upper_closed().to_vec()),
        );
    }
    Value::Object(obj)
}

pub fn rect_from_value(v: &Value) -> AppResult<Hyperrectangle> {
    let arr = |key: &str| -> AppResult<Vec<f64>> {
        v.get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| AppError::validation(format!("rectangle: missing `{key}`")))?
            .iter()
            .map(bound_from_value)
            .collect()
    };
    let flags = |key: &str, len: usize| -> AppResult<Vec<bool>> {
        match v.get(key) {
            None => Ok(vec![true; len]),
            Some(x) => serde_json::from_value(x.clone())
                .map_err(|e| AppError::validation(format!("rectangle: `{key}`: {e}"))),
        }
    };
    let lower = arr("lower")?;
    let upper = arr("upper")?;
    let lc = flags("lower_closed", lower.len())?;
    let uc = flags("upper_closed", upper.len())?;
    Hyperrectangle::with_closedness(lower, upper, lc, uc)
        .map_err(|e| AppError::validation(format!("rectangle: {e}")))
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| AppError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| AppError::io(&tmp, e))?;
    f.sync_all().map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Binary matrix: `HDCLTMAT`, `u32` rows, `u32` columns, then row-major `f64`,
/// all little-endian.
pub fn matrix_to_bytes(m: &Matrix) -> AppResult<Vec<u8>> {
    let n = u32::try_from(m.rows()).map_err(|_| AppError::validation("matrix: too many rows"))?;
    let p =
        u32::try_from(m.cols()).map_err(|_| AppError::validation("matrix: too many columns"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&p.to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn matrix_from_bytes(bytes: &[u8]) -> AppResult<Matrix> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MATRIX_MAGIC {
        return Err(AppError::validation("matrix: missing HDCLTMAT header"));
    }
    let word =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (n, p) = (word(8), word(12));
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * n * p {
        return Err(AppError::validation(format!(
            "matrix: header says {n}x{p} but body holds {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Matrix::from_row_major(n, p, data).map_err(|e| AppError::validation(format!("matrix: {e}")))
}

/// Headerless CSV, one observation per line.
pub fn matrix_from_csv(text: &str) -> AppResult<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| AppError::validation(format!("csv: {e}")))?;
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    AppError::validation(format!("csv line {}: bad number `{s}`", line + 1))
                })
            })
            .collect::<AppResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(AppError::validation("csv: no rows"));
    }
    Matrix::from_rows(&rows).map_err(|e| AppError::validation(format!("csv: {e}")))
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for i in 0..m.rows() {
        w.serialize(m.row(i)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Reads a binary matrix file, or CSV when the magic header is absent.
pub fn read_matrix(path: &Path) -> AppResult<Matrix> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    if bytes.starts_with(MATRIX_MAGIC) {
        matrix_from_bytes(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| AppError::validation("data: neither binary nor text"))?;
        matrix_from_csv(&text)
    }
}

pub fn write_matrix_binary(path: &Path, m: &Matrix) -> AppResult<()> {
    write_atomic(path, &matrix_to_bytes(m)?)
}

pub fn read_sample(path: &Path) -> AppResult<SampleMatrix> {
    SampleMatrix::from_matrix(read_matrix(path)?)
        .map_err(|e| AppError::validation(format!("data: {e}")))
}

/// Row of a distance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub family_id: String,
    pub rect_id: usize,
    #[serde(rename = "p_hat_P")]
    pub p_hat_p: f64,
    #[serde(rename = "p_hat_Q")]
    pub p_hat_q: f64,
    pub abs_diff: f64,
}

pub fn distance_to_csv(family_id: &str, est: &DistanceEstimate) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &est.per_rectangle {
        w.serialize(DistanceRow {
            family_id: family_id.to_string(),
            rect_id: r.rect_id,
            p_hat_p: r.p_hat_p,
            p_hat_q: r.p_hat_q,
            abs_diff: r.abs_diff,
        })
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Row of an experiment series table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub experiment: String,
    pub n: f64,
    pub p: usize,
    pub method: String,
    pub distance: f64,
    pub std_error: f64,
    pub slope_so_far: Option<f64>,
}

pub fn series_to_csv(rows: &[SeriesRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "experiment",
            "n",
            "p",
            "method",
            "distance",
            "std_error",
            "slope_so_far",
        ])
        .expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

pub fn series_from_csv(text: &str) -> AppResult<Vec<SeriesRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| AppError::validation(format!("csv: {e}")))
}
