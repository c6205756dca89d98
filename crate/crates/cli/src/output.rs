use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cptring::spectra::Regime;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Format, ScenarioConfig};
use crate::RunError;

/// A named column; `None` marks an undefined value (e.g. the contrast of two
/// empty cavities).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: impl IntoIterator<Item = f64>) -> Self {
        Column { name: name.into(), values: values.into_iter().map(Some).collect() }
    }

    pub fn optional(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Column { name: name.into(), values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub scenario: String,
    /// Regime of the configured system; absent for multi-parameter presets.
    pub regime: Option<Regime>,
    /// Closed-form exceptional points `J/κ` for the configured ring size.
    pub exceptional_points: Vec<f64>,
    pub caveats: Vec<String>,
    /// Scenario-specific details, keyed for stable ordering.
    pub details: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub columns: Vec<Column>,
    pub metadata: Metadata,
}

impl ScenarioResult {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn n_rows(&self) -> usize {
        self.columns.iter().map(|c| c.values.len()).max().unwrap_or(0)
    }
}

/// Twelve significant digits.
fn format_value(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x.is_nan() => "nan".into(),
        Some(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.into(),
        Some(x) => format!("{x:.11e}"),
    }
}

/// CSV with the config and metadata on leading `#` lines, then a header row
/// and one row per point.
pub fn to_csv(result: &ScenarioResult) -> Result<String, RunError> {
    let mut out = String::new();
    out.push_str("# config: ");
    out.push_str(&serde_json::to_string(&result.config)?);
    out.push('\n');
    out.push_str("# metadata: ");
    out.push_str(&serde_json::to_string(&result.metadata)?);
    out.push('\n');
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(result.columns.iter().map(|c| c.name.as_str()))?;
    for row in 0..result.n_rows() {
        writer.write_record(result.columns.iter().map(|c| format_value(c.values.get(row).copied().flatten())))?;
    }
    let body = writer.into_inner().map_err(|e| RunError::Csv(csv::Error::from(e.into_error())))?;
    out.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
    Ok(out)
}

pub fn to_json(result: &ScenarioResult) -> Result<String, RunError> {
    let mut text = serde_json::to_string_pretty(result)?;
    text.push('\n');
    Ok(text)
}

pub fn render(result: &ScenarioResult, format: Format) -> Result<String, RunError> {
    match format {
        Format::Csv => to_csv(result),
        Format::Json => to_json(result),
    }
}

/// Writes `result` to `path` in `format`.
pub fn emit(result: &ScenarioResult, format: Format, path: &Path) -> Result<(), RunError> {
    let text = render(result, format)?;
    fs::write(path, text).map_err(|source| RunError::Io { path: path.to_path_buf(), source })
}

/// Reads the `config` back out of an emitted JSON document.
pub fn config_from_json_result(text: &str) -> Result<ScenarioConfig, RunError> {
    #[derive(Deserialize)]
    struct Envelope {
        config: ScenarioConfig,
    }
    Ok(serde_json::from_str::<Envelope>(text)?.config)
}
