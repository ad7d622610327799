//! Result documents. Every document carries `"schema": 1` and is emitted
//! through `serde_json::Value`, so keys come out sorted and re-emitting a
//! parsed document reproduces it byte for byte.

use serde::{Deserialize, Serialize};

use npiv_core::shapes::ShapeConfig;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSettings {
    pub k_dim: usize,
    pub l_dim: usize,
    pub order: usize,
    pub x_grid: usize,
    pub z_grid: usize,
    pub trim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSettings {
    pub input: String,
    pub series: SeriesSettings,
    pub b_sweep: Vec<f64>,
    /// `None` when a custom shape replaces the curvature sweep.
    pub c_sweep: Option<Vec<f64>>,
    pub shape: Option<ShapeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub b: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedFormSeries {
    pub z_grid: Vec<f64>,
    pub g_hat: Vec<f64>,
    /// `g_hat - b` and `g_hat + b`, one entry per swept `b`.
    pub bands: Vec<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub gram_condition: f64,
    pub d1_grid_gap: f64,
    pub d2_grid_gap: f64,
    pub n_constraints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub b_index: usize,
    pub c_index: usize,
    pub b: f64,
    pub c: Option<f64>,
    pub feasible: bool,
    pub x_grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub central: Vec<f64>,
    pub diagnostics: CellDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDocument {
    pub schema: u32,
    pub command: String,
    pub config: EstimateSettings,
    pub n_obs: usize,
    pub reduced_form: ReducedFormSeries,
    /// Ordered by `b_index`, then `c_index`.
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedFormDocument {
    pub schema: u32,
    pub command: String,
    pub input: String,
    pub series: SeriesSettings,
    pub n_obs: usize,
    pub gram_condition: f64,
    pub reduced_form: ReducedFormSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDocument {
    pub schema: u32,
    pub command: String,
    pub b: f64,
    pub h_bounds: (f64, f64),
    pub c: Option<f64>,
    pub feasible: bool,
    pub x_support: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasDocument {
    pub schema: u32,
    pub command: String,
    pub b: f64,
    pub w: Vec<f64>,
    pub representable: bool,
    /// `None` when no representer exists (the bias is unbounded).
    pub bias: Option<f64>,
    pub representer: Option<Vec<f64>>,
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_json<T: Serialize>(doc: &T) -> Result<String, CliError> {
    let value = serde_json::to_value(doc).map_err(|e| CliError::Numerical(format!("cannot encode result: {e}")))?;
    let mut text =
        serde_json::to_string_pretty(&value).map_err(|e| CliError::Numerical(format!("cannot encode result: {e}")))?;
    text.push('\n');
    Ok(text)
}
