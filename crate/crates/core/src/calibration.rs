//! Temperature scaling against the annotators' empirical label distributions.
//!
//! The temperature is picked from a fixed log-spaced grid by maximizing
//! `Σ_i Σ_k p_emp[i][k] · ln softmax(input[i] / T)[k]` over labeled examples.

use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationTable;
use crate::error::{Error, Result};
use crate::matrix::{safe_ln, softmax_scaled, ProbabilityMatrix};
use crate::par;

/// What gets divided by the temperature before the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationInput {
    /// The probability values themselves.
    #[default]
    Probabilities,
    /// Log-probabilities, i.e. logits up to a per-row constant.
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub enabled: bool,
    pub input: CalibrationInput,
    pub min_temperature: f64,
    pub max_temperature: f64,
    pub grid_size: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            input: CalibrationInput::Probabilities,
            min_temperature: 0.01,
            max_temperature: 100.0,
            grid_size: 61,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_temperature > 0.0 && self.max_temperature >= self.min_temperature) {
            return Err(Error::Config(
                "calibration temperatures must satisfy 0 < min_temperature <= max_temperature".into(),
            ));
        }
        if self.grid_size == 0 {
            return Err(Error::Config("calibration.grid_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Log-spaced temperatures, ascending.
    pub fn grid(&self) -> Vec<f64> {
        if self.grid_size == 1 {
            return vec![self.min_temperature];
        }
        let lo = self.min_temperature.log10();
        let hi = self.max_temperature.log10();
        let steps = (self.grid_size - 1) as f64;
        (0..self.grid_size)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / steps))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::Config(format!("temperature must be positive, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn scaled_row(row: &[f64], temperature: f64, input: CalibrationInput) -> Vec<f64> {
    match input {
        CalibrationInput::Probabilities => softmax_scaled(row, temperature),
        CalibrationInput::Logits => {
            let logits: Vec<f64> = row.iter().map(|&p| safe_ln(p)).collect();
            softmax_scaled(&logits, temperature)
        }
    }
}

/// Soft cross-entropy objective (to be maximized) at one temperature.
pub fn objective(preds: &[&[f64]], targets: &[Vec<f64>], temperature: f64, input: CalibrationInput) -> f64 {
    preds
        .iter()
        .zip(targets)
        .map(|(row, target)| {
            let scaled = scaled_row(row, temperature, input);
            target
                .iter()
                .zip(&scaled)
                .filter(|(t, _)| **t > 0.0)
                .map(|(t, q)| t * safe_ln(*q))
                .sum::<f64>()
        })
        .sum()
}

/// Grid search for the temperature; ties resolve to the smaller temperature.
pub fn fit_temperature(
    preds: &[&[f64]],
    targets: &[Vec<f64>],
    config: &CalibrationConfig,
) -> Result<(Temperature, f64)> {
    if preds.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    assert_eq!(preds.len(), targets.len());
    let grid = config.grid();
    let values = par::map_slice(&grid, |&t| objective(preds, targets, t, config.input));
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    Ok((Temperature(grid[best]), values[best]))
}

/// Fits on the labeled rows of a full prediction matrix (indexed by example).
pub fn fit_on_table(
    table: &AnnotationTable,
    preds: &ProbabilityMatrix,
    config: &CalibrationConfig,
) -> Result<Temperature> {
    let labeled = table.labeled();
    let rows: Vec<&[f64]> = labeled.iter().map(|&i| preds.row(i)).collect();
    let targets = labeled
        .iter()
        .map(|&i| table.empirical_distribution(i))
        .collect::<Result<Vec<_>>>()?;
    fit_temperature(&rows, &targets, config).map(|(t, _)| t)
}

pub fn apply_temperature(preds: &ProbabilityMatrix, temperature: Temperature, input: CalibrationInput) -> ProbabilityMatrix {
    let k = preds.num_classes();
    let mut data = Vec::with_capacity(preds.num_rows() * k);
    for row in preds.rows() {
        data.extend(scaled_row(row, temperature.value(), input));
    }
    ProbabilityMatrix::from_raw(k, data)
}

/// Fits on labeled rows and rescales every row, or passes through when disabled.
pub fn calibrate(
    table: &AnnotationTable,
    preds: &ProbabilityMatrix,
    config: &CalibrationConfig,
) -> Result<(ProbabilityMatrix, Option<Temperature>)> {
    if !config.enabled || table.total_annotations() == 0 {
        return Ok((preds.clone(), None));
    }
    let t = fit_on_table(table, preds, config)?;
    Ok((apply_temperature(preds, t, config.input), Some(t)))
}
