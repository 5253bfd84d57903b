//! CSV datasets and JSON model files.
//!
//! A dataset CSV has one observation per row: the density values on the grid
//! (or raw draws in `[0, 1]`), optionally followed by a response column. A
//! header row is detected when its first field is not a number.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::classification::{ClassifyTrainSet, LaplaceState};
use crate::covariance::{FeatureSet, MaternParams};
use crate::density::{kde_estimate, normalize, DensityOnGrid, SampleBatch};
use crate::error::{Error, Result};
use crate::geometry::EmbeddedFeature;
use crate::regression::{fit_regression, FittedRegression, RegressionTrainSet};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// Grid values of a density, normalized on read.
    Densities,
    /// Draws in `[0, 1]`, turned into densities by KDE.
    Samples,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRows {
    pub densities: Vec<DensityOnGrid>,
    pub responses: Option<Vec<f64>>,
}

fn format_err(row: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("row {}: {msg}", row + 1))
}

/// Reads a dataset. `grid_size` is used only for [`RowKind::Samples`].
pub fn read_dataset_csv(reader: impl Read, kind: RowKind, grid_size: usize, has_response: bool) -> Result<DatasetRows> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(kind == RowKind::Samples)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut densities = Vec::new();
    let mut responses = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format_err(row, e))?;
        if row == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let mut values = rec
            .iter()
            .filter(|f| !(kind == RowKind::Samples && f.is_empty()))
            .map(|f| f.parse::<f64>().map_err(|e| format_err(row, format!("'{f}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if has_response {
            let y = values.pop().ok_or_else(|| format_err(row, "empty row"))?;
            responses.push(y);
        }
        let p = match kind {
            RowKind::Densities => normalize(&values),
            RowKind::Samples => SampleBatch::new(values).and_then(|b| kde_estimate(&b, grid_size, None)),
        }
        .map_err(|e| format_err(row, e))?;
        if let Some(first) = densities.first() {
            let first: &DensityOnGrid = first;
            if first.grid_size() != p.grid_size() {
                return Err(format_err(row, format!("{} grid values, expected {}", p.grid_size(), first.grid_size())));
            }
        }
        densities.push(p);
    }
    if densities.is_empty() {
        return Err(Error::Format("no observations".into()));
    }
    Ok(DatasetRows {
        densities,
        responses: has_response.then_some(responses),
    })
}

/// Writes densities as rows, with an optional named response column.
pub fn write_dataset_csv(
    writer: impl Write,
    densities: &[DensityOnGrid],
    response: Option<(&str, &[f64])>,
) -> Result<()> {
    let io = |e: csv::Error| Error::Format(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let m = densities.first().map_or(0, |d| d.grid_size());
    let mut header: Vec<String> = (0..m).map(|j| format!("p{j}")).collect();
    if let Some((name, ys)) = response {
        if ys.len() != densities.len() {
            return Err(Error::LengthMismatch {
                left: densities.len(),
                right: ys.len(),
            });
        }
        header.push(name.to_string());
    }
    w.write_record(&header).map_err(io)?;
    for (i, d) in densities.iter().enumerate() {
        let mut row: Vec<String> = d.values().iter().map(|v| v.to_string()).collect();
        if let Some((_, ys)) = response {
            row.push(ys[i].to_string());
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionRecord {
    pub params: MaternParams,
    pub noise_var: f64,
    pub features: Vec<EmbeddedFeature>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    pub jitter_used: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub params: MaternParams,
    pub features: Vec<EmbeddedFeature>,
    pub labels: Vec<f64>,
    pub zhat: Vec<f64>,
    pub weights: Vec<f64>,
    pub w: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRecord {
    Regression(RegressionRecord),
    Classification(ClassificationRecord),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: ModelRecord,
}

/// A fitted model of either task.
#[derive(Clone, Debug)]
pub enum Model {
    Regression(FittedRegression),
    Classification(LaplaceState),
}

impl Model {
    pub fn task(&self) -> &'static str {
        match self {
            Model::Regression(_) => "regression",
            Model::Classification(_) => "classification",
        }
    }

    pub fn params(&self) -> &MaternParams {
        match self {
            Model::Regression(m) => m.params(),
            Model::Classification(s) => s.params(),
        }
    }

    pub fn grid_size(&self) -> usize {
        match self {
            Model::Regression(m) => m.train().features().grid_size(),
            Model::Classification(s) => s.train().features().grid_size(),
        }
    }

    pub fn to_record(&self) -> ModelRecord {
        let vec = |v: &nalgebra::DVector<f64>| v.iter().copied().collect::<Vec<_>>();
        match self {
            Model::Regression(m) => ModelRecord::Regression(RegressionRecord {
                params: *m.params(),
                noise_var: m.train().noise_var(),
                features: m.train().features().features().to_vec(),
                targets: vec(m.train().targets()),
                weights: vec(m.weights()),
                jitter_used: m.jitter_used(),
            }),
            Model::Classification(s) => ModelRecord::Classification(ClassificationRecord {
                params: *s.params(),
                features: s.train().features().features().to_vec(),
                labels: vec(s.train().labels()),
                zhat: vec(s.zhat()),
                weights: vec(s.weights()),
                w: vec(s.w()),
                iterations: s.iterations(),
            }),
        }
    }

    /// Rebuilds the factorizations from the stored training set and keeps the
    /// stored weights.
    pub fn from_record(rec: ModelRecord) -> Result<Self> {
        match rec {
            ModelRecord::Regression(r) => {
                let train = RegressionTrainSet::new(FeatureSet::new(r.features)?, r.targets, r.noise_var)?;
                let fit = fit_regression(&train, &r.params)?;
                Ok(Model::Regression(fit.with_weights(nalgebra::DVector::from_vec(r.weights))?))
            }
            ModelRecord::Classification(c) => {
                let train = ClassifyTrainSet::new(FeatureSet::new(c.features)?, c.labels)?;
                Ok(Model::Classification(LaplaceState::from_parts(
                    train,
                    c.params,
                    c.zhat,
                    c.weights,
                    c.iterations,
                )?))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            model: self.to_record(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        Self::from_record(file.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classification::{laplace_map, NewtonConfig};
    use crate::covariance::Nu;
    use crate::testing::beta_density;

    fn dens() -> Vec<DensityOnGrid> {
        (0..6).map(|i| beta_density(64, 2.0 + 0.37 * i as f64, 5.0 - 0.21 * i as f64)).collect()
    }

    #[test]
    fn dataset_round_trip() {
        let d = dens();
        let y: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 + 1.0 / 3.0).collect();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &d, Some(("target", &y))).unwrap();
        let back = read_dataset_csv(buf.as_slice(), RowKind::Densities, 0, true).unwrap();
        assert_eq!(back.responses.unwrap(), y);
        for (a, b) in d.iter().zip(&back.densities) {
            for (x, z) in a.values().iter().zip(b.values()) {
                assert!((x - z).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sample_rows_and_errors() {
        let text = "0.1,0.2,0.35,0.5,0.9,1\n0.3,0.31,0.5,-1\n";
        let r = read_dataset_csv(text.as_bytes(), RowKind::Samples, 32, true).unwrap();
        assert_eq!(r.densities.len(), 2);
        assert_eq!(r.densities[0].grid_size(), 32);
        assert_eq!(r.responses.unwrap(), vec![1.0, -1.0]);
        assert!(read_dataset_csv("1,2,x\n".as_bytes(), RowKind::Densities, 0, false).is_err());
        assert!(read_dataset_csv("1,2,3\n1,2\n".as_bytes(), RowKind::Densities, 0, false).is_err());
        assert!(read_dataset_csv("0,0,0\n".as_bytes(), RowKind::Densities, 0, false).is_err());
    }

    #[test]
    fn regression_model_round_trip_is_exact() {
        let d = dens();
        let y = vec![0.3, 0.1, 0.7, 0.2, 0.9, 0.4];
        let train = RegressionTrainSet::from_densities(&d, y, 1e-4).unwrap();
        let fit = fit_regression(&train, &MaternParams::new(0.7, 0.3, Nu::FiveHalves).unwrap()).unwrap();
        let model = Model::Regression(fit.clone());
        let back = Model::from_json(&model.to_json().unwrap()).unwrap();
        let Model::Regression(r) = back else { panic!() };
        assert_eq!(r.weights(), fit.weights());
        let star = beta_density(64, 3.3, 3.1);
        assert_eq!(r.predict(&star).unwrap(), fit.predict(&star).unwrap());
    }

    #[test]
    fn classification_model_round_trip_is_exact() {
        let d = dens();
        let train = ClassifyTrainSet::from_densities(&d, vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0]).unwrap();
        let p = MaternParams::new(2.0, 0.4, Nu::ThreeHalves).unwrap();
        let s = laplace_map(&train, &p, &NewtonConfig::default()).unwrap();
        let json = Model::Classification(s.clone()).to_json().unwrap();
        let Model::Classification(r) = Model::from_json(&json).unwrap() else { panic!() };
        assert_eq!(r.zhat(), s.zhat());
        let star = beta_density(64, 3.3, 3.1);
        assert_eq!(r.predict(&star).unwrap(), s.predict(&star).unwrap());
    }

    #[test]
    fn rejects_unknown_version() {
        let d = dens();
        let train = RegressionTrainSet::from_densities(&d, vec![0.0; 6], 1e-4).unwrap();
        let fit = fit_regression(&train, &MaternParams::new(1.0, 1.0, Nu::Half).unwrap()).unwrap();
        let json = Model::Regression(fit).to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(matches!(Model::from_json(&json), Err(Error::Format(_))));
    }
}
