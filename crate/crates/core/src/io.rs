//! Dataset files, synthetic datasets and session snapshots.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::candgen::{unproject, world_size, TextMetricsConfig};
use crate::edits::{EditDelta, FeatureState, LabelStore, Workspace};
use crate::error::{Error, Result};
use crate::model::{validate_labeling, CandidateId, FeaturePoint, LabelCandidate, Labeling, PositionModel};

pub const DEFAULT_ZOOM: u8 = 12;
pub const SESSION_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<FeaturePoint>,
    #[serde(default = "default_zoom")]
    pub zoom: u8,
    #[serde(default = "default_model")]
    pub position_model: PositionModel,
}

fn default_zoom() -> u8 {
    DEFAULT_ZOOM
}

fn default_model() -> PositionModel {
    PositionModel::Four
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidInput("dataset name must not be empty".into()));
        }
        if self.features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for (index, f) in self.features.iter().enumerate() {
            f.validate().map_err(|e| Error::BadRecord {
                index,
                message: e.to_string(),
            })?;
            if !seen.insert(f.id.as_str()) {
                return Err(Error::BadRecord {
                    index,
                    message: format!("duplicate feature id {:?}", f.id),
                });
            }
        }
        Ok(())
    }

    /// Candidate store for this dataset at its own zoom and position model.
    pub fn store(&self, font_size: f64, metrics: TextMetricsConfig) -> Result<LabelStore> {
        LabelStore::new(&self.features, self.zoom, self.position_model, font_size, metrics)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Geojson,
    SimpleJson,
}

impl DatasetFormat {
    /// Guesses the format from a file extension; anything but `.geojson` is simple JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("geojson") => DatasetFormat::Geojson,
            _ => DatasetFormat::SimpleJson,
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Geojson => "geojson",
            DatasetFormat::SimpleJson => "simple-json",
        })
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geojson" => Ok(DatasetFormat::Geojson),
            "simple-json" | "simple" | "json" => Ok(DatasetFormat::SimpleJson),
            other => Err(Error::InvalidInput(format!("unknown dataset format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LoadedDataset> {
    let text = fs::read_to_string(path)?;
    let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    parse_dataset(&text, format, fallback)
}

/// Parses dataset text; `fallback_name` names GeoJSON collections without a `name` member.
pub fn parse_dataset(text: &str, format: DatasetFormat, fallback_name: &str) -> Result<LoadedDataset> {
    let root: Value = serde_json::from_str(text)?;
    let loaded = match format {
        DatasetFormat::Geojson => parse_geojson(&root, fallback_name)?,
        DatasetFormat::SimpleJson => parse_simple(&root)?,
    };
    loaded.dataset.validate()?;
    Ok(loaded)
}

fn parse_geojson(root: &Value, fallback_name: &str) -> Result<LoadedDataset> {
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::InvalidInput("expected a GeoJSON FeatureCollection".into()));
    }
    let items = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("FeatureCollection has no features array".into()))?;
    let mut features = Vec::new();
    let mut warnings = Vec::new();
    for (index, item) in items.iter().enumerate() {
        let bad = |message: &str| Error::BadRecord {
            index,
            message: message.to_string(),
        };
        let geometry = item.get("geometry");
        let kind = geometry.and_then(|g| g.get("type")).and_then(Value::as_str);
        if kind != Some("Point") {
            warnings.push(format!(
                "feature {index}: skipped {} geometry",
                kind.unwrap_or("missing")
            ));
            continue;
        }
        let coords = geometry
            .and_then(|g| g.get("coordinates"))
            .and_then(Value::as_array)
            .filter(|c| c.len() >= 2)
            .ok_or_else(|| bad("point without coordinates"))?;
        let (lon, lat) = match (coords[0].as_f64(), coords[1].as_f64()) {
            (Some(lon), Some(lat)) => (lon, lat),
            _ => return Err(bad("non-numeric coordinates")),
        };
        let props = item.get("properties").filter(|p| p.is_object());
        let name = props
            .and_then(|p| p.get("name"))
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing name property"))?;
        let id = match item.get("id").or_else(|| props.and_then(|p| p.get("id"))) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("f{index}"),
        };
        let weight = match props.and_then(|p| p.get("weight")) {
            None | Some(Value::Null) => 1.0,
            Some(w) => w.as_f64().ok_or_else(|| bad("non-numeric weight"))?,
        };
        features.push(record(index, id, name, lon, lat, weight)?);
    }
    let name = root
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or(fallback_name)
        .to_string();
    Ok(LoadedDataset {
        dataset: Dataset {
            name,
            features,
            zoom: DEFAULT_ZOOM,
            position_model: PositionModel::Four,
        },
        warnings,
    })
}

#[derive(Deserialize)]
struct SimpleRecord {
    id: Value,
    name: String,
    lon: f64,
    lat: f64,
    weight: Option<f64>,
}

fn parse_simple(root: &Value) -> Result<LoadedDataset> {
    let name = root
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::InvalidInput("dataset has no name".into()))?;
    let items = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("dataset has no features array".into()))?;
    let mut features = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let r = SimpleRecord::deserialize(item).map_err(|e| Error::BadRecord {
            index,
            message: e.to_string(),
        })?;
        let id = match r.id {
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            _ => {
                return Err(Error::BadRecord {
                    index,
                    message: "id must be a string or number".into(),
                })
            }
        };
        features.push(record(index, id, &r.name, r.lon, r.lat, r.weight.unwrap_or(1.0))?);
    }
    let zoom = match root.get("zoom") {
        None => DEFAULT_ZOOM,
        Some(z) => serde_json::from_value(z.clone())?,
    };
    let position_model = match root.get("position_model") {
        None => PositionModel::Four,
        Some(m) => serde_json::from_value(m.clone())?,
    };
    Ok(LoadedDataset {
        dataset: Dataset {
            name: name.to_string(),
            features,
            zoom,
            position_model,
        },
        warnings: Vec::new(),
    })
}

fn record(index: usize, id: String, name: &str, lon: f64, lat: f64, weight: f64) -> Result<FeaturePoint> {
    FeaturePoint::new(id, name, lon, lat)
        .and_then(|f| f.with_weight(weight))
        .map_err(|e| Error::BadRecord {
            index,
            message: e.to_string(),
        })
}

#[derive(Serialize)]
struct SimpleOut<'a> {
    name: &'a str,
    zoom: u8,
    position_model: PositionModel,
    features: Vec<SimpleFeatureOut<'a>>,
}

#[derive(Serialize)]
struct SimpleFeatureOut<'a> {
    id: &'a str,
    name: &'a str,
    lon: f64,
    lat: f64,
    weight: f64,
}

/// Simple JSON text for `dataset`. Deleted flags are not part of the format.
pub fn dataset_to_json(dataset: &Dataset) -> Result<String> {
    let out = SimpleOut {
        name: &dataset.name,
        zoom: dataset.zoom,
        position_model: dataset.position_model,
        features: dataset
            .features
            .iter()
            .map(|f| SimpleFeatureOut {
                id: &f.id,
                name: &f.name,
                lon: f.lon,
                lat: f.lat,
                weight: f.base_weight,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_json(dataset)?)?;
    Ok(())
}

/// `rows × cols` points on a jittered pixel grid at [`DEFAULT_ZOOM`], named
/// by random strings of `name_length` letters.
pub fn generate_grid_dataset(
    rows: u32,
    cols: u32,
    spacing_px: f64,
    jitter_px: f64,
    name_length: usize,
    seed: u64,
) -> Result<Dataset> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("grid needs at least one row and one column".into()));
    }
    if !(spacing_px > 0.0 && spacing_px.is_finite()) || !(jitter_px >= 0.0 && jitter_px.is_finite()) {
        return Err(Error::InvalidInput(
            "spacing must be positive and jitter non-negative".into(),
        ));
    }
    if name_length == 0 {
        return Err(Error::InvalidInput("name length must be positive".into()));
    }
    let zoom = DEFAULT_ZOOM;
    let world = world_size(zoom);
    let width = f64::from(cols) * spacing_px;
    let height = f64::from(rows) * spacing_px;
    if width + 2.0 * jitter_px >= world || height + 2.0 * jitter_px >= world {
        return Err(Error::InvalidInput("grid does not fit on the map".into()));
    }
    let (x0, y0) = ((world - width) / 2.0, (world - height) / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            let jx = if jitter_px > 0.0 {
                rng.gen_range(-jitter_px..=jitter_px)
            } else {
                0.0
            };
            let jy = if jitter_px > 0.0 {
                rng.gen_range(-jitter_px..=jitter_px)
            } else {
                0.0
            };
            let x = x0 + f64::from(c) * spacing_px + jx;
            let y = y0 + f64::from(r) * spacing_px + jy;
            let (lon, lat) = unproject(x, y, zoom)?;
            let name: String = (0..name_length)
                .map(|i| {
                    let base = if i == 0 { b'A' } else { b'a' };
                    char::from(base + rng.gen_range(0..26u8))
                })
                .collect();
            features.push(FeaturePoint::new(format!("g{r}_{c}"), name, lon, lat)?);
        }
    }
    Ok(Dataset {
        name: format!("grid-{rows}x{cols}-s{seed}"),
        features,
        zoom,
        position_model: PositionModel::Four,
    })
}

/// Everything needed to resume an editing session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub schema_version: u32,
    pub dataset_name: String,
    pub zoom: u8,
    pub position_model: PositionModel,
    pub metrics: TextMetricsConfig,
    pub grid_cell: f64,
    pub keep_fixed: bool,
    pub shrink_precedence: bool,
    pub features: Vec<SnapshotFeature>,
    pub candidates: Vec<LabelCandidate>,
    pub labeling: BTreeSet<CandidateId>,
    pub undo: Vec<EditDelta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFeature {
    pub point: FeaturePoint,
    pub state: FeatureState,
}

impl SessionSnapshot {
    pub fn capture(dataset_name: &str, ws: &Workspace, labeling: &Labeling) -> Self {
        let store = ws.store();
        SessionSnapshot {
            schema_version: SESSION_SCHEMA_VERSION,
            dataset_name: dataset_name.to_string(),
            zoom: store.zoom(),
            position_model: store.position_model(),
            metrics: *store.metrics(),
            grid_cell: store.grid_cell(),
            keep_fixed: store.keep_fixed,
            shrink_precedence: store.shrink_precedence,
            features: store
                .features_snapshot()
                .into_iter()
                .map(|(point, state)| SnapshotFeature { point, state })
                .collect(),
            candidates: store.candidates().cloned().collect(),
            labeling: labeling.selected.clone(),
            undo: ws.undo_stack().to_vec(),
        }
    }

    /// Rebuilds the workspace and labeling, checking the labeling against the graph.
    pub fn restore(self) -> Result<(Workspace, Labeling)> {
        if self.schema_version != SESSION_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported session schema version {}",
                self.schema_version
            )));
        }
        self.metrics.validate()?;
        let mut store = LabelStore::from_snapshot(
            self.features.into_iter().map(|f| (f.point, f.state)).collect(),
            self.candidates,
            self.zoom,
            self.position_model,
            self.metrics,
            self.grid_cell,
        )?;
        store.keep_fixed = self.keep_fixed;
        store.shrink_precedence = self.shrink_precedence;
        let ws = Workspace::restore(store, self.undo)?;
        let labeling = Labeling::from_selection(ws.graph(), self.labeling);
        if let Some(v) = validate_labeling(ws.graph(), &labeling).first() {
            return Err(Error::InvalidInput(format!("stored labeling is invalid: {v:?}")));
        }
        Ok((ws, labeling))
    }
}

pub fn save_session(snapshot: &SessionSnapshot, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string(snapshot)? + "\n")?;
    Ok(())
}

pub fn load_session(path: &Path) -> Result<SessionSnapshot> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
