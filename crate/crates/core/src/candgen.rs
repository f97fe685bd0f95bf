//! Candidate generation in the 4- and 8-position models, analytic text
//! measurement, and conflict-graph construction over a uniform grid.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CandidateId, ConflictGraph, FeaturePoint, LabelCandidate, PositionModel, Rect, Slot, MAX_MERCATOR_LAT,
};

pub const TILE_SIZE: f64 = 256.0;
pub const MAX_ZOOM: u8 = 22;

/// Edge length of the square world in pixels at `zoom`.
pub fn world_size(zoom: u8) -> f64 {
    TILE_SIZE * f64::from(1u32 << zoom)
}

fn check_zoom(zoom: u8) -> Result<()> {
    if zoom > MAX_ZOOM {
        return Err(Error::InvalidInput(format!("zoom {zoom} outside 0..={MAX_ZOOM}")));
    }
    Ok(())
}

/// Web-Mercator world-pixel coordinates; y grows downward.
pub fn project(lon: f64, lat: f64, zoom: u8) -> Result<(f64, f64)> {
    check_zoom(zoom)?;
    if !(-MAX_MERCATOR_LAT..=MAX_MERCATOR_LAT).contains(&lat) {
        return Err(Error::InvalidInput(format!(
            "latitude {lat} is not Web-Mercator projectable"
        )));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(Error::InvalidInput(format!("longitude {lon} outside [-180, 180]")));
    }
    let size = world_size(zoom);
    let x = (lon + 180.0) / 360.0 * size;
    let phi = lat.to_radians();
    let y = (1.0 - (PI / 4.0 + phi / 2.0).tan().ln() / PI) / 2.0 * size;
    Ok((x, y))
}

/// Inverse of [`project`].
pub fn unproject(x: f64, y: f64, zoom: u8) -> Result<(f64, f64)> {
    check_zoom(zoom)?;
    let size = world_size(zoom);
    let lon = x / size * 360.0 - 180.0;
    let n = PI * (1.0 - 2.0 * y / size);
    let lat = n.sinh().atan().to_degrees();
    Ok((lon, lat))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextMetricsConfig {
    pub char_width_factor: f64,
    pub line_height_factor: f64,
}

impl Default for TextMetricsConfig {
    fn default() -> Self {
        TextMetricsConfig {
            char_width_factor: 0.6,
            line_height_factor: 1.2,
        }
    }
}

impl TextMetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.char_width_factor > 0.0 && self.line_height_factor > 0.0) {
            return Err(Error::InvalidInput("text metric factors must be positive".into()));
        }
        Ok(())
    }
}

// Products like 4 * 0.6 * 10 land a hair above the integer.
fn ceil_px(v: f64) -> f64 {
    (v - 1e-9).ceil()
}

/// Splits `text` into `lines` consecutive parts whose character counts differ by at most one.
pub fn balanced_lines(text: &str, lines: u32) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let lines = lines.max(1) as usize;
    let base = chars.len() / lines;
    let extra = chars.len() % lines;
    let mut out = Vec::with_capacity(lines);
    let mut start = 0;
    for i in 0..lines {
        let len = base + usize::from(i < extra);
        out.push(chars[start..start + len].iter().collect());
        start += len;
    }
    out
}

/// Label box `(w, h)` in pixels under the character-count model.
pub fn measure_label(
    text: &str,
    font_size: f64,
    padding: f64,
    lines: u32,
    cfg: &TextMetricsConfig,
) -> Result<(f64, f64)> {
    if text.is_empty() {
        return Err(Error::InvalidInput("label text must not be empty".into()));
    }
    if lines == 0 {
        return Err(Error::InvalidInput("label needs at least one line".into()));
    }
    if !(font_size > 0.0 && font_size.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "font size must be positive, got {font_size}"
        )));
    }
    if !(padding >= 0.0 && padding.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "padding must be non-negative, got {padding}"
        )));
    }
    cfg.validate()?;
    let longest = if text.trim().is_empty() {
        1
    } else {
        balanced_lines(text, lines)
            .iter()
            .map(|l| l.chars().count())
            .max()
            .unwrap_or(1)
            .max(1)
    };
    let w = ceil_px(longest as f64 * cfg.char_width_factor * font_size) + 2.0 * padding;
    let h = ceil_px(f64::from(lines) * cfg.line_height_factor * font_size) + 2.0 * padding;
    Ok((w, h))
}

/// Rectangle for `slot` when the anchor point sits at pixel `(px, py)`.
/// `Free` places the box with its minimum corner on the anchor.
pub fn slot_rect(px: f64, py: f64, w: f64, h: f64, slot: Slot) -> Rect {
    let (x, y) = match slot {
        Slot::AboveRight => (px, py - h),
        Slot::AboveLeft => (px - w, py - h),
        Slot::BelowRight => (px, py),
        Slot::BelowLeft => (px - w, py),
        Slot::RightCenter => (px, py - h / 2.0),
        Slot::LeftCenter => (px - w, py - h / 2.0),
        Slot::AboveCenter => (px - w / 2.0, py - h),
        Slot::BelowCenter => (px - w / 2.0, py),
        Slot::Free => (px, py),
    };
    Rect { x, y, w, h }
}

/// Label style shared by all candidates of one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStyle {
    pub text: String,
    pub font_size: f64,
    pub padding: f64,
    pub lines: u32,
    #[serde(default = "yes")]
    pub box_visible: bool,
}

fn yes() -> bool {
    true
}

impl LabelStyle {
    pub fn new(text: impl Into<String>, font_size: f64) -> Self {
        LabelStyle {
            text: text.into(),
            font_size,
            padding: 0.0,
            lines: 1,
            box_visible: true,
        }
    }

    pub fn measure(&self, cfg: &TextMetricsConfig) -> Result<(f64, f64)> {
        measure_label(&self.text, self.font_size, self.padding, self.lines, cfg)
    }
}

/// Candidates of `feature` (dataset index `feature_index`) for a box of `(w, h)` pixels.
pub fn generate_candidates(
    feature_index: u32,
    feature: &FeaturePoint,
    style: &LabelStyle,
    cfg: &TextMetricsConfig,
    model: PositionModel,
    zoom: u8,
) -> Result<Vec<LabelCandidate>> {
    let (w, h) = style.measure(cfg)?;
    let (px, py) = project(feature.lon, feature.lat, zoom)?;
    Ok(candidates_at(
        feature_index,
        (px, py),
        (w, h),
        feature.base_weight,
        style,
        model,
    ))
}

/// Same as [`generate_candidates`] for an already projected anchor and measured box.
pub fn candidates_at(
    feature_index: u32,
    anchor: (f64, f64),
    size: (f64, f64),
    weight: f64,
    style: &LabelStyle,
    model: PositionModel,
) -> Vec<LabelCandidate> {
    model
        .slots()
        .iter()
        .map(|&slot| LabelCandidate {
            id: CandidateId::for_slot(feature_index, slot),
            feature: feature_index,
            rect: slot_rect(anchor.0, anchor.1, size.0, size.1, slot),
            slot,
            weight,
            fixed: false,
            deleted: false,
            font_size: style.font_size,
            padding: style.padding,
            text_lines: style.lines,
        })
        .collect()
}

/// Closed-rectangle intersection: shared edges and corners count as conflicts.
pub fn rects_conflict(a: &Rect, b: &Rect) -> bool {
    a.x <= b.max_x() && b.x <= a.max_x() && a.y <= b.max_y() && b.y <= a.max_y()
}

/// Uniform bucket grid over candidate rectangles.
#[derive(Clone, Debug)]
pub struct SpatialGrid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<CandidateId>>,
}

impl SpatialGrid {
    pub fn new(cell: f64) -> Self {
        let cell = if cell.is_finite() && cell > 0.0 { cell } else { 1.0 };
        SpatialGrid {
            cell,
            buckets: HashMap::new(),
        }
    }

    /// Grid whose cell size is the median box diagonal of `rects`.
    pub fn for_rects<'a>(rects: impl IntoIterator<Item = &'a Rect>) -> Self {
        let mut diagonals: Vec<f64> = rects.into_iter().map(Rect::diagonal).collect();
        if diagonals.is_empty() {
            return SpatialGrid::new(1.0);
        }
        let mid = diagonals.len() / 2;
        let (_, median, _) = diagonals.select_nth_unstable_by(mid, f64::total_cmp);
        SpatialGrid::new(*median)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn cells(&self, r: &Rect) -> impl Iterator<Item = (i64, i64)> {
        let c = self.cell;
        let (x0, x1) = ((r.x / c).floor() as i64, (r.max_x() / c).floor() as i64);
        let (y0, y1) = ((r.y / c).floor() as i64, (r.max_y() / c).floor() as i64);
        (x0..=x1).flat_map(move |x| (y0..=y1).map(move |y| (x, y)))
    }

    pub fn insert(&mut self, id: CandidateId, rect: &Rect) {
        for key in self.cells(rect).collect::<Vec<_>>() {
            self.buckets.entry(key).or_default().push(id);
        }
    }

    /// `rect` must be the rectangle `id` was inserted with.
    pub fn remove(&mut self, id: CandidateId, rect: &Rect) {
        for key in self.cells(rect).collect::<Vec<_>>() {
            if let Some(bucket) = self.buckets.get_mut(&key) {
                bucket.retain(|&other| other != id);
                if bucket.is_empty() {
                    self.buckets.remove(&key);
                }
            }
        }
    }

    /// Ids stored in any cell touched by `rect`, sorted and deduplicated.
    pub fn query(&self, rect: &Rect) -> Vec<CandidateId> {
        let mut out: Vec<CandidateId> = self
            .cells(rect)
            .filter_map(|key| self.buckets.get(&key))
            .flatten()
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Conflict graph over the live candidates: every intersecting pair plus
/// every pair of candidates sharing a feature.
pub fn build_conflict_graph(candidates: &[LabelCandidate]) -> Result<ConflictGraph> {
    let live: Vec<&LabelCandidate> = candidates.iter().filter(|c| !c.deleted).collect();
    let mut graph = ConflictGraph::new();
    let mut grid = SpatialGrid::for_rects(live.iter().map(|c| &c.rect));
    let mut by_id = HashMap::with_capacity(live.len());
    let mut by_feature: HashMap<u32, Vec<CandidateId>> = HashMap::new();
    for c in &live {
        graph.add_vertex(c.id, c.vertex_info())?;
        if by_id.insert(c.id, *c).is_some() {
            return Err(Error::InvalidInput(format!("duplicate candidate id {}", c.id)));
        }
        by_feature.entry(c.feature).or_default().push(c.id);
        grid.insert(c.id, &c.rect);
    }
    for c in &live {
        for other in grid.query(&c.rect) {
            if other > c.id && rects_conflict(&c.rect, &by_id[&other].rect) {
                graph.add_edge(c.id, other)?;
            }
        }
    }
    for ids in by_feature.values() {
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                graph.add_edge(a, b)?;
            }
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeaturePoint;

    fn r(x: f64, y: f64, w: f64, h: f64) -> Rect {
        Rect::new(x, y, w, h).unwrap()
    }

    #[test]
    fn projection_reference_points() {
        assert_eq!(project(0.0, 0.0, 0).unwrap(), (128.0, 128.0));
        assert_eq!(project(180.0, 0.0, 1).unwrap(), (512.0, 256.0));
        assert!(project(0.0, 86.0, 3).is_err());
        assert!(project(0.0, 0.0, 23).is_err());
    }

    #[test]
    fn projection_vienna_matches_closed_form() {
        // atanh(sin φ) form of the Mercator ordinate, evaluated independently.
        let (lon, lat, zoom) = (16.37f64, 48.21f64, 12u8);
        let size = 256.0 * 4096.0;
        let ex = (lon + 180.0) / 360.0 * size;
        let ey = (0.5 - lat.to_radians().sin().atanh() / (2.0 * PI)) * size;
        let (x, y) = project(lon, lat, zoom).unwrap();
        assert!((x - ex).abs() < 1e-6 && (y - ey).abs() < 1e-6, "{x},{y} vs {ex},{ey}");
        assert!((x - 571_969.080_889).abs() < 1e-3 && (y - 363_584.140_400).abs() < 1e-3);
        let (blon, blat) = unproject(x, y, zoom).unwrap();
        assert!((blon - lon).abs() < 1e-9 && (blat - lat).abs() < 1e-9);
    }

    #[test]
    fn measure_examples() {
        let cfg = TextMetricsConfig::default();
        assert_eq!(measure_label("Wien", 10.0, 0.0, 1, &cfg).unwrap(), (24.0, 12.0));
        assert_eq!(measure_label("Wien", 10.0, 2.0, 1, &cfg).unwrap(), (28.0, 16.0));
        // 13 characters over two lines: 7 + 6, the longer line sets the width.
        assert_eq!(balanced_lines("Grossglockner", 2), vec!["Grossgl", "ockner"]);
        assert_eq!(
            measure_label("Grossglockner", 10.0, 0.0, 2, &cfg).unwrap(),
            (42.0, 24.0)
        );
        assert_eq!(measure_label("   ", 10.0, 0.0, 1, &cfg).unwrap(), (6.0, 12.0));
        assert!(measure_label("", 10.0, 0.0, 1, &cfg).is_err());
        assert!(measure_label("a", 0.0, 0.0, 1, &cfg).is_err());
        assert!(measure_label("a", 10.0, 0.0, 0, &cfg).is_err());
    }

    #[test]
    fn four_and_eight_position_rects() {
        let style = LabelStyle::new("x", 10.0);
        let four = candidates_at(0, (100.0, 100.0), (20.0, 8.0), 1.0, &style, PositionModel::Four);
        let corners: Vec<(f64, f64)> = four.iter().map(|c| (c.rect.x, c.rect.y)).collect();
        assert_eq!(
            corners,
            vec![(100.0, 92.0), (80.0, 92.0), (100.0, 100.0), (80.0, 100.0)]
        );
        for c in &four {
            assert!(c.rect.contains_point(100.0, 100.0));
        }
        let eight = candidates_at(0, (100.0, 100.0), (20.0, 8.0), 1.0, &style, PositionModel::Eight);
        assert_eq!(eight.len(), 8);
        assert_eq!(eight[4].slot, Slot::RightCenter);
        assert_eq!((eight[4].rect.x, eight[4].rect.y), (100.0, 96.0));
        assert_eq!((eight[5].rect.x, eight[5].rect.y), (80.0, 96.0));
        assert_eq!((eight[6].rect.x, eight[6].rect.y), (90.0, 92.0));
        assert_eq!((eight[7].rect.x, eight[7].rect.y), (90.0, 100.0));
    }

    #[test]
    fn closed_intersection() {
        assert!(rects_conflict(&r(0.0, 0.0, 10.0, 4.0), &r(10.0, 0.0, 10.0, 4.0)));
        assert!(!rects_conflict(&r(0.0, 0.0, 10.0, 4.0), &r(11.0, 0.0, 10.0, 4.0)));
        assert!(rects_conflict(&r(0.0, 0.0, 10.0, 4.0), &r(10.0, 4.0, 10.0, 4.0)));
        let a = r(3.0, 3.0, 1.0, 1.0);
        assert!(rects_conflict(&a, &a));
    }

    fn feature_graph(points: &[(f64, f64)]) -> ConflictGraph {
        let style = LabelStyle::new("Wien", 10.0);
        let cands: Vec<LabelCandidate> = points
            .iter()
            .enumerate()
            .flat_map(|(i, &p)| candidates_at(i as u32, p, (24.0, 12.0), 1.0, &style, PositionModel::Four))
            .collect();
        build_conflict_graph(&cands).unwrap()
    }

    #[test]
    fn graph_counts() {
        let one = feature_graph(&[(500.0, 500.0)]);
        assert_eq!((one.vertex_count(), one.edge_count()), (4, 6));
        let apart = feature_graph(&[(500.0, 500.0), (10_500.0, 500.0)]);
        assert_eq!((apart.vertex_count(), apart.edge_count()), (8, 12));
        let same = feature_graph(&[(500.0, 500.0), (500.0, 500.0)]);
        assert_eq!((same.vertex_count(), same.edge_count()), (8, 28));
        same.check_invariants().unwrap();
    }

    #[test]
    fn deleted_candidates_are_not_vertices() {
        let style = LabelStyle::new("Wien", 10.0);
        let mut cands = candidates_at(0, (0.0, 0.0), (24.0, 12.0), 1.0, &style, PositionModel::Four);
        cands[1].deleted = true;
        let g = build_conflict_graph(&cands).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (3, 3));
        let dup = vec![cands[0].clone(), cands[0].clone()];
        assert!(build_conflict_graph(&dup).is_err());
    }

    #[test]
    fn generate_from_feature() {
        let f = FeaturePoint::new("v", "Wien", 0.0, 0.0).unwrap();
        let style = LabelStyle::new("Wien", 10.0);
        let c = generate_candidates(3, &f, &style, &TextMetricsConfig::default(), PositionModel::Four, 0).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[0].id, CandidateId(27));
        assert_eq!(c[0].rect, r(128.0, 116.0, 24.0, 12.0));
    }

    #[test]
    fn grid_insert_remove_query() {
        let mut g = SpatialGrid::new(10.0);
        let a = r(0.0, 0.0, 25.0, 5.0);
        g.insert(CandidateId(1), &a);
        g.insert(CandidateId(2), &r(20.0, 0.0, 5.0, 5.0));
        assert_eq!(g.query(&r(21.0, 1.0, 1.0, 1.0)), vec![CandidateId(1), CandidateId(2)]);
        g.remove(CandidateId(1), &a);
        assert_eq!(g.query(&r(0.0, 0.0, 30.0, 30.0)), vec![CandidateId(2)]);
    }
}
