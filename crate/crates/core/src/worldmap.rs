//! Occupancy grid world model.
//!
//! Cells are addressed either by grid coordinates `(ix, iy)` or by [`CellId`], an index into
//! the row-major enumeration of free cells. Row 0 of the map file is the row touching the
//! origin corner (lowest `y`).
//!
//! Line of sight is an exact grid traversal between two points. A segment that only touches
//! the corner point of a cell does not enter it, so diagonal moves between two blocked
//! cells that share a corner are clear.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("failed to read map file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse map: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid map field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("map has no free cells")]
    NoFreeCells,
}

/// Planar pose in the world frame. The heading is only carried for rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, heading: 0.0 }
    }

    pub fn with_heading(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let wrapped = (a + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        -PI
    } else {
        wrapped
    }
}

/// Index into the free-cell enumeration of one grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub usize);

/// Placement of a grid in the world, without the occupancy payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: [f64; 2],
}

impl GridFrame {
    /// Grid coordinates of the cell containing a world point; boundaries go to the higher cell.
    pub fn cell_coords(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (u, v) = self.to_cell_units(x, y);
        let (ix, iy) = (u.floor(), v.floor());
        if ix < 0.0 || iy < 0.0 || ix >= self.width as f64 || iy >= self.height as f64 {
            return None;
        }
        Some((ix as usize, iy as usize))
    }

    pub fn to_cell_units(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin[0]) / self.resolution,
            (y - self.origin[1]) / self.resolution,
        )
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Pose {
        Pose::new(
            self.origin[0] + (ix as f64 + 0.5) * self.resolution,
            self.origin[1] + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RowSpec {
    Text(String),
    Bits(Vec<u8>),
}

#[derive(Debug, Deserialize)]
struct MapFile {
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 2],
    occupancy: Vec<RowSpec>,
}

/// Static world geometry. Immutable once built.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    frame: GridFrame,
    occupancy: Vec<bool>,
    free_index: Vec<Option<CellId>>,
    free_cells: Vec<usize>,
}

impl OccupancyGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: [f64; 2],
        occupancy: Vec<bool>,
    ) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::Invalid {
                field: "width",
                reason: "grid dimensions must be positive".into(),
            });
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(MapError::Invalid {
                field: "resolution",
                reason: format!("must be a positive finite number, got {resolution}"),
            });
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(MapError::Invalid {
                field: "origin",
                reason: "non-finite coordinate".into(),
            });
        }
        if occupancy.len() != width * height {
            return Err(MapError::Invalid {
                field: "occupancy",
                reason: format!("expected {} cells, got {}", width * height, occupancy.len()),
            });
        }
        let mut free_index = vec![None; occupancy.len()];
        let mut free_cells = Vec::new();
        for (i, blocked) in occupancy.iter().enumerate() {
            if !blocked {
                free_index[i] = Some(CellId(free_cells.len()));
                free_cells.push(i);
            }
        }
        if free_cells.is_empty() {
            return Err(MapError::NoFreeCells);
        }
        Ok(Self {
            frame: GridFrame {
                width,
                height,
                resolution,
                origin,
            },
            occupancy,
            free_index,
            free_cells,
        })
    }

    /// Builds a grid from text rows (`#` blocked, `.` free), row 0 first.
    pub fn from_rows(rows: &[&str], resolution: f64, origin: [f64; 2]) -> Result<Self, MapError> {
        let height = rows.len();
        let width = rows.first().map(|r| r.chars().count()).unwrap_or(0);
        let specs: Vec<RowSpec> = rows.iter().map(|r| RowSpec::Text(r.to_string())).collect();
        let occupancy = parse_rows(&specs, width, height)?;
        Self::new(width, height, resolution, origin, occupancy)
    }

    pub fn from_json_str(text: &str) -> Result<Self, MapError> {
        let file: MapFile = serde_json::from_str(text)?;
        let occupancy = parse_rows(&file.occupancy, file.width, file.height)?;
        Self::new(
            file.width,
            file.height,
            file.resolution,
            file.origin,
            occupancy,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MapError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    /// Serializes in the text-row map format.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<String> = (0..self.height())
            .map(|iy| {
                (0..self.width())
                    .map(|ix| {
                        if self.is_blocked_cell(ix, iy) {
                            '#'
                        } else {
                            '.'
                        }
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({
            "width": self.width(),
            "height": self.height(),
            "resolution": self.resolution(),
            "origin": self.frame.origin,
            "occupancy": rows,
        })
    }

    pub fn frame(&self) -> &GridFrame {
        &self.frame
    }

    pub fn width(&self) -> usize {
        self.frame.width
    }

    pub fn height(&self) -> usize {
        self.frame.height
    }

    pub fn resolution(&self) -> f64 {
        self.frame.resolution
    }

    pub fn origin(&self) -> [f64; 2] {
        self.frame.origin
    }

    pub fn free_count(&self) -> usize {
        self.free_cells.len()
    }

    pub fn free_cells(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.free_cells.len()).map(CellId)
    }

    /// World extent as `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let [ox, oy] = self.frame.origin;
        let r = self.frame.resolution;
        (
            ox,
            oy,
            ox + self.width() as f64 * r,
            oy + self.height() as f64 * r,
        )
    }

    /// Out-of-grid coordinates count as blocked.
    pub fn is_blocked_cell(&self, ix: usize, iy: usize) -> bool {
        if ix >= self.width() || iy >= self.height() {
            return true;
        }
        self.occupancy[self.frame.index(ix, iy)]
    }

    fn is_blocked_signed(&self, ix: i64, iy: i64) -> bool {
        if ix < 0 || iy < 0 {
            return true;
        }
        self.is_blocked_cell(ix as usize, iy as usize)
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.frame
            .cell_coords(x, y)
            .is_some_and(|(ix, iy)| !self.is_blocked_cell(ix, iy))
    }

    pub fn is_free(&self, p: &Pose) -> bool {
        self.is_free_point(p.x, p.y)
    }

    pub fn cell_at(&self, p: &Pose) -> Option<CellId> {
        let (ix, iy) = self.frame.cell_coords(p.x, p.y)?;
        self.free_index[self.frame.index(ix, iy)]
    }

    pub fn cell_at_coords(&self, ix: usize, iy: usize) -> Option<CellId> {
        if ix >= self.width() || iy >= self.height() {
            return None;
        }
        self.free_index[self.frame.index(ix, iy)]
    }

    pub fn coords(&self, cell: CellId) -> (usize, usize) {
        let i = self.free_cells[cell.0];
        (i % self.width(), i / self.width())
    }

    pub fn center(&self, cell: CellId) -> Pose {
        let (ix, iy) = self.coords(cell);
        self.frame.cell_center(ix, iy)
    }

    /// Row-major grid index of a free cell.
    pub fn grid_index(&self, cell: CellId) -> usize {
        self.free_cells[cell.0]
    }

    /// True iff the segment `a → b` enters no blocked cell.
    pub fn line_of_sight(&self, a: &Pose, b: &Pose) -> bool {
        let ua = self.frame.to_cell_units(a.x, a.y);
        let ub = self.frame.to_cell_units(b.x, b.y);
        self.clear_in_cell_units(ua, ub)
    }

    pub(crate) fn clear_in_cell_units(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        traverse_cells(a, b, |ix, iy| !self.is_blocked_signed(ix, iy))
    }

    /// Free cells whose centers lie within `radius` of `p` and are in line of sight of it.
    /// The cell containing `p` is always included when free. Sorted by id.
    pub fn visible_cells(&self, p: &Pose, radius: f64) -> Vec<CellId> {
        let Some(own) = self.cell_at(p) else {
            return Vec::new();
        };
        let res = self.resolution();
        let (u, v) = self.frame.to_cell_units(p.x, p.y);
        let reach = if radius.is_finite() {
            (radius / res).ceil() as i64 + 1
        } else {
            i64::MAX / 4
        };
        let x0 = ((u.floor() as i64).saturating_sub(reach)).max(0) as usize;
        let y0 = ((v.floor() as i64).saturating_sub(reach)).max(0) as usize;
        let x1 = ((u.floor() as i64).saturating_add(reach)).min(self.width() as i64 - 1) as usize;
        let y1 = ((v.floor() as i64).saturating_add(reach)).min(self.height() as i64 - 1) as usize;
        let r2 = radius * radius;
        let mut out = Vec::new();
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let Some(cell) = self.cell_at_coords(ix, iy) else {
                    continue;
                };
                if cell == own {
                    out.push(cell);
                    continue;
                }
                let c = self.frame.cell_center(ix, iy);
                let (dx, dy) = (c.x - p.x, c.y - p.y);
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                if self.clear_in_cell_units((u, v), (ix as f64 + 0.5, iy as f64 + 0.5)) {
                    out.push(cell);
                }
            }
        }
        out
    }
}

/// Growing set of free cells with discovery order kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CellMask {
    bits: Vec<bool>,
    order: Vec<CellId>,
}

impl CellMask {
    pub fn new(cells: usize) -> Self {
        Self {
            bits: vec![false; cells],
            order: Vec::new(),
        }
    }

    /// Adds a cell; returns true if it was not present.
    pub fn insert(&mut self, cell: CellId) -> bool {
        if self.bits[cell.0] {
            return false;
        }
        self.bits[cell.0] = true;
        self.order.push(cell);
        true
    }

    pub fn contains(&self, cell: CellId) -> bool {
        self.bits[cell.0]
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.bits.len()
    }

    pub fn fraction(&self) -> f64 {
        self.order.len() as f64 / self.bits.len() as f64
    }

    /// Cells in insertion order.
    pub fn order(&self) -> &[CellId] {
        &self.order
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

fn parse_rows(rows: &[RowSpec], width: usize, height: usize) -> Result<Vec<bool>, MapError> {
    if rows.len() != height {
        return Err(MapError::Invalid {
            field: "occupancy",
            reason: format!("expected {height} rows, got {}", rows.len()),
        });
    }
    let mut occupancy = Vec::with_capacity(width * height);
    for (iy, row) in rows.iter().enumerate() {
        let before = occupancy.len();
        match row {
            RowSpec::Text(s) => {
                for ch in s.chars() {
                    occupancy.push(match ch {
                        '#' => true,
                        '.' => false,
                        other => {
                            return Err(MapError::Invalid {
                                field: "occupancy",
                                reason: format!("row {iy}: unexpected character {other:?}"),
                            })
                        }
                    });
                }
            }
            RowSpec::Bits(bits) => {
                for &b in bits {
                    occupancy.push(match b {
                        0 => false,
                        1 => true,
                        other => {
                            return Err(MapError::Invalid {
                                field: "occupancy",
                                reason: format!("row {iy}: bitmap value {other} is not 0 or 1"),
                            })
                        }
                    });
                }
            }
        }
        if occupancy.len() - before != width {
            return Err(MapError::Invalid {
                field: "occupancy",
                reason: format!(
                    "row {iy} has {} cells, expected {width}",
                    occupancy.len() - before
                ),
            });
        }
    }
    Ok(occupancy)
}

/// Walks the cells crossed by the segment `a → b` (cell units), calling `visit` on each
/// until it returns false. Returns whether the walk completed.
///
/// Which boundary comes first is decided by cross-multiplying distances from the fixed start
/// point rather than by accumulated `t` values, which keeps exact ties (corner crossings)
/// exact when endpoints sit on half-integer coordinates.
pub(crate) fn traverse_cells(
    a: (f64, f64),
    b: (f64, f64),
    mut visit: impl FnMut(i64, i64) -> bool,
) -> bool {
    let (ax, ay) = a;
    let (bx, by) = b;
    if !(ax.is_finite() && ay.is_finite() && bx.is_finite() && by.is_finite()) {
        return false;
    }
    let (mut cx, mut cy) = (ax.floor() as i64, ay.floor() as i64);
    let (ex, ey) = (bx.floor() as i64, by.floor() as i64);
    let (dx, dy) = (bx - ax, by - ay);
    let step_x: i64 = if dx > 0.0 {
        1
    } else if dx < 0.0 {
        -1
    } else {
        0
    };
    let step_y: i64 = if dy > 0.0 {
        1
    } else if dy < 0.0 {
        -1
    } else {
        0
    };
    let max_steps = (ex - cx).abs() + (ey - cy).abs() + 2;

    for _ in 0..=max_steps {
        if !visit(cx, cy) {
            return false;
        }
        if cx == ex && cy == ey {
            return true;
        }
        // Distance to the next boundary on each axis, scaled by the other axis' extent.
        let bound_x = if step_x > 0 {
            (cx + 1) as f64
        } else {
            cx as f64
        };
        let bound_y = if step_y > 0 {
            (cy + 1) as f64
        } else {
            cy as f64
        };
        let kx = if step_x != 0 {
            (bound_x - ax).abs() * dy.abs()
        } else {
            f64::INFINITY
        };
        let ky = if step_y != 0 {
            (bound_y - ay).abs() * dx.abs()
        } else {
            f64::INFINITY
        };
        // Past the end of the segment on both axes: stop at the end cell.
        let past_x = step_x == 0 || (bound_x - ax).abs() > dx.abs();
        let past_y = step_y == 0 || (bound_y - ay).abs() > dy.abs();
        if past_x && past_y {
            break;
        }
        if kx < ky {
            cx += step_x;
        } else if ky < kx {
            cy += step_y;
        } else {
            cx += step_x;
            cy += step_y;
        }
    }
    visit(ex, ey)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(w: usize, h: usize) -> OccupancyGrid {
        OccupancyGrid::new(w, h, 1.0, [0.0, 0.0], vec![false; w * h]).unwrap()
    }

    #[test]
    fn three_by_three_all_free() {
        let g = OccupancyGrid::from_rows(&["...", "...", "..."], 1.0, [0.0, 0.0]).unwrap();
        assert_eq!(g.free_count(), 9);
    }

    #[test]
    fn blocked_center_leaves_eight() {
        let g = OccupancyGrid::from_rows(&["...", ".#.", "..."], 1.0, [0.0, 0.0]).unwrap();
        assert_eq!(g.free_count(), 8);
        assert!(g.cell_at(&Pose::new(1.5, 1.5)).is_none());
    }

    #[test]
    fn missing_resolution_names_field() {
        let text = r#"{"width":2,"height":1,"origin":[0,0],"occupancy":[".."]}"#;
        let err = OccupancyGrid::from_json_str(text).unwrap_err();
        assert!(err.to_string().contains("resolution"), "{err}");
    }

    #[test]
    fn bitmap_rows_convert() {
        let text = r#"{"width":3,"height":2,"resolution":0.5,"origin":[1,2],"occupancy":[[0,1,0],[0,0,0]]}"#;
        let g = OccupancyGrid::from_json_str(text).unwrap();
        assert_eq!(g.free_count(), 5);
        assert!(!g.is_free_point(1.75, 2.25));
        assert!(g.is_free_point(1.25, 2.25));
    }

    #[test]
    fn all_blocked_rejected() {
        assert!(matches!(
            OccupancyGrid::from_rows(&["##"], 1.0, [0.0, 0.0]),
            Err(MapError::NoFreeCells)
        ));
    }

    #[test]
    fn bad_dimensions_rejected() {
        let text = r#"{"width":3,"height":1,"resolution":1,"origin":[0,0],"occupancy":[".."]}"#;
        assert!(OccupancyGrid::from_json_str(text).is_err());
        let text = r#"{"width":2,"height":1,"resolution":0,"origin":[0,0],"occupancy":[".."]}"#;
        assert!(OccupancyGrid::from_json_str(text).is_err());
    }

    #[test]
    fn boundary_points_belong_to_higher_cell() {
        let g = open(3, 3);
        assert_eq!(g.frame().cell_coords(1.0, 2.0), Some((1, 2)));
        assert_eq!(g.frame().cell_coords(3.0, 0.5), None);
        assert_eq!(g.frame().cell_coords(-0.01, 0.5), None);
    }

    #[test]
    fn los_identity_and_corridor() {
        let g = open(5, 1);
        let a = Pose::new(0.5, 0.5);
        assert!(g.line_of_sight(&a, &a));
        assert!(g.line_of_sight(&a, &Pose::new(4.5, 0.5)));
    }

    #[test]
    fn los_blocked_by_wall_cell() {
        let g = OccupancyGrid::from_rows(
            &[".....", ".....", "..#..", ".....", "....."],
            1.0,
            [0.0, 0.0],
        )
        .unwrap();
        let a = Pose::new(0.5, 2.5);
        let b = Pose::new(4.5, 2.5);
        assert!(!g.line_of_sight(&a, &b));
        assert!(!g.line_of_sight(&b, &a));
    }

    #[test]
    fn corner_graze_is_clear() {
        // Blocked cells at (1,0) and (0,1); the diagonal from (0,0) to (1,1) only touches corners.
        let g = OccupancyGrid::from_rows(&[".#", "#."], 1.0, [0.0, 0.0]).unwrap();
        assert!(g.line_of_sight(&Pose::new(0.5, 0.5), &Pose::new(1.5, 1.5)));
        assert!(g.line_of_sight(&Pose::new(1.5, 1.5), &Pose::new(0.5, 0.5)));
    }

    #[test]
    fn out_of_bounds_is_blocked() {
        let g = open(3, 3);
        assert!(!g.line_of_sight(&Pose::new(0.5, 0.5), &Pose::new(5.0, 0.5)));
        assert!(!g.line_of_sight(&Pose::new(-1.0, 0.5), &Pose::new(0.5, 0.5)));
    }

    #[test]
    fn visible_zero_radius_is_own_cell() {
        let g = open(5, 5);
        let p = Pose::new(2.3, 1.7);
        assert_eq!(g.visible_cells(&p, 0.0), vec![g.cell_at(&p).unwrap()]);
    }

    #[test]
    fn visible_open_map_sees_everything() {
        let g = open(5, 5);
        let diag = 5.0 * 2f64.sqrt();
        assert_eq!(g.visible_cells(&Pose::new(0.5, 0.5), diag).len(), 25);
        assert_eq!(
            g.visible_cells(&Pose::new(2.5, 2.5), f64::INFINITY).len(),
            25
        );
    }

    #[test]
    fn visible_from_blocked_is_empty() {
        let g = OccupancyGrid::from_rows(&["#."], 1.0, [0.0, 0.0]).unwrap();
        assert!(g.visible_cells(&Pose::new(0.5, 0.5), 10.0).is_empty());
    }

    #[test]
    fn heading_normalization() {
        assert!((normalize_angle(3.0 * PI) + PI).abs() < 1e-12);
        assert_eq!(normalize_angle(PI), -PI);
        assert!((normalize_angle(0.5) - 0.5).abs() < 1e-12);
    }
}
