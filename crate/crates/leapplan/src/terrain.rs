//! Piecewise-flat terrain: an axis-aligned rectangle list with heights over a
//! default ground plane. Queries are total; on overlap the first rectangle in
//! list order wins.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub height: f64,
}

impl TerrainRect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TerrainModel {
    #[serde(default)]
    pub default_height: f64,
    #[serde(default)]
    pub rects: Vec<TerrainRect>,
}

impl TerrainModel {
    pub fn flat(height: f64) -> Self {
        Self {
            default_height: height,
            rects: Vec::new(),
        }
    }

    /// Ground height under `(x, y)`.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.rects
            .iter()
            .find(|r| r.contains(x, y))
            .map_or(self.default_height, |r| r.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_height_outside_rects() {
        let t = TerrainModel {
            default_height: 0.1,
            rects: vec![TerrainRect {
                x_min: 1.0,
                x_max: 2.0,
                y_min: -0.5,
                y_max: 0.5,
                height: 0.34,
            }],
        };
        assert_eq!(t.height_at(0.0, 0.0), 0.1);
        assert_eq!(t.height_at(1.5, 0.0), 0.34);
    }

    #[test]
    fn first_rect_wins_on_overlap() {
        let mk = |h| TerrainRect {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            height: h,
        };
        let t = TerrainModel {
            default_height: 0.0,
            rects: vec![mk(0.2), mk(0.7)],
        };
        assert_eq!(t.height_at(0.5, 0.5), 0.2);
    }
}
