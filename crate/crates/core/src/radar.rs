//! Radar (spider) chart geometry for the feature pentagon.
//!
//! Data and label presentation are kept apart: radii come from a
//! [`FeatureVector`], while [`LabelStyleSpec`] only says how the labels are
//! drawn. Coordinates live in a unit frame with y pointing up; axis 0 sits at
//! the top and later axes proceed clockwise.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, AXIS_LABELS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisLabel {
    pub short_code: String,
    pub long_name: String,
}

impl AxisLabel {
    pub fn new(short_code: &str, long_name: &str) -> Self {
        Self {
            short_code: short_code.to_owned(),
            long_name: long_name.to_owned(),
        }
    }
}

/// The default E, Cp, Cr, O, I labels.
pub fn default_labels() -> Vec<AxisLabel> {
    AXIS_LABELS.iter().map(|(c, n)| AxisLabel::new(c, n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelPlacement {
    OutsideVertex,
    Legend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStyleSpec {
    pub placement: LabelPlacement,
    pub show_value: bool,
}

impl Default for LabelStyleSpec {
    fn default() -> Self {
        Self {
            placement: LabelPlacement::OutsideVertex,
            show_value: false,
        }
    }
}

/// Field order is part of the wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRenderModel {
    pub axis_count: usize,
    pub labels: Vec<AxisLabel>,
    pub radii: Vec<f64>,
    pub vertices: Vec<[f64; 2]>,
    pub grid_rings: Vec<f64>,
    pub style: LabelStyleSpec,
}

/// Angle of axis `k` out of `n`, radians from the +x axis.
pub fn axis_angle(k: usize, n: usize) -> f64 {
    FRAC_PI_2 - TAU * k as f64 / n as f64
}

/// Builds a chart for an arbitrary number of axes (at least three).
pub fn build_radar(
    radii: &[f64],
    labels: &[AxisLabel],
    style: LabelStyleSpec,
    grid_rings: &[f64],
) -> Result<RadarRenderModel> {
    let n = radii.len();
    if n < 3 {
        return Err(Error::invalid(format!("radar needs at least 3 axes, got {n}")));
    }
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} radii", labels.len())));
    }
    if let Some(r) = radii.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::invalid(format!("radius {r} outside [0,1]")));
    }
    let vertices = radii
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let (sin, cos) = axis_angle(k, n).sin_cos();
            [r * cos, r * sin]
        })
        .collect();
    Ok(RadarRenderModel {
        axis_count: n,
        labels: labels.to_vec(),
        radii: radii.to_vec(),
        vertices,
        grid_rings: grid_rings.to_vec(),
        style,
    })
}

/// Pentagon for a card, radii taken from the normalized features.
pub fn build_radar_model(
    fv: &FeatureVector,
    labels: &[AxisLabel],
    style: LabelStyleSpec,
    grid_rings: &[f64],
) -> Result<RadarRenderModel> {
    build_radar(&fv.normalized, labels, style, grid_rings)
}

/// Shoelace area of the vertex polygon.
pub fn polygon_area(model: &RadarRenderModel) -> f64 {
    let v = &model.vertices;
    let twice: f64 = (0..v.len())
        .map(|k| {
            let [x0, y0] = v[k];
            let [x1, y1] = v[(k + 1) % v.len()];
            x0 * y1 - x1 * y0
        })
        .sum();
    (twice / 2.0).abs()
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn labels(n: usize) -> Vec<AxisLabel> {
        (0..n)
            .map(|k| AxisLabel::new(&format!("A{k}"), &format!("axis {k}")))
            .collect()
    }

    fn chart(radii: &[f64]) -> RadarRenderModel {
        build_radar(
            radii,
            &labels(radii.len()),
            LabelStyleSpec::default(),
            &[0.25, 0.5, 0.75, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn unit_pentagon_vertices() {
        let m = chart(&[1.0; 5]);
        assert_abs_diff_eq!(m.vertices[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.vertices[0][1], 1.0, epsilon = 1e-12);
        // cos/sin of (pi/2 - 2pi/5) = sin/cos of 72 degrees
        assert_abs_diff_eq!(m.vertices[1][0], 0.951_056_516_295_153_5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.vertices[1][1], 0.309_016_994_374_947_4, epsilon = 1e-12);
        // clockwise: axis 1 is to the right of the top
        assert!(m.vertices[1][0] > 0.0 && m.vertices[4][0] < 0.0);
    }

    #[test]
    fn collapsed_and_single_axis() {
        let m = chart(&[0.0; 5]);
        assert!(m.vertices.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
        assert_eq!(polygon_area(&m), 0.0);

        let tri = chart(&[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(tri.vertices[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tri.vertices[0][1], 1.0, epsilon = 1e-12);
        assert_eq!(tri.vertices[1], [0.0, 0.0]);
        assert_eq!(tri.vertices[2], [0.0, 0.0]);
    }

    #[test]
    fn pentagon_area_closed_form() {
        let expected = 2.5 * (TAU / 5.0).sin();
        assert_abs_diff_eq!(expected, 2.3776, epsilon = 1e-4);
        assert_abs_diff_eq!(polygon_area(&chart(&[1.0; 5])), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(polygon_area(&chart(&[0.5; 5])), expected / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        assert!(build_radar(&[1.0, 1.0], &labels(2), LabelStyleSpec::default(), &[]).is_err());
        assert!(build_radar(&[1.0, 1.2, 0.0], &labels(3), LabelStyleSpec::default(), &[]).is_err());
        assert!(build_radar(&[1.0, -0.1, 0.0], &labels(3), LabelStyleSpec::default(), &[]).is_err());
        assert!(build_radar(&[1.0, 0.5, 0.0], &labels(4), LabelStyleSpec::default(), &[]).is_err());
    }

    #[test]
    fn wire_field_order() {
        let json = serde_json::to_string(&chart(&[1.0, 0.0, 0.0])).unwrap();
        let keys = [
            "\"axis_count\"",
            "\"labels\"",
            "\"radii\"",
            "\"vertices\"",
            "\"grid_rings\"",
            "\"style\"",
        ];
        let pos: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{json}");
        assert!(json.contains("\"placement\":\"outside_vertex\""));
    }

    proptest! {
        #[test]
        fn vertex_distance_equals_radius(radii in prop::collection::vec(0.0f64..=1.0, 3..9)) {
            let m = chart(&radii);
            for (v, r) in m.vertices.iter().zip(&radii) {
                prop_assert!((v[0].hypot(v[1]) - r).abs() <= 1e-9);
                prop_assert!(v[0] * v[0] + v[1] * v[1] <= 1.0 + 1e-9);
            }
            prop_assert_eq!(&m, &chart(&radii));
        }

        #[test]
        fn rotation_preserves_area(radii in prop::collection::vec(0.0f64..=1.0, 3..9), shift in 0usize..8) {
            let mut rotated = radii.clone();
            rotated.rotate_left(shift % radii.len());
            prop_assert!((polygon_area(&chart(&radii)) - polygon_area(&chart(&rotated))).abs() < 1e-12);
            let mut reversed = radii.clone();
            reversed.reverse();
            prop_assert!((polygon_area(&chart(&radii)) - polygon_area(&chart(&reversed))).abs() < 1e-12);
        }
    }
}
