//! Three-shot triangulation.

use serde::{Deserialize, Serialize};

use super::Shot;
use crate::geo::{ray_intersection, triangle_centroid_max_side_distance, GeoPoint, LocalFrame, Ray};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriangulationFailure {
    /// Some pair of shots does not meet in front of both cameras.
    NoIntersection,
    /// The triangle is too wide: its centroid is at least delta from a side.
    TooSpread,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    pub centroid: GeoPoint,
    pub dmax_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rejection {
    pub reason: TriangulationFailure,
    pub dmax_m: Option<f64>,
}

/// Intersects the three shot rays pairwise and checks the spread of the
/// resulting triangle against `delta_m`.
///
/// Geometry runs in a local frame centered on the mean shot position. Every
/// pair must meet; there is no salvage from two rays.
pub fn triangulate(shots: &[Shot; 3], delta_m: f64) -> Result<Triangulation, Rejection> {
    let no_intersection = Rejection { reason: TriangulationFailure::NoIntersection, dmax_m: None };
    let lat = shots.iter().map(|s| s.position.lat()).sum::<f64>() / 3.0;
    let lon = shots.iter().map(|s| s.position.lon()).sum::<f64>() / 3.0;
    let frame = LocalFrame::new(GeoPoint::new(lat, lon).map_err(|_| no_intersection)?);

    let mut rays = [Ray::new(Default::default(), shots[0].heading); 3];
    for (ray, shot) in rays.iter_mut().zip(shots) {
        let origin = frame.project(shot.position).map_err(|_| no_intersection)?;
        *ray = Ray::new(origin, shot.heading);
    }
    let p01 = ray_intersection(&rays[0], &rays[1]).ok_or(no_intersection)?;
    let p12 = ray_intersection(&rays[1], &rays[2]).ok_or(no_intersection)?;
    let p20 = ray_intersection(&rays[2], &rays[0]).ok_or(no_intersection)?;

    let (centroid, dmax_m) = triangle_centroid_max_side_distance(p01, p12, p20);
    if dmax_m >= delta_m {
        return Err(Rejection { reason: TriangulationFailure::TooSpread, dmax_m: Some(dmax_m) });
    }
    Ok(Triangulation { centroid: frame.unproject(centroid), dmax_m })
}
