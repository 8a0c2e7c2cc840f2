//! Geodesic and planar geometry primitives.
//!
//! Everything that needs angles or areas runs in a local east-north frame
//! measured in meters. The frame is an equirectangular projection around a
//! declared origin, which is accurate to well under a centimeter for the few
//! kilometers an exploration area spans.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used for every spherical computation, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Tolerance for coordinate equality, in degrees.
pub const COORD_EPSILON_DEG: f64 = 1e-9;

/// Beyond this distance from the origin a local frame refuses to project.
pub const MAX_PROJECTION_RANGE_M: f64 = 50_000.0;

/// Direction pairs whose cross product is below this are treated as parallel.
pub const PARALLEL_EPSILON: f64 = 1e-9;

/// Ray parameters at or below this are not in front of the camera.
const FORWARD_EPSILON: f64 = 1e-9;

/// Points this close to a polygon edge count as on the boundary, in meters.
const BOUNDARY_EPSILON_M: f64 = 1e-6;

const METERS_PER_DEGREE: f64 = PI * EARTH_RADIUS_M / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeoError {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("point is {distance_m:.1} m from the projection origin (limit {MAX_PROJECTION_RANGE_M} m)")]
    OutOfProjectionRange { distance_m: f64 },
    #[error("polygon ring needs at least 3 distinct vertices")]
    DegeneratePolygon,
}

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeoPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawGeoPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawGeoPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawGeoPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let valid =
            lat.is_finite() && lon.is_finite() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon);
        if valid {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinate { lat, lon })
        }
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Equality up to [`COORD_EPSILON_DEG`] on both axes.
    pub fn approx_eq(&self, other: &GeoPoint) -> bool {
        libm::fabs(self.lat - other.lat) <= COORD_EPSILON_DEG && libm::fabs(self.lon - other.lon) <= COORD_EPSILON_DEG
    }

    pub fn distance_to(&self, other: &GeoPoint) -> f64 {
        haversine_distance(*self, *other)
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let s1 = libm::sin(dphi / 2.0);
    let s2 = libm::sin(dlambda / 2.0);
    let h = s1 * s1 + libm::cos(phi1) * libm::cos(phi2) * s2 * s2;
    2.0 * EARTH_RADIUS_M * libm::asin(libm::sqrt(h.min(1.0)))
}

/// Meters east and north of some origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
}

impl LocalPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &LocalPoint) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    /// Heading of `other` as seen from `self`.
    pub fn bearing_to(&self, other: &LocalPoint) -> Heading {
        Heading::new(libm::atan2(other.x - self.x, other.y - self.y).to_degrees())
    }

    pub fn mean(points: &[LocalPoint]) -> Option<LocalPoint> {
        if points.is_empty() {
            return None;
        }
        let n = points.len() as f64;
        let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Some(LocalPoint::new(sx / n, sy / n))
    }
}

/// Compass heading, degrees clockwise from true north in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Heading(f64);

impl Heading {
    pub fn new(degrees: f64) -> Self {
        let mut h = libm::fmod(degrees, 360.0);
        if h < 0.0 {
            h += 360.0;
        }
        if h >= 360.0 {
            h -= 360.0;
        }
        Heading(h)
    }

    #[inline]
    pub fn degrees(self) -> f64 {
        self.0
    }

    /// Unit vector `(east, north)`.
    pub fn unit_vector(self) -> (f64, f64) {
        let r = self.0.to_radians();
        (libm::sin(r), libm::cos(r))
    }

    /// Smallest absolute angle between two headings, in `[0, 180]`.
    pub fn separation(self, other: Heading) -> f64 {
        let d = libm::fabs(self.0 - other.0);
        if d > 180.0 {
            360.0 - d
        } else {
            d
        }
    }
}

impl From<f64> for Heading {
    fn from(value: f64) -> Self {
        Heading::new(value)
    }
}

impl From<Heading> for f64 {
    fn from(value: Heading) -> Self {
        value.0
    }
}

/// A half-line starting at `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: LocalPoint,
    dir: (f64, f64),
}

impl Ray {
    pub fn new(origin: LocalPoint, heading: Heading) -> Self {
        Self { origin, dir: heading.unit_vector() }
    }

    pub fn direction(&self) -> (f64, f64) {
        self.dir
    }

    pub fn at(&self, t: f64) -> LocalPoint {
        LocalPoint::new(self.origin.x + t * self.dir.0, self.origin.y + t * self.dir.1)
    }
}

/// Equirectangular projection centered on `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    origin: GeoPoint,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        Self { origin, cos_lat: libm::cos(origin.lat.to_radians()) }
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn project(&self, p: GeoPoint) -> Result<LocalPoint, GeoError> {
        let distance_m = haversine_distance(self.origin, p);
        if distance_m >= MAX_PROJECTION_RANGE_M {
            return Err(GeoError::OutOfProjectionRange { distance_m });
        }
        Ok(self.project_unchecked(p))
    }

    fn project_unchecked(&self, p: GeoPoint) -> LocalPoint {
        let mut dlon = p.lon - self.origin.lon;
        if dlon > 180.0 {
            dlon -= 360.0;
        } else if dlon < -180.0 {
            dlon += 360.0;
        }
        LocalPoint::new(dlon * self.cos_lat * METERS_PER_DEGREE, (p.lat - self.origin.lat) * METERS_PER_DEGREE)
    }

    pub fn unproject(&self, p: LocalPoint) -> GeoPoint {
        let lat = (self.origin.lat + p.y / METERS_PER_DEGREE).clamp(-90.0, 90.0);
        let mut lon = self.origin.lon + p.x / (self.cos_lat * METERS_PER_DEGREE);
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        GeoPoint { lat, lon }
    }
}

pub fn project_local(origin: GeoPoint, p: GeoPoint) -> Result<LocalPoint, GeoError> {
    LocalFrame::new(origin).project(p)
}

pub fn unproject_local(origin: GeoPoint, p: LocalPoint) -> GeoPoint {
    LocalFrame::new(origin).unproject(p)
}

/// Initial heading from `a` towards `b`, measured in the local frame of `a`.
pub fn bearing(a: GeoPoint, b: GeoPoint) -> Heading {
    let frame = LocalFrame::new(a);
    LocalPoint::default().bearing_to(&frame.project_unchecked(b))
}

#[inline]
fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// Where the forward half-lines of two rays meet.
///
/// Parallel and anti-parallel rays never meet, and neither does a pair whose
/// lines cross behind (or exactly at) either origin.
pub fn ray_intersection(r1: &Ray, r2: &Ray) -> Option<LocalPoint> {
    let denom = cross(r1.dir, r2.dir);
    if libm::fabs(denom) < PARALLEL_EPSILON {
        return None;
    }
    let w = (r2.origin.x - r1.origin.x, r2.origin.y - r1.origin.y);
    let t = cross(w, r2.dir) / denom;
    let s = cross(w, r1.dir) / denom;
    if t <= FORWARD_EPSILON || s <= FORWARD_EPSILON {
        return None;
    }
    let a = r1.at(t);
    let b = r2.at(s);
    Some(LocalPoint::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0))
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: LocalPoint, a: LocalPoint, b: LocalPoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(&a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&LocalPoint::new(a.x + t * dx, a.y + t * dy))
}

/// Centroid of a triangle and the largest distance from it to any side.
///
/// Sides are segments, so for a degenerate (collinear) triangle the distance
/// to a short side can still be positive.
pub fn triangle_centroid_max_side_distance(p1: LocalPoint, p2: LocalPoint, p3: LocalPoint) -> (LocalPoint, f64) {
    let centroid = LocalPoint::new((p1.x + p2.x + p3.x) / 3.0, (p1.y + p2.y + p3.y) / 3.0);
    let dmax = point_segment_distance(centroid, p1, p2)
        .max(point_segment_distance(centroid, p2, p3))
        .max(point_segment_distance(centroid, p3, p1));
    (centroid, dmax)
}

/// A polygon ring projected into a local frame, ready for repeated queries.
#[derive(Debug, Clone)]
pub struct PlanarRing {
    frame: LocalFrame,
    vertices: Vec<LocalPoint>,
}

impl PlanarRing {
    /// Projects `ring` around the mean of its distinct vertices. A closing
    /// vertex equal to the first is dropped.
    pub fn new(ring: &[GeoPoint]) -> Result<Self, GeoError> {
        let mut distinct: Vec<GeoPoint> = Vec::with_capacity(ring.len());
        for p in ring {
            if !distinct.iter().any(|q| q.approx_eq(p)) {
                distinct.push(*p);
            }
        }
        if distinct.len() < 3 {
            return Err(GeoError::DegeneratePolygon);
        }
        let n = distinct.len() as f64;
        let lat = distinct.iter().map(|p| p.lat).sum::<f64>() / n;
        let lon = distinct.iter().map(|p| p.lon).sum::<f64>() / n;
        let frame = LocalFrame::new(GeoPoint::new(lat, lon)?);

        let mut vertices = Vec::with_capacity(ring.len());
        for p in ring {
            vertices.push(frame.project(*p)?);
        }
        if vertices.len() > 1 && ring[0].approx_eq(&ring[ring.len() - 1]) {
            vertices.pop();
        }
        Ok(Self { frame, vertices })
    }

    pub fn frame(&self) -> &LocalFrame {
        &self.frame
    }

    pub fn vertices(&self) -> &[LocalPoint] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (LocalPoint, LocalPoint)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Unsigned shoelace area in square meters.
    pub fn area_m2(&self) -> f64 {
        let twice: f64 = self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum();
        libm::fabs(twice) / 2.0
    }

    /// Even-odd ray casting; points on an edge are inside.
    pub fn contains_local(&self, p: LocalPoint) -> bool {
        if self.edges().any(|(a, b)| point_segment_distance(p, a, b) <= BOUNDARY_EPSILON_M) {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        match self.frame.project(p) {
            Ok(local) => self.contains_local(local),
            Err(_) => false,
        }
    }
}

pub fn point_in_polygon(ring: &[GeoPoint], p: GeoPoint) -> Result<bool, GeoError> {
    Ok(PlanarRing::new(ring)?.contains(p))
}
