//! Spherical distances and open-space perimeter polygons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters (IUGG).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Points closer than this to a perimeter edge count as on the edge.
const EDGE_EPSILON_M: f64 = 1e-6;

/// A WGS84 coordinate in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// Builds a coordinate from the E7 integers used by location-history exports.
    pub fn from_e7(lat_e7: i64, lon_e7: i64) -> Self {
        Self {
            lat: lat_e7 as f64 / 1e7,
            lon: lon_e7 as f64 / 1e7,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    /// Great-circle distance in meters (haversine).
    pub fn distance_m(&self, other: &LatLon) -> f64 {
        let (phi1, phi2) = (self.lat.to_radians(), other.lat.to_radians());
        let dphi = phi2 - phi1;
        let dlambda = (other.lon - self.lon).to_radians();
        let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
    }

    /// Moves the point by a local east/north displacement in meters.
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> LatLon {
        let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
        let dlon = (east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos())).to_degrees();
        LatLon::new(self.lat + dlat, self.lon + dlon)
    }
}

/// Equirectangular projection about a fixed origin, meters east/north.
#[derive(Debug, Clone, Copy)]
struct LocalFrame {
    origin: LatLon,
    cos_lat: f64,
}

impl LocalFrame {
    fn new(origin: LatLon) -> Self {
        Self {
            origin,
            cos_lat: origin.lat.to_radians().cos(),
        }
    }

    fn project(&self, p: &LatLon) -> (f64, f64) {
        let x = (p.lon - self.origin.lon).to_radians() * EARTH_RADIUS_M * self.cos_lat;
        let y = (p.lat - self.origin.lat).to_radians() * EARTH_RADIUS_M;
        (x, y)
    }
}

/// A simple (non-self-intersecting) closed ring.
///
/// The ring is stored without a repeated closing vertex. Containment and
/// edge distances are evaluated in a local equirectangular frame centred on
/// the vertex mean, which is accurate to well under a millimetre over
/// facility-sized perimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<LatLon>,
}

impl Polygon {
    pub fn new(mut vertices: Vec<LatLon>) -> Result<Self> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::Polygon(format!(
                "ring needs at least 3 distinct vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !v.is_valid()) {
            return Err(Error::Polygon(format!("vertex ({}, {}) out of range", v.lat, v.lon)));
        }
        let poly = Self { vertices };
        poly.check_simple()?;
        Ok(poly)
    }

    pub fn vertices(&self) -> &[LatLon] {
        &self.vertices
    }

    /// Arithmetic mean of the vertices.
    pub fn vertex_mean(&self) -> LatLon {
        let n = self.vertices.len() as f64;
        let lat = self.vertices.iter().map(|v| v.lat).sum::<f64>() / n;
        let lon = self.vertices.iter().map(|v| v.lon).sum::<f64>() / n;
        LatLon::new(lat, lon)
    }

    fn projected(&self) -> Vec<(f64, f64)> {
        let frame = LocalFrame::new(self.vertex_mean());
        self.vertices.iter().map(|v| frame.project(v)).collect()
    }

    fn edges(pts: &[(f64, f64)]) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        (0..pts.len()).map(move |i| (pts[i], pts[(i + 1) % pts.len()]))
    }

    fn check_simple(&self) -> Result<()> {
        let pts = self.projected();
        let n = pts.len();
        let area2: f64 = Self::edges(&pts).map(|(a, b)| a.0 * b.1 - b.0 * a.1).sum();
        if area2.abs() < 1e-9 {
            return Err(Error::Polygon("ring has zero area".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a1, a2) = (pts[i], pts[(i + 1) % n]);
                let (b1, b2) = (pts[j], pts[(j + 1) % n]);
                if adjacent {
                    // Adjacent edges share one vertex; they may only overlap if collinear and folded back.
                    let shared = if j == i + 1 { a2 } else { a1 };
                    let (p, q) = if j == i + 1 { (a1, b2) } else { (a2, b1) };
                    if orient(p, shared, q) == 0.0 && dot(sub(p, shared), sub(q, shared)) > 0.0 {
                        return Err(Error::Polygon(format!("edges {i} and {j} fold back on each other")));
                    }
                } else if segments_intersect(a1, a2, b1, b2) {
                    return Err(Error::Polygon(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }

    /// Distance in meters from `point` to the polygon: zero inside or on the
    /// boundary, otherwise the distance to the nearest edge.
    pub fn distance_m(&self, point: &LatLon) -> f64 {
        let frame = LocalFrame::new(self.vertex_mean());
        let pts: Vec<_> = self.vertices.iter().map(|v| frame.project(v)).collect();
        let p = frame.project(point);
        let edge_dist = Self::edges(&pts)
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min);
        if edge_dist <= EDGE_EPSILON_M || ray_cast_inside(p, &pts) {
            0.0
        } else {
            edge_dist
        }
    }

    pub fn contains(&self, point: &LatLon) -> bool {
        self.distance_m(point) == 0.0
    }
}

fn sub(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 - b.0, a.1 - b.1)
}

fn dot(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_intersect(a1: (f64, f64), a2: (f64, f64), b1: (f64, f64), b2: (f64, f64)) -> bool {
    let d1 = orient(b1, b2, a1);
    let d2 = orient(b1, b2, a2);
    let d3 = orient(a1, a2, b1);
    let d4 = orient(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(b1, b2, a1))
        || (d2 == 0.0 && on_segment(b1, b2, a2))
        || (d3 == 0.0 && on_segment(a1, a2, b1))
        || (d4 == 0.0 && on_segment(a1, a2, b2))
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 == 0.0 {
        0.0
    } else {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    };
    let proj = (a.0 + t * ab.0, a.1 + t * ab.1);
    let d = sub(p, proj);
    dot(d, d).sqrt()
}

/// Even-odd rule.
fn ray_cast_inside(p: (f64, f64), pts: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = pts.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = pts[i];
        let (xj, yj) = pts[j];
        if (yi > p.1) != (yj > p.1) {
            let x_cross = xi + (p.1 - yi) * (xj - xi) / (yj - yi);
            if p.0 < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}
