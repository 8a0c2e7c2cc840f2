//! GeoJSON world files, maps and detection exports.
//!
//! Coordinates are `[lon, lat]`. World files hold one boundary polygon
//! (`"role": "boundary"`), a point per panorama node (`"role": "pano"`), a
//! line string per edge (`"role": "edge"`) and a point per ground-truth PoI
//! (`"role": "poi"`).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};
use vce_core::eval::{MapPoint, PoIMap};
use vce_core::{
    AreaOfInterest, Detection, DetectionId, ExplorableGraph, GeoPoint, GroundTruthPoI, NodeId, PanoNode, PoICluster,
    PoiId, SessionId, Shot, World,
};

use crate::error::{Result, VceError};

fn bad(msg: impl Into<String>) -> VceError {
    VceError::GeoJson(msg.into())
}

pub fn coords(p: GeoPoint) -> Value {
    json!([p.lon(), p.lat()])
}

pub fn point_feature(p: GeoPoint, properties: Value) -> Value {
    json!({
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": coords(p)},
        "properties": properties,
    })
}

pub fn collection(features: Vec<Value>) -> Value {
    json!({"type": "FeatureCollection", "features": features})
}

fn parse_position(v: &Value) -> Result<GeoPoint> {
    let arr = v.as_array().ok_or_else(|| bad("position must be an array"))?;
    match arr.as_slice() {
        [lon, lat, ..] => {
            let lon = lon.as_f64().ok_or_else(|| bad("longitude must be a number"))?;
            let lat = lat.as_f64().ok_or_else(|| bad("latitude must be a number"))?;
            Ok(GeoPoint::new(lat, lon)?)
        }
        _ => Err(bad("position needs two numbers")),
    }
}

fn features(v: &Value) -> Result<&[Value]> {
    match v.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => v
            .get("features")
            .and_then(Value::as_array)
            .map(Vec::as_slice)
            .ok_or_else(|| bad("FeatureCollection without features")),
        Some("Feature") => Ok(std::slice::from_ref(v)),
        _ => Err(bad("expected a Feature or FeatureCollection")),
    }
}

fn geometry_type(f: &Value) -> Option<&str> {
    f.get("geometry")?.get("type")?.as_str()
}

fn geometry_coords(f: &Value) -> Result<&Value> {
    f.get("geometry").and_then(|g| g.get("coordinates")).ok_or_else(|| bad("feature without coordinates"))
}

fn props(f: &Value) -> &Map<String, Value> {
    static EMPTY: std::sync::OnceLock<Map<String, Value>> = std::sync::OnceLock::new();
    f.get("properties").and_then(Value::as_object).unwrap_or_else(|| EMPTY.get_or_init(Map::new))
}

fn role(f: &Value) -> Option<&str> {
    props(f).get("role").and_then(Value::as_str)
}

fn u32_prop(p: &Map<String, Value>, key: &str) -> Result<u32> {
    p.get(key)
        .and_then(Value::as_u64)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| bad(format!("missing or invalid integer property {key:?}")))
}

fn node_set(p: &Map<String, Value>, key: &str) -> Result<BTreeSet<NodeId>> {
    match p.get(key) {
        None => Ok(BTreeSet::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_u64()
                    .and_then(|v| u32::try_from(v).ok())
                    .map(NodeId)
                    .ok_or_else(|| bad(format!("{key:?} must list node ids")))
            })
            .collect(),
        Some(_) => Err(bad(format!("{key:?} must be an array"))),
    }
}

fn ring(v: &Value) -> Result<Vec<GeoPoint>> {
    let mut pts = v
        .as_array()
        .ok_or_else(|| bad("ring must be an array"))?
        .iter()
        .map(parse_position)
        .collect::<Result<Vec<_>>>()?;
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    Ok(pts)
}

fn polygon_feature(boundary: &[GeoPoint], properties: Value) -> Value {
    let mut ring: Vec<Value> = boundary.iter().map(|p| coords(*p)).collect();
    if let Some(first) = boundary.first() {
        ring.push(coords(*first));
    }
    json!({
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": [ring]},
        "properties": properties,
    })
}

pub fn world_to_geojson(world: &World) -> Value {
    let aoi = world.aoi();
    let mut out = vec![polygon_feature(aoi.boundary(), json!({"role": "boundary", "name": aoi.name()}))];
    for n in world.graph().nodes() {
        out.push(point_feature(
            n.position,
            json!({
                "role": "pano",
                "id": n.id,
                "neighbors": n.neighbors,
                "visible": n.visible_nodes,
                "indoor": n.indoor,
            }),
        ));
    }
    let graph = world.graph();
    for e in graph.edges() {
        let a = graph.nodes()[e.a.index()].position;
        let b = graph.nodes()[e.b.index()].position;
        out.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [coords(a), coords(b)]},
            "properties": {"role": "edge", "a": e.a, "b": e.b, "length_m": e.length_m},
        }));
    }
    for poi in world.pois() {
        out.push(point_feature(poi.position, json!({"role": "poi", "id": poi.id, "visible_from": poi.visible_from})));
    }
    collection(out)
}

pub fn aoi_from_geojson(v: &Value) -> Result<AreaOfInterest> {
    let candidates: Vec<&Value> = match v.get("type").and_then(Value::as_str) {
        Some("Polygon") => return AreaOfInterest::new("aoi", ring(outer_ring(v)?)?).map_err(Into::into),
        _ => features(v)?.iter().filter(|f| geometry_type(f) == Some("Polygon")).collect(),
    };
    let f = match candidates.as_slice() {
        [only] => *only,
        many => many.iter().find(|f| role(f) == Some("boundary")).copied().ok_or_else(|| bad("no boundary polygon"))?,
    };
    let name = props(f).get("name").and_then(Value::as_str).unwrap_or("aoi");
    Ok(AreaOfInterest::new(name, ring(outer_ring(f.get("geometry").unwrap())?)?)?)
}

fn outer_ring(geometry: &Value) -> Result<&Value> {
    geometry.get("coordinates").and_then(|c| c.get(0)).ok_or_else(|| bad("polygon without an outer ring"))
}

pub fn world_from_geojson(v: &Value) -> Result<World> {
    let aoi = aoi_from_geojson(v)?;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut pois = Vec::new();
    for f in features(v)? {
        let p = props(f);
        match role(f) {
            Some("pano") => nodes.push(PanoNode {
                id: NodeId(u32_prop(p, "id")?),
                position: parse_position(geometry_coords(f)?)?,
                neighbors: node_set(p, "neighbors")?,
                visible_nodes: node_set(p, "visible")?,
                indoor: p.get("indoor").and_then(Value::as_bool).unwrap_or(false),
            }),
            Some("edge") => edges.push((NodeId(u32_prop(p, "a")?), NodeId(u32_prop(p, "b")?))),
            Some("poi") => pois.push(GroundTruthPoI {
                id: PoiId(u32_prop(p, "id")?),
                position: parse_position(geometry_coords(f)?)?,
                visible_from: node_set(p, "visible_from")?,
            }),
            _ => {}
        }
    }
    nodes.sort_by_key(|n| n.id);
    if edges.is_empty() {
        edges = nodes
            .iter()
            .flat_map(|n| n.neighbors.iter().filter(move |m| n.id < **m).map(move |m| (n.id, *m)))
            .collect();
    }
    let graph = ExplorableGraph::from_parts(nodes, edges)?;
    Ok(World::new(graph, aoi, pois)?)
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(VceError::io(path))?;
    serde_json::from_str(&text).map_err(|e| VceError::parse(path, e))
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(VceError::io(path))
}

pub fn read_world(path: &Path) -> Result<World> {
    world_from_geojson(&read_json(path)?).map_err(|e| VceError::parse(path, e))
}

/// Ground-truth PoIs only.
pub fn truth_to_geojson(world: &World) -> Value {
    collection(world.pois().iter().map(|p| point_feature(p.position, json!({"role": "poi", "id": p.id}))).collect())
}

pub fn truth_map(world: &World, name: &str) -> PoIMap {
    PoIMap {
        name: name.to_string(),
        points: world.pois().iter().map(|p| MapPoint { id: p.id.0.to_string(), position: p.position }).collect(),
        provenance: "ground truth".into(),
    }
}

pub fn clusters_to_geojson(map: &[PoICluster]) -> Value {
    collection(
        map.iter()
            .map(|c| {
                point_feature(
                    c.centroid,
                    json!({
                        "cluster_id": c.id,
                        "n_detections": c.n_detections(),
                        "distinct_workers": c.distinct_workers,
                    }),
                )
            })
            .collect(),
    )
}

pub fn detections_to_geojson(detections: &[Detection]) -> Value {
    collection(
        detections
            .iter()
            .map(|d| {
                point_feature(
                    d.centroid,
                    json!({
                        "id": d.id.to_string(),
                        "ordinal": d.id.ordinal,
                        "worker_id": d.worker_id,
                        "session_id": d.session_id,
                        "dmax_m": d.dmax_m,
                        "t": d.t,
                        "shots": d.shots,
                    }),
                )
            })
            .collect(),
    )
}

pub fn detections_from_geojson(v: &Value) -> Result<Vec<Detection>> {
    features(v)?
        .iter()
        .filter(|f| geometry_type(f) == Some("Point"))
        .map(|f| {
            let p = props(f);
            let session_id = SessionId(
                p.get("session_id").and_then(Value::as_u64).ok_or_else(|| bad("detection without session_id"))?,
            );
            let shots: [Shot; 3] = serde_json::from_value(p.get("shots").cloned().unwrap_or(Value::Null))
                .map_err(|e| bad(format!("detection shots: {e}")))?;
            Ok(Detection {
                id: DetectionId { session: session_id, ordinal: u32_prop(p, "ordinal")? },
                worker_id: serde_json::from_value(p.get("worker_id").cloned().unwrap_or(Value::Null))
                    .map_err(|e| bad(format!("detection worker_id: {e}")))?,
                session_id,
                shots,
                centroid: parse_position(geometry_coords(f)?)?,
                dmax_m: p.get("dmax_m").and_then(Value::as_f64).unwrap_or(0.0),
                t: p.get("t").and_then(Value::as_f64).unwrap_or(0.0),
            })
        })
        .collect()
}

/// Every point feature except panorama nodes, as a map. Ids come from the
/// `id` or `cluster_id` property, or the feature index.
pub fn poi_map_from_geojson(v: &Value, name: &str) -> Result<PoIMap> {
    let mut points = Vec::new();
    for (i, f) in features(v)?.iter().enumerate() {
        if geometry_type(f) != Some("Point") || role(f) == Some("pano") {
            continue;
        }
        let p = props(f);
        let id = match p.get("id").or_else(|| p.get("cluster_id")) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => i.to_string(),
        };
        points.push(MapPoint { id, position: parse_position(geometry_coords(f)?)? });
    }
    Ok(PoIMap::new(name, points)?)
}

pub fn read_poi_map(path: &Path) -> Result<PoIMap> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("map");
    poi_map_from_geojson(&read_json(path)?, name).map_err(|e| VceError::parse(path, e))
}
