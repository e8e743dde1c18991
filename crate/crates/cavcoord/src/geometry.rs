//! Intersection geometry: lane-level paths through the control zone and
//! the conflict points where paths cross.
//!
//! A path is a fixed curve from the control-zone boundary to the exit of
//! the merging zone, parameterized by arc length. Vehicles never change
//! paths, so all coordination reduces to one scalar position per vehicle.
//! A conflict point pins down where two or more paths cross: one arc
//! distance per participating path. Rear-end safety applies along a
//! single path; lateral safety applies at conflict points. Paths never
//! merge into or split from one another, so point crossings are the only
//! interaction between distinct paths.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{ConflictId, PathId};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("geometry document failed to parse: {0}")]
    Parse(String),
    #[error("geometry needs at least one path")]
    NoPaths,
    #[error("duplicate path id {0}")]
    DuplicatePath(PathId),
    #[error("path {path} has non-positive length {length}")]
    NonPositiveLength { path: PathId, length: f64 },
    #[error("duplicate conflict id {0}")]
    DuplicateConflict(ConflictId),
    #[error("conflict {conflict} needs at least two locations, found {found}")]
    TooFewLocations { conflict: ConflictId, found: usize },
    #[error("conflict {conflict} lists path {path} more than once")]
    RepeatedPath { conflict: ConflictId, path: PathId },
    #[error("conflict {conflict} references unknown path {path}")]
    UnknownPath { conflict: ConflictId, path: PathId },
    #[error(
        "conflict {conflict} places path {path} at {distance}, \
         outside the open interval (0, {length})"
    )]
    DistanceOutOfRange {
        conflict: ConflictId,
        path: PathId,
        distance: f64,
        length: f64,
    },
    #[error("conflicts {first} and {second} duplicate a crossing of paths {path_a} and {path_b}")]
    DuplicateCrossing {
        first: ConflictId,
        second: ConflictId,
        path_a: PathId,
        path_b: PathId,
    },
    #[error("query references unknown path {0}")]
    QueryUnknownPath(PathId),
}

/// Path shape tag; metadata only, the math never branches on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Straight,
    Turn,
}

impl fmt::Display for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathKind::Straight => write!(f, "straight"),
            PathKind::Turn => write!(f, "turn"),
        }
    }
}

/// One lane-level route through the intersection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathGeometry {
    pub id: PathId,
    pub kind: PathKind,
    /// Arc length from control-zone entry to merging-zone exit, meters.
    pub length: f64,
}

/// Where a conflict point sits on one participating path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictLocation {
    pub path: PathId,
    /// Arc distance of the crossing from this path's entry, meters.
    pub distance: f64,
}

/// A point where two or more distinct paths cross.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictPoint {
    pub id: ConflictId,
    pub locations: Vec<ConflictLocation>,
}

impl ConflictPoint {
    /// Arc distance of this conflict on `path`, if the path takes part.
    pub fn distance_on(&self, path: PathId) -> Option<f64> {
        self.locations
            .iter()
            .find(|loc| loc.path == path)
            .map(|loc| loc.distance)
    }
}

/// A conflict seen from an ordered pair of paths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConflictBetween {
    pub id: ConflictId,
    /// Distance on the first path of the query.
    pub distance_a: f64,
    /// Distance on the second path of the query.
    pub distance_b: f64,
}

/// Validated intersection layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionGeometry {
    paths: BTreeMap<PathId, PathGeometry>,
    conflicts: BTreeMap<ConflictId, ConflictPoint>,
}

impl IntersectionGeometry {
    /// Builds a geometry, checking structural invariants: unique ids,
    /// positive lengths, conflicts joining at least two distinct known
    /// paths strictly inside those paths, and no two conflicts repeating
    /// the same crossing of the same path pair.
    pub fn new(
        paths: Vec<PathGeometry>,
        conflicts: Vec<ConflictPoint>,
    ) -> Result<Self, GeometryError> {
        if paths.is_empty() {
            return Err(GeometryError::NoPaths);
        }
        let mut path_map = BTreeMap::new();
        for path in paths {
            if !(path.length > 0.0) || !path.length.is_finite() {
                return Err(GeometryError::NonPositiveLength {
                    path: path.id,
                    length: path.length,
                });
            }
            if path_map.insert(path.id, path).is_some() {
                return Err(GeometryError::DuplicatePath(path.id));
            }
        }
        let mut conflict_map: BTreeMap<ConflictId, ConflictPoint> = BTreeMap::new();
        // crossing key: path pair plus exact distances, normalized so the
        // smaller path id comes first
        let mut crossings: BTreeMap<(PathId, u64, PathId, u64), ConflictId> = BTreeMap::new();
        for conflict in conflicts {
            if conflict.locations.len() < 2 {
                return Err(GeometryError::TooFewLocations {
                    conflict: conflict.id,
                    found: conflict.locations.len(),
                });
            }
            for (i, loc) in conflict.locations.iter().enumerate() {
                if conflict.locations[..i].iter().any(|l| l.path == loc.path) {
                    return Err(GeometryError::RepeatedPath {
                        conflict: conflict.id,
                        path: loc.path,
                    });
                }
                let path = path_map.get(&loc.path).ok_or(GeometryError::UnknownPath {
                    conflict: conflict.id,
                    path: loc.path,
                })?;
                if !loc.distance.is_finite() || loc.distance <= 0.0 || loc.distance >= path.length
                {
                    return Err(GeometryError::DistanceOutOfRange {
                        conflict: conflict.id,
                        path: loc.path,
                        distance: loc.distance,
                        length: path.length,
                    });
                }
            }
            for (i, a) in conflict.locations.iter().enumerate() {
                for b in &conflict.locations[i + 1..] {
                    let key = if a.path < b.path {
                        (a.path, a.distance.to_bits(), b.path, b.distance.to_bits())
                    } else {
                        (b.path, b.distance.to_bits(), a.path, a.distance.to_bits())
                    };
                    if let Some(&first) = crossings.get(&key) {
                        return Err(GeometryError::DuplicateCrossing {
                            first,
                            second: conflict.id,
                            path_a: key.0,
                            path_b: key.2,
                        });
                    }
                    crossings.insert(key, conflict.id);
                }
            }
            let id = conflict.id;
            if conflict_map.insert(id, conflict).is_some() {
                return Err(GeometryError::DuplicateConflict(id));
            }
        }
        Ok(IntersectionGeometry {
            paths: path_map,
            conflicts: conflict_map,
        })
    }

    pub fn path(&self, id: PathId) -> Option<&PathGeometry> {
        self.paths.get(&id)
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathGeometry> {
        self.paths.values()
    }

    pub fn conflicts(&self) -> impl Iterator<Item = &ConflictPoint> {
        self.conflicts.values()
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }

    pub fn conflict_count(&self) -> usize {
        self.conflicts.len()
    }

    /// All conflicts shared by `a` and `b`, in conflict-id order, with
    /// distances reported from each path's own frame. Empty when the
    /// paths never cross, and always empty for `a == b`: interaction
    /// along a shared path is a rear-end matter, not a lateral one.
    pub fn conflicts_between(
        &self,
        a: PathId,
        b: PathId,
    ) -> Result<Vec<ConflictBetween>, GeometryError> {
        if !self.paths.contains_key(&a) {
            return Err(GeometryError::QueryUnknownPath(a));
        }
        if !self.paths.contains_key(&b) {
            return Err(GeometryError::QueryUnknownPath(b));
        }
        if a == b {
            return Ok(Vec::new());
        }
        Ok(self
            .conflicts
            .values()
            .filter_map(|conflict| {
                Some(ConflictBetween {
                    id: conflict.id,
                    distance_a: conflict.distance_on(a)?,
                    distance_b: conflict.distance_on(b)?,
                })
            })
            .collect())
    }

    /// True when distinct known paths `a` and `b` share a conflict.
    pub fn has_conflict(&self, a: PathId, b: PathId) -> bool {
        a != b
            && self
                .conflicts
                .values()
                .any(|c| c.distance_on(a).is_some() && c.distance_on(b).is_some())
    }
}

#[derive(Deserialize)]
struct RawGeometryDoc {
    paths: Vec<RawPath>,
    #[serde(default)]
    conflicts: Vec<RawConflict>,
}

#[derive(Deserialize)]
struct RawPath {
    id: u32,
    kind: PathKind,
    length_m: f64,
}

#[derive(Deserialize)]
struct RawConflict {
    id: u32,
    locations: Vec<RawLocation>,
}

#[derive(Deserialize)]
struct RawLocation {
    path_id: u32,
    distance_m: f64,
}

/// Parses the geometry section of a scenario document and validates it.
///
/// The document is TOML with `[[paths]]` entries `{id, kind, length_m}`
/// and `[[conflicts]]` entries `{id, locations = [{path_id, distance_m},
/// ...]}`. Unrelated keys (simulation parameters in a full scenario
/// file) are ignored, so both full scenarios and geometry-only files
/// load.
pub fn load_geometry(config_text: &str) -> Result<IntersectionGeometry, GeometryError> {
    let raw: RawGeometryDoc =
        toml::from_str(config_text).map_err(|e| GeometryError::Parse(e.to_string()))?;
    let paths = raw
        .paths
        .into_iter()
        .map(|p| PathGeometry {
            id: PathId(p.id),
            kind: p.kind,
            length: p.length_m,
        })
        .collect();
    let conflicts = raw
        .conflicts
        .into_iter()
        .map(|c| ConflictPoint {
            id: ConflictId(c.id),
            locations: c
                .locations
                .into_iter()
                .map(|l| ConflictLocation {
                    path: PathId(l.path_id),
                    distance: l.distance_m,
                })
                .collect(),
        })
        .collect();
    IntersectionGeometry::new(paths, conflicts)
}
