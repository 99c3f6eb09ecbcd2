//! Road network, route resolution and grade queries.
//!
//! Altitude is stored as a piecewise-linear function of the along-road
//! offset, so the grade is constant on each piece and equal to
//! `asin(rise / length)` of that piece.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PlatoonError, Result};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Origin,
    Destination,
    Intersection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNode {
    pub id: NodeId,
    pub name: String,
    pub kind: NodeKind,
}

/// Directed road segment. Bidirectional roads appear twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    /// `[offset_m, altitude_m]` samples from offset 0 to `length_m`.
    pub altitude: Vec<[f64; 2]>,
    pub speed_limit_mps: f64,
}

impl RoadSegment {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| {
            Err(PlatoonError::Invalid(format!(
                "segment {}->{}: {msg}",
                self.from, self.to
            )))
        };
        if !(self.length_m > 0.0) {
            return bad(format!("length {} must be positive", self.length_m));
        }
        if !(self.speed_limit_mps > 0.0) {
            return bad(format!("speed limit {} must be positive", self.speed_limit_mps));
        }
        if self.altitude.len() < 2 {
            return bad("needs at least two altitude samples".into());
        }
        if self.altitude[0][0] != 0.0 {
            return bad("first altitude offset must be 0".into());
        }
        let last = self.altitude[self.altitude.len() - 1][0];
        if (last - self.length_m).abs() > 1e-9 * self.length_m.max(1.0) {
            return bad(format!("last altitude offset {last} != length {}", self.length_m));
        }
        for w in self.altitude.windows(2) {
            let run = w[1][0] - w[0][0];
            if !(run > 0.0) {
                return bad("altitude offsets must be strictly increasing".into());
            }
            if (w[1][1] - w[0][1]).abs() > run {
                return bad("grade exceeds |sin| <= 1".into());
            }
        }
        Ok(())
    }

    pub fn start_altitude(&self) -> f64 {
        self.altitude[0][1]
    }

    pub fn end_altitude(&self) -> f64 {
        self.altitude[self.altitude.len() - 1][1]
    }
}

/// Piecewise-linear altitude over `[0, length]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltitudeProfile {
    offsets: Vec<f64>,
    altitudes: Vec<f64>,
}

impl AltitudeProfile {
    /// Builds a profile from `(offset, altitude)` knots. Offsets must start at
    /// zero and increase strictly; a single knot gives a zero-length profile.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(PlatoonError::Invalid("altitude profile needs a knot".into()));
        }
        if points[0].0 != 0.0 {
            return Err(PlatoonError::Invalid("altitude profile must start at 0".into()));
        }
        for w in points.windows(2) {
            let run = w[1].0 - w[0].0;
            if !(run > 0.0) {
                return Err(PlatoonError::Invalid(
                    "altitude offsets must be strictly increasing".into(),
                ));
            }
            if (w[1].1 - w[0].1).abs() > run {
                return Err(PlatoonError::Invalid("grade exceeds |sin| <= 1".into()));
            }
        }
        Ok(Self {
            offsets: points.iter().map(|p| p.0).collect(),
            altitudes: points.iter().map(|p| p.1).collect(),
        })
    }

    pub fn flat(length: f64) -> Self {
        if length > 0.0 {
            Self { offsets: vec![0.0, length], altitudes: vec![0.0, 0.0] }
        } else {
            Self { offsets: vec![0.0], altitudes: vec![0.0] }
        }
    }

    pub fn length(&self) -> f64 {
        *self.offsets.last().unwrap()
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.offsets.iter().copied().zip(self.altitudes.iter().copied())
    }

    pub fn num_pieces(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Index of the piece containing `s`; `s` at a knot belongs to the piece
    /// starting there, except at the final offset.
    fn piece(&self, s: f64) -> usize {
        let n = self.num_pieces();
        if n == 0 {
            return 0;
        }
        let idx = self.offsets.partition_point(|&o| o <= s);
        idx.saturating_sub(1).min(n - 1)
    }

    /// First knot strictly inside `(a, b)`, where the grade may jump.
    pub fn first_knot_in(&self, a: f64, b: f64) -> Option<f64> {
        let idx = self.offsets.partition_point(|&o| o <= a);
        self.offsets.get(idx).copied().filter(|&o| o < b)
    }

    fn piece_sin(&self, k: usize) -> f64 {
        if self.num_pieces() == 0 {
            return 0.0;
        }
        let run = self.offsets[k + 1] - self.offsets[k];
        ((self.altitudes[k + 1] - self.altitudes[k]) / run).clamp(-1.0, 1.0)
    }

    /// Grade angle in radians; errors outside `[0, length]`.
    pub fn grade_at(&self, s: f64) -> Result<f64> {
        let length = self.length();
        if !(0.0..=length).contains(&s) {
            return Err(PlatoonError::OutOfRange { s, length });
        }
        Ok(self.piece_sin(self.piece(s)).asin())
    }

    /// Grade with the road treated as flat outside `[0, length]`.
    pub fn grade_clamped(&self, s: f64) -> f64 {
        if s < 0.0 || s > self.length() {
            0.0
        } else {
            self.piece_sin(self.piece(s)).asin()
        }
    }

    /// Altitude, held constant outside `[0, length]`.
    pub fn altitude_at(&self, s: f64) -> f64 {
        if self.num_pieces() == 0 || s <= 0.0 {
            return self.altitudes[0];
        }
        if s >= self.length() {
            return *self.altitudes.last().unwrap();
        }
        let k = self.piece(s);
        let frac = (s - self.offsets[k]) / (self.offsets[k + 1] - self.offsets[k]);
        self.altitudes[k] + frac * (self.altitudes[k + 1] - self.altitudes[k])
    }

    /// Sub-profile over `[start, start + length]` re-based to offset zero.
    /// The part beyond the end of this profile is flat.
    pub fn window(&self, start: f64, length: f64) -> AltitudeProfile {
        let end = start + length;
        let mut pts = vec![(0.0, self.altitude_at(start))];
        for (&o, &a) in self.offsets.iter().zip(&self.altitudes) {
            if o > start && o < end {
                pts.push((o - start, a));
            }
        }
        if length > 0.0 {
            let last = pts.last().unwrap().0;
            if length - last > 1e-9 {
                pts.push((length, self.altitude_at(end)));
            } else {
                pts.last_mut().unwrap().1 = self.altitude_at(end);
            }
        }
        AltitudeProfile::new(&pts).expect("window of a valid profile is valid")
    }

    /// Appends `other` after this profile, shifting its altitudes so the
    /// joined profile is continuous.
    pub fn concat(&self, other: &AltitudeProfile) -> AltitudeProfile {
        let base = self.length();
        let shift = *self.altitudes.last().unwrap() - other.altitudes[0];
        let mut offsets = self.offsets.clone();
        let mut altitudes = self.altitudes.clone();
        for (o, a) in other.knots().skip(1) {
            offsets.push(base + o);
            altitudes.push(a + shift);
        }
        AltitudeProfile { offsets, altitudes }
    }
}

/// A resolved node sequence with continuous route coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub nodes: Vec<NodeId>,
    /// Indices into the network's segment list.
    pub segments: Vec<usize>,
    /// Route-coordinate offset of each node.
    pub node_offsets: Vec<f64>,
    pub speed_limits: Vec<f64>,
    pub total_length: f64,
    pub profile: AltitudeProfile,
}

impl Route {
    pub fn grade_at(&self, s: f64) -> Result<f64> {
        grade_at(self, s)
    }

    /// Speed limit of the segment containing `s` (clamped to the route).
    pub fn speed_limit_at(&self, s: f64) -> f64 {
        if self.speed_limits.is_empty() {
            return f64::INFINITY;
        }
        let k = self.node_offsets.partition_point(|&o| o <= s);
        self.speed_limits[k.saturating_sub(1).min(self.speed_limits.len() - 1)]
    }

    pub fn offset_of(&self, node: NodeId) -> Option<f64> {
        self.nodes.iter().position(|&n| n == node).map(|i| self.node_offsets[i])
    }
}

/// Grade angle at route position `s`.
pub fn grade_at(route: &Route, s: f64) -> Result<f64> {
    if !(0.0..=route.total_length).contains(&s) {
        return Err(PlatoonError::OutOfRange { s, length: route.total_length });
    }
    route.profile.grade_at(s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkFile {
    nodes: Vec<RoadNode>,
    segments: Vec<RoadSegment>,
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<RoadNode>,
    segments: Vec<RoadSegment>,
    node_index: HashMap<NodeId, usize>,
    adjacency: HashMap<(NodeId, NodeId), usize>,
}

impl RoadNetwork {
    pub fn new(nodes: Vec<RoadNode>, segments: Vec<RoadSegment>) -> Result<Self> {
        let mut node_index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id, i).is_some() {
                return Err(PlatoonError::Invalid(format!("duplicate node id {}", n.id)));
            }
        }
        let mut adjacency = HashMap::new();
        let mut node_alt: HashMap<NodeId, f64> = HashMap::new();
        for (k, seg) in segments.iter().enumerate() {
            seg.validate()?;
            for id in [seg.from, seg.to] {
                if !node_index.contains_key(&id) {
                    return Err(PlatoonError::Invalid(format!(
                        "segment {}->{} references unknown node {id}",
                        seg.from, seg.to
                    )));
                }
            }
            if seg.from == seg.to {
                return Err(PlatoonError::Invalid(format!("self-loop at node {}", seg.from)));
            }
            if adjacency.insert((seg.from, seg.to), k).is_some() {
                return Err(PlatoonError::Invalid(format!(
                    "duplicate segment {}->{}",
                    seg.from, seg.to
                )));
            }
            for (id, alt) in [(seg.from, seg.start_altitude()), (seg.to, seg.end_altitude())] {
                let prev = *node_alt.entry(id).or_insert(alt);
                if (prev - alt).abs() > 1e-6 {
                    return Err(PlatoonError::Invalid(format!(
                        "segments disagree on altitude at node {id}: {prev} vs {alt}"
                    )));
                }
            }
        }
        Ok(Self { nodes, segments, node_index, adjacency })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        Self::new(file.nodes, file.segments)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let file: NetworkFile = serde_json::from_str(&text).map_err(|source| {
            PlatoonError::Parse { path: path.display().to_string(), source }
        })?;
        Self::new(file.nodes, file.segments)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = NetworkFile { nodes: self.nodes.clone(), segments: self.segments.clone() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&RoadNode> {
        self.node_index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }

    pub fn segment_between(&self, from: NodeId, to: NodeId) -> Option<usize> {
        self.adjacency.get(&(from, to)).copied()
    }

    pub fn successors(&self, node: NodeId) -> impl Iterator<Item = &RoadSegment> + '_ {
        self.segments.iter().filter(move |s| s.from == node)
    }
}

/// Resolves a node sequence into a route. Deterministic; a single node gives
/// a zero-length route.
pub fn resolve_route(network: &RoadNetwork, nodes: &[NodeId]) -> Result<Route> {
    let Some(&first) = nodes.first() else {
        return Err(PlatoonError::Invalid("empty node list".into()));
    };
    if network.node(first).is_none() {
        return Err(PlatoonError::Invalid(format!("unknown node {first}")));
    }
    let mut segments = Vec::with_capacity(nodes.len().saturating_sub(1));
    let mut node_offsets = vec![0.0];
    let mut speed_limits = Vec::new();
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut offset = 0.0;
    for w in nodes.windows(2) {
        let k = network
            .segment_between(w[0], w[1])
            .ok_or(PlatoonError::Connectivity { from: w[0], to: w[1] })?;
        let seg = &network.segments[k];
        let skip = usize::from(!points.is_empty());
        for p in seg.altitude.iter().skip(skip) {
            points.push((offset + p[0], p[1]));
        }
        offset += seg.length_m;
        segments.push(k);
        node_offsets.push(offset);
        speed_limits.push(seg.speed_limit_mps);
    }
    let profile = if points.is_empty() {
        AltitudeProfile::flat(0.0)
    } else {
        AltitudeProfile::new(&points)?
    };
    Ok(Route {
        nodes: nodes.to_vec(),
        segments,
        node_offsets,
        speed_limits,
        total_length: offset,
        profile,
    })
}

/// Shared stretch of two routes, in each route's own coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub nodes: Vec<NodeId>,
    pub start_on_a: f64,
    pub end_on_a: f64,
    pub start_on_b: f64,
    pub end_on_b: f64,
}

impl Overlap {
    pub fn merge_node(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn split_node(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        self.end_on_a - self.start_on_a
    }
}

/// Longest contiguous run of nodes traversed in the same order by both
/// routes (at least one shared segment). Ties go to the earliest run on `a`.
pub fn common_suffix_overlap(a: &Route, b: &Route) -> Option<Overlap> {
    let (n, m) = (a.nodes.len(), b.nodes.len());
    // run[i][j]: length of the common run ending at a[i-1], b[j-1]
    let mut run = vec![vec![0usize; m + 1]; n + 1];
    let mut best = (0usize, 0usize, 0usize);
    for i in 1..=n {
        for j in 1..=m {
            if a.nodes[i - 1] == b.nodes[j - 1] {
                run[i][j] = run[i - 1][j - 1] + 1;
                if run[i][j] > best.0 {
                    best = (run[i][j], i, j);
                }
            }
        }
    }
    let (len, i_end, j_end) = best;
    if len < 2 {
        return None;
    }
    let (ia, ib) = (i_end - len, j_end - len);
    Some(Overlap {
        nodes: a.nodes[ia..i_end].to_vec(),
        start_on_a: a.node_offsets[ia],
        end_on_a: a.node_offsets[i_end - 1],
        start_on_b: b.node_offsets[ib],
        end_on_b: b.node_offsets[j_end - 1],
    })
}
