//! Reconstructed Stockholm-Gothenburg corridor network and a seeded fleet of
//! transport assignments on it.
//!
//! Segment lengths follow road distances at corridor scale; altitudes are
//! synthetic rolling terrain. This is an approximation, not survey data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fleet::TransportAssignment;
use crate::road::{NodeId, NodeKind, RoadNetwork, RoadNode, RoadSegment};

pub const DEFAULT_SEED: u64 = 2017;
pub const FLEET_SIZE: usize = 200;
const SPEED_LIMIT: f64 = 25.0;
const PIECE_M: f64 = 1000.0;
const KMH: f64 = 1.0 / 3.6;

const NODES: &[(NodeId, &str, NodeKind, f64)] = &[
    (1, "Uppsala", NodeKind::Origin, 20.0),
    (2, "Norrtalje", NodeKind::Origin, 10.0),
    (3, "Stockholm North", NodeKind::Intersection, 30.0),
    (4, "Stockholm", NodeKind::Origin, 25.0),
    (5, "Sodertalje", NodeKind::Intersection, 15.0),
    (6, "Marsta", NodeKind::Intersection, 35.0),
    (7, "Arboga", NodeKind::Intersection, 20.0),
    (8, "Orebro", NodeKind::Intersection, 30.0),
    (9, "Nynashamn", NodeKind::Origin, 5.0),
    (10, "Hallsberg", NodeKind::Destination, 60.0),
    (11, "Taby", NodeKind::Origin, 40.0),
    (12, "Nacka", NodeKind::Origin, 30.0),
    (13, "Jonkoping", NodeKind::Destination, 100.0),
    (14, "Mariestad", NodeKind::Intersection, 95.0),
    (15, "Trollhattan", NodeKind::Destination, 40.0),
    (16, "Goteborg", NodeKind::Destination, 10.0),
    (17, "Karlstad", NodeKind::Destination, 50.0),
    (18, "Vasteras", NodeKind::Intersection, 10.0),
];

const ROADS_KM: &[(NodeId, NodeId, f64)] = &[
    (1, 6, 40.0),
    (2, 6, 67.0),
    (6, 3, 27.0),
    (11, 3, 15.0),
    (4, 3, 10.0),
    (3, 5, 34.0),
    (4, 5, 36.0),
    (12, 5, 40.0),
    (9, 5, 61.0),
    (5, 7, 94.0),
    (7, 8, 30.0),
    (8, 7, 30.0),
    (8, 10, 45.0),
    (10, 14, 110.0),
    (14, 15, 110.0),
    (15, 16, 75.0),
    (10, 13, 111.0),
    (8, 17, 110.0),
    (1, 18, 80.0),
    (6, 18, 85.0),
    (3, 18, 95.0),
    (18, 8, 110.0),
    (5, 13, 250.0),
    (13, 16, 150.0),
    (17, 15, 170.0),
];

/// Route of the highlighted coordination leader.
pub const LEADER_ROUTE: &[NodeId] = &[2, 6, 3, 5, 7, 8, 10, 14, 15];
/// Follower that catches up between nodes 5 and 7.
pub const CATCHUP_ROUTE: &[NodeId] = &[4, 3, 5, 7, 8, 10];
/// Follower that joins exactly at node 5.
pub const JOIN_ROUTE: &[NodeId] = &[9, 5, 7, 8, 10, 13];

fn node_altitude(id: NodeId) -> f64 {
    NODES.iter().find(|n| n.0 == id).map(|n| n.3).expect("known node")
}

/// Rolling terrain between fixed end altitudes: a clipped random walk in
/// grade, bent to hit the end altitude, on pieces of about one kilometre.
fn terrain(rng: &mut ChaCha8Rng, length: f64, a0: f64, a1: f64) -> Vec<[f64; 2]> {
    let n = (length / PIECE_M).ceil() as usize;
    let mut grades = Vec::with_capacity(n);
    let mut g = 0.0f64;
    for _ in 0..n {
        g = (0.6 * g + rng.gen_range(-0.008..0.008)).clamp(-0.02, 0.02);
        grades.push(g);
    }
    let runs: Vec<f64> = (0..n).map(|k| PIECE_M.min(length - k as f64 * PIECE_M)).collect();
    let rise: f64 = grades.iter().zip(&runs).map(|(g, r)| g * r).sum();
    let fix = (a1 - a0 - rise) / length;
    let mut pts = vec![[0.0, a0]];
    let (mut x, mut a) = (0.0, a0);
    for (g, r) in grades.iter().zip(&runs) {
        x += r;
        a += (g + fix) * r;
        pts.push([x, (a * 10.0).round() / 10.0]);
    }
    let last = pts.len() - 1;
    pts[last] = [length, a1];
    pts
}

/// The corridor network with seeded terrain.
pub fn network() -> RoadNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let nodes = NODES
        .iter()
        .map(|&(id, name, kind, _)| RoadNode { id, name: name.to_string(), kind })
        .collect();
    let mut segments = Vec::with_capacity(ROADS_KM.len());
    for &(from, to, km) in ROADS_KM {
        let length = km * 1000.0;
        // the reverse of an existing road reuses its terrain
        let altitude = match segments.iter().find(|s: &&RoadSegment| s.from == to && s.to == from) {
            Some(fwd) => fwd.altitude.iter().rev().map(|p| [length - p[0], p[1]]).collect(),
            None => terrain(&mut rng, length, node_altitude(from), node_altitude(to)),
        };
        segments.push(RoadSegment { from, to, length_m: length, altitude, speed_limit_mps: SPEED_LIMIT });
    }
    RoadNetwork::new(nodes, segments).expect("case-study network is consistent")
}

const ORIGINS: &[NodeId] = &[1, 2, 4, 9, 11, 12];
const DESTINATIONS: &[NodeId] = &[10, 13, 15, 16, 17];
/// Paths longer than this multiple of the shortest one are not driven.
const DETOUR_LIMIT: f64 = 1.25;

/// Every simple path from `from` to `to` within the detour limit, in
/// depth-first order.
pub fn candidate_paths(network: &RoadNetwork, from: NodeId, to: NodeId) -> Vec<Vec<NodeId>> {
    fn walk(net: &RoadNetwork, to: NodeId, path: &mut Vec<NodeId>, len: f64, out: &mut Vec<(Vec<NodeId>, f64)>) {
        let here = *path.last().unwrap();
        if here == to {
            out.push((path.clone(), len));
            return;
        }
        let mut next: Vec<_> = net.successors(here).map(|s| (s.to, s.length_m)).collect();
        next.sort_by_key(|n| n.0);
        for (n, l) in next {
            if !path.contains(&n) {
                path.push(n);
                walk(net, to, path, len + l, out);
                path.pop();
            }
        }
    }
    let mut all = Vec::new();
    walk(network, to, &mut vec![from], 0.0, &mut all);
    let shortest = all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    all.into_iter().filter(|p| p.1 <= DETOUR_LIMIT * shortest).map(|p| p.0).collect()
}

fn route_length(network: &RoadNetwork, nodes: &[NodeId]) -> f64 {
    crate::road::resolve_route(network, nodes).expect("valid route").total_length
}

fn assignment(
    network: &RoadNetwork,
    id: u32,
    nodes: Vec<NodeId>,
    start: f64,
    v_nom: f64,
    v_cap: f64,
    slack: f64,
) -> TransportAssignment {
    let length = route_length(network, &nodes);
    TransportAssignment {
        vehicle_id: id,
        route_nodes: nodes,
        start_time_s: start,
        deadline_s: start + length / v_nom + slack,
        v_nom_mps: v_nom,
        v_cap_mps: v_cap,
    }
}

/// Three highlighted vehicles: a leader from node 2, one follower catching
/// up on the 5-7 road and one joining at node 5.
pub fn highlighted_trio(network: &RoadNetwork) -> Vec<TransportAssignment> {
    let v = 80.0 * KMH;
    let lead_at_5 = route_length(network, &LEADER_ROUTE[..4]) / v;
    let join_speed = 85.0 * KMH;
    let join_start = lead_at_5 - route_length(network, &JOIN_ROUTE[..2]) / join_speed;
    vec![
        assignment(network, 0, LEADER_ROUTE.to_vec(), 0.0, v, 90.0 * KMH, 1200.0),
        assignment(network, 1, CATCHUP_ROUTE.to_vec(), 1.2 * 3600.0, v, 90.0 * KMH, 1200.0),
        assignment(network, 2, JOIN_ROUTE.to_vec(), join_start, v, 90.0 * KMH, 1200.0),
    ]
}

/// The highlighted trio plus seeded random assignments, `n` in total.
/// Knobs of the seeded fleet generator.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetConfig {
    pub size: usize,
    pub seed: u64,
    pub window_s: f64,
    pub v_nom_kmh: (f64, f64),
    pub v_cap_kmh: f64,
    /// Deadline slack on top of the nominal travel time [s].
    pub slack_s: (f64, f64),
    /// Start the fleet with the highlighted trio.
    pub include_trio: bool,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            size: FLEET_SIZE,
            seed: DEFAULT_SEED,
            window_s: 7200.0,
            v_nom_kmh: (70.0, 84.0),
            v_cap_kmh: 85.0,
            slack_s: (0.0, 0.0),
            include_trio: true,
        }
    }
}

/// The highlighted trio plus seeded random assignments. Origins,
/// destinations and paths are uniform; starts are uniform over the window.
pub fn assignments(network: &RoadNetwork, cfg: &FleetConfig) -> Vec<TransportAssignment> {
    let routes: std::collections::BTreeMap<_, _> = ORIGINS
        .iter()
        .flat_map(|&o| DESTINATIONS.iter().map(move |&d| (o, d)))
        .map(|(o, d)| ((o, d), candidate_paths(network, o, d)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.size);
    if cfg.include_trio {
        out.extend(highlighted_trio(network).into_iter().take(cfg.size));
    }
    while out.len() < cfg.size {
        let from = ORIGINS[rng.gen_range(0..ORIGINS.len())];
        let to = DESTINATIONS[rng.gen_range(0..DESTINATIONS.len())];
        let paths = &routes[&(from, to)];
        let nodes = paths[rng.gen_range(0..paths.len())].clone();
        let start = rng.gen_range(0.0..cfg.window_s);
        let v_nom = uniform(&mut rng, cfg.v_nom_kmh) * KMH;
        let slack = uniform(&mut rng, cfg.slack_s);
        let id = out.len() as u32;
        out.push(assignment(network, id, nodes, start, v_nom, cfg.v_cap_kmh * KMH, slack));
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}
