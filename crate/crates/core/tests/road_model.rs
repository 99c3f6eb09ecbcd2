use platoon_core::case_study::{candidate_paths, network, CATCHUP_ROUTE, JOIN_ROUTE, LEADER_ROUTE};
use platoon_core::road::{common_suffix_overlap, grade_at, resolve_route, NodeId, RoadNetwork};
use platoon_core::PlatoonError;
use proptest::prelude::*;
use std::collections::BTreeSet;
use std::sync::OnceLock;

fn case_network() -> &'static RoadNetwork {
    static NET: OnceLock<RoadNetwork> = OnceLock::new();
    NET.get_or_init(network)
}

/// Every simple route between an origin and a destination of the case study.
fn all_routes() -> &'static Vec<Vec<NodeId>> {
    static ROUTES: OnceLock<Vec<Vec<NodeId>>> = OnceLock::new();
    ROUTES.get_or_init(|| {
        let mut out = Vec::new();
        for from in [1, 2, 4, 9, 11, 12] {
            for to in [10, 13, 15, 16, 17] {
                out.extend(candidate_paths(case_network(), from, to));
            }
        }
        out
    })
}

#[test]
fn resolve_route_examples() {
    let net = case_network();
    let r = resolve_route(net, &[2, 6, 3, 5]).unwrap();
    assert_eq!((r.nodes.len(), r.segments.len()), (4, 3));
    let single = resolve_route(net, &[5]).unwrap();
    assert_eq!(single.total_length, 0.0);
    assert!(matches!(resolve_route(net, &[1, 17]), Err(PlatoonError::Connectivity { from: 1, to: 17 })));
}

#[test]
fn overlap_examples() {
    let net = case_network();
    let leader = resolve_route(net, LEADER_ROUTE).unwrap();
    let joiner = resolve_route(net, JOIN_ROUTE).unwrap();
    let ov = common_suffix_overlap(&leader, &joiner).unwrap();
    assert_eq!((ov.merge_node(), ov.split_node()), (5, 10));
    assert_eq!(ov.nodes, vec![5, 7, 8, 10]);
    assert_eq!(ov.start_on_b, joiner.offset_of(5).unwrap());

    let same = common_suffix_overlap(&leader, &leader).unwrap();
    assert_eq!(same.nodes, leader.nodes);

    let disjoint = resolve_route(net, &[1, 18]).unwrap();
    assert!(common_suffix_overlap(&disjoint, &resolve_route(net, CATCHUP_ROUTE).unwrap()).is_none());
}

#[test]
fn route_end_uses_last_piece_grade() {
    let r = resolve_route(case_network(), LEADER_ROUTE).unwrap();
    let end = grade_at(&r, r.total_length).unwrap();
    assert_eq!(end, grade_at(&r, r.total_length - 1e-6).unwrap());
    assert!(grade_at(&r, r.total_length + 1.0).is_err());
}

#[test]
fn pieces_sum_to_length_and_rebuild_altitude() {
    let net = case_network();
    for nodes in all_routes() {
        let r = resolve_route(net, nodes).unwrap();
        let knots: Vec<(f64, f64)> = r.profile.knots().collect();
        let total: f64 = knots.windows(2).map(|w| w[1].0 - w[0].0).sum();
        assert!((total - r.total_length).abs() <= 1e-9 * r.total_length);
        let mut altitude = knots[0].1;
        for w in knots.windows(2) {
            let mid = 0.5 * (w[0].0 + w[1].0);
            altitude += r.grade_at(mid).unwrap().sin() * (w[1].0 - w[0].0);
            assert!((altitude - w[1].1).abs() <= 1e-6, "route {nodes:?} at {}", w[1].0);
            altitude = w[1].1;
        }
    }
}

proptest! {
    #[test]
    fn overlap_node_set_is_symmetric(i in 0usize..10_000, j in 0usize..10_000) {
        let routes = all_routes();
        let net = case_network();
        let a = resolve_route(net, &routes[i % routes.len()]).unwrap();
        let b = resolve_route(net, &routes[j % routes.len()]).unwrap();
        let ab = common_suffix_overlap(&a, &b).map(|o| o.nodes.into_iter().collect::<BTreeSet<_>>());
        let ba = common_suffix_overlap(&b, &a).map(|o| o.nodes.into_iter().collect::<BTreeSet<_>>());
        prop_assert_eq!(ab, ba);
    }
}
