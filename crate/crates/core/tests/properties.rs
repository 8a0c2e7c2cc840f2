use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use vce_core::engine::{triangulate, Action, EscapeMode, Shot};
use vce_core::eval::{match_maps, sampling_curve, PoIMap};
use vce_core::geo::{haversine_distance, ray_intersection, triangle_centroid_max_side_distance};
use vce_core::sim::{run_experiment, ExperimentConfig, Schedule};
use vce_core::world::{coverage, generate_synthetic_world};
use vce_core::{
    dbscan, AggregationParams, GeoPoint, Heading, LocalFrame, LocalPoint, NodeId, Ray, SessionState, World,
    WorldParams,
};

const ORIGIN: (f64, f64) = (46.0667, 11.1211);

fn frame() -> LocalFrame {
    LocalFrame::new(GeoPoint::new(ORIGIN.0, ORIGIN.1).unwrap())
}

fn local(range: f64) -> impl Strategy<Value = LocalPoint> {
    (-range..range, -range..range).prop_map(|(x, y)| LocalPoint::new(x, y))
}

fn geo(range: f64) -> impl Strategy<Value = GeoPoint> {
    local(range).prop_map(|p| frame().unproject(p))
}

proptest! {
    #[test]
    fn haversine_is_symmetric_and_triangular(a in geo(3000.0), b in geo(3000.0), c in geo(3000.0)) {
        prop_assert_eq!(haversine_distance(a, b), haversine_distance(b, a));
        prop_assert!(haversine_distance(a, c) <= haversine_distance(a, b) + haversine_distance(b, c) + 1e-6);
    }

    #[test]
    fn projection_round_trips(p in local(5000.0)) {
        let f = frame();
        let g = f.unproject(p);
        let back = f.project(g).unwrap();
        prop_assert!(back.distance(&p) < 0.01);
    }

    #[test]
    fn headings_normalize_idempotently(deg in -1e4f64..1e4) {
        let h = Heading::new(deg);
        prop_assert!((0.0..360.0).contains(&h.degrees()));
        prop_assert_eq!(Heading::new(h.degrees()), h);
        let (x, y) = h.unit_vector();
        prop_assert!(((x * x + y * y).sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ray_intersection_is_symmetric(o1 in local(100.0), o2 in local(100.0), h1 in 0.0f64..360.0, h2 in 0.0f64..360.0) {
        let (r1, r2) = (Ray::new(o1, Heading::new(h1)), Ray::new(o2, Heading::new(h2)));
        match (ray_intersection(&r1, &r2), ray_intersection(&r2, &r1)) {
            (Some(a), Some(b)) => prop_assert!(a.distance(&b) < 1e-6),
            (None, None) => {}
            other => prop_assert!(false, "asymmetric: {:?}", other),
        }
    }

    #[test]
    fn centroid_ignores_vertex_order(a in local(50.0), b in local(50.0), c in local(50.0)) {
        let (g, d) = triangle_centroid_max_side_distance(a, b, c);
        for (p, q, r) in [(b, c, a), (c, a, b), (b, a, c), (a, c, b), (c, b, a)] {
            let (g2, d2) = triangle_centroid_max_side_distance(p, q, r);
            prop_assert!(g.distance(&g2) < 1e-9);
            prop_assert!((d - d2).abs() < 1e-9);
        }
    }

    #[test]
    fn min_pts_one_leaves_no_noise(points in prop::collection::vec(geo(200.0), 0..60)) {
        let c = dbscan(&points, &AggregationParams { eps_m: 10.0, min_pts: 1 });
        prop_assert!(c.noise.is_empty());
        prop_assert_eq!(c.clusters.iter().map(Vec::len).sum::<usize>(), points.len());
    }

    #[test]
    fn dbscan_partition_survives_shuffles(
        points in prop::collection::vec(geo(60.0), 1..50),
        order in any::<prop::sample::Index>(),
    ) {
        let params = AggregationParams::default();
        let base = dbscan(&points, &params);
        let n = points.len();
        let shift = order.index(n);
        let rotated: Vec<GeoPoint> = (0..n).map(|i| points[(i + shift) % n]).collect();
        let again = dbscan(&rotated, &params);
        let core = |pts: &[GeoPoint], i: usize| {
            pts.iter().filter(|q| haversine_distance(pts[i], **q) <= params.eps_m).count() >= params.min_pts
        };
        // Core points must be grouped identically; border points may only move
        // between clusters they are within eps of.
        let label = |c: &vce_core::Clustering| c.labels(n);
        let (la, lb) = (label(&base), label(&again));
        let lb: Vec<Option<usize>> = (0..n).map(|i| lb[(i + n - shift) % n]).collect();
        for i in 0..n {
            prop_assert_eq!(la[i].is_some(), lb[i].is_some());
            for j in 0..n {
                if core(&points, i) && core(&points, j) {
                    prop_assert_eq!(la[i] == la[j], lb[i] == lb[j]);
                }
            }
        }
    }

    #[test]
    fn map_comparisons_are_symmetric(
        a in prop::collection::vec(geo(300.0), 0..25),
        b in prop::collection::vec(geo(300.0), 0..25),
    ) {
        let (ma, mb) = (PoIMap::from_positions("a", a), PoIMap::from_positions("b", b));
        let ab = match_maps(&ma, &mb, 10.0);
        let ba = match_maps(&mb, &ma, 10.0);
        prop_assert_eq!(ab.jaccard, ba.jaccard);
        prop_assert_eq!(ab.intersect, ba.intersect);
        let same = match_maps(&ma, &ma, 10.0);
        prop_assert_eq!(same.jaccard, 1.0);
        prop_assert_eq!(same.a_minus_b + same.b_minus_a, 0);
    }
}

fn small_world(seed: u64) -> Arc<World> {
    let params = WorldParams { grid_rows: 4, grid_cols: 4, n_pois: 16, seed, ..Default::default() };
    Arc::new(generate_synthetic_world(&params).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_worlds_are_pure_and_consistent(seed in 0u64..1000) {
        let params = WorldParams { grid_rows: 4, grid_cols: 4, n_pois: 16, seed, ..Default::default() };
        let w = generate_synthetic_world(&params).unwrap();
        prop_assert_eq!(format!("{w:?}"), format!("{:?}", generate_synthetic_world(&params).unwrap()));
        for poi in w.pois() {
            let brute: Vec<NodeId> = w
                .graph()
                .nodes()
                .iter()
                .filter(|n| haversine_distance(n.position, poi.position) <= params.sight_radius_m)
                .map(|n| n.id)
                .collect();
            prop_assert_eq!(poi.visible_from.iter().copied().collect::<Vec<_>>(), brute);
        }
        for node in w.graph().nodes() {
            for nb in &node.neighbors {
                prop_assert!(w.graph().node(*nb).unwrap().neighbors.contains(&node.id));
            }
        }
    }

    #[test]
    fn simulated_runs_keep_engine_invariants(
        seed in 0u64..10_000,
        taboo in any::<bool>(),
        width in 1u32..4,
        noise in 0.0f64..6.0,
        prob in 0.3f64..1.0,
        or_mode in any::<bool>(),
    ) {
        let world = small_world(seed % 7);
        let mut config = ExperimentConfig {
            seed,
            schedule: if width == 1 { Schedule::Sequential } else { Schedule::Interleaved { k: width } },
            ..Default::default()
        };
        config.task.strategy = if taboo { vce_core::Strategy::Taboo } else { vce_core::Strategy::Basic };
        config.task.num_executions = 12;
        config.task.num_instances = 3;
        config.policy.heading_noise_deg = noise;
        config.policy.detection_prob = prob;
        if or_mode {
            config.taboo.escape_mode = EscapeMode::Or;
        }
        let result = run_experiment(Arc::clone(&world), &config).unwrap();

        let mut by_session: BTreeMap<u64, Vec<&vce_core::ActionLogEntry>> = BTreeMap::new();
        for e in &result.log {
            by_session.entry(e.session_id.0).or_default().push(e);
        }
        for session in result.finished_sessions() {
            let entries = &by_session[&session.id.0];
            prop_assert!(entries.windows(2).all(|w| w[0].t <= w[1].t));
            let mut walked = 0.0;
            for e in entries {
                if let Action::Move { from_position: Some(from), to_position, .. } = &e.action {
                    walked += haversine_distance(*from, *to_position);
                }
            }
            prop_assert_eq!(walked, session.distance_walked_m);
            let accepted = entries.iter().filter(|e| matches!(e.action, Action::SubmitOk { .. })).count();
            prop_assert_eq!(accepted, session.detections.len());
            prop_assert!(accepted <= 3);
            match session.state {
                SessionState::Completed => prop_assert_eq!(accepted, 3),
                SessionState::Escaped => {
                    prop_assert!(taboo);
                    let Action::Escape { distance_walked_m, since_last_detection_s, .. } = entries.last().unwrap().action
                    else {
                        return Err(TestCaseError::fail("escape entry missing"));
                    };
                    let walked_far = distance_walked_m >= config.taboo.escape_distance_m;
                    let waited = since_last_detection_s >= config.taboo.escape_time_s;
                    let held = if or_mode { walked_far || waited } else { walked_far && waited };
                    prop_assert!(held);
                }
                other => prop_assert!(false, "finished session in state {:?}", other),
            }
            for d in &session.detections {
                let shots: [Shot; 3] = d.shots;
                let t = triangulate(&shots, config.task.delta_m).unwrap();
                prop_assert!(t.dmax_m < config.task.delta_m);
                prop_assert!(haversine_distance(t.centroid, d.centroid) < 1e-6);
            }
        }
        for s in result.sessions.iter().filter(|s| s.state == SessionState::Abandoned) {
            prop_assert!(s.detections.is_empty());
            prop_assert!(!by_session.contains_key(&s.id.0));
        }

        let total = result.detections().len();
        if taboo {
            prop_assert!(total <= 36);
            let cap = config.taboo.taboo_threshold as usize + if width == 1 { 0 } else { width as usize };
            for c in &result.map {
                prop_assert!(c.distinct_workers <= cap, "{} > {}", c.distinct_workers, cap);
            }
        } else {
            prop_assert_eq!(total, 36);
        }

        let mut visits = vce_core::VisitCounter::new();
        let mut last = 0.0;
        for e in &result.log {
            if let Action::Move { to, .. } = e.action {
                visits.record(e.session_id, to);
                let pct = coverage(world.graph(), &visits).unwrap().percent;
                prop_assert!(pct >= last);
                last = pct;
            }
        }

        let curve = sampling_curve(&result.executions(), &config.aggregation, 30, seed);
        prop_assert_eq!(curve.len(), result.commit_order.len() + 1);
        for w in curve.windows(2) {
            prop_assert!(w[1].mean_confirmed >= w[0].mean_confirmed - 1.0);
        }
    }
}
