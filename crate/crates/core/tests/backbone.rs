mod common;

use common::*;
use equiforecast::backbone::{channel_means, Backbone};
use equiforecast::batch::SceneBatch;
use equiforecast::config::MapMode;
use equiforecast::map_encoder::MapEncoder;
use equiforecast::ndiff::Array;
use equiforecast::nn::{ParamStore, Tape};
use equiforecast::scene::{Dims, Scene};
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

struct Net {
    store: ParamStore,
    map: MapEncoder,
    backbone: Backbone,
    dims: Dims,
}

fn net(mode: MapMode, cycles: usize, seed: u64) -> Net {
    let cfg = small_config(mode);
    let mut store = ParamStore::new();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let map = MapEncoder::new(&mut store, &mut rng, mode, cfg.lane_points, cfg.hidden_dim);
    let backbone = Backbone::new(&mut store, &mut rng, cfg.t_in, cfg.hidden_dim, cycles);
    Net {
        store,
        map,
        backbone,
        dims: cfg.dims(),
    }
}

struct Features {
    geometric: Array,
    pattern: Array,
    edges: Array,
    g0: Array,
    h0: Array,
}

fn run(n: &Net, scene: &Scene) -> Features {
    let batch = SceneBatch::new(&[scene], &n.dims).unwrap();
    let mut t = Tape::new(&n.store, false);
    let m = n.map.encode(&mut t, &batch).unwrap();
    let out = n.backbone.run(&mut t, &batch, m.feature).unwrap();
    Features {
        geometric: t.value(out.geometric).clone(),
        pattern: t.value(out.pattern).clone(),
        edges: t.value(out.edges).clone(),
        g0: t.value(out.initial_geometric).clone(),
        h0: t.value(out.initial_pattern).clone(),
    }
}

/// Rows of `a` (per agent chunks) for agents that are real.
fn valid_rows(a: &Array, mask: &[bool]) -> Vec<f64> {
    let per = a.len() / mask.len();
    a.data()
        .chunks(per)
        .zip(mask)
        .filter(|(_, &m)| m)
        .flat_map(|(r, _)| r.to_vec())
        .collect()
}

#[test]
fn stationary_agent_has_constant_channels() {
    let n = net(MapMode::None, 1, 1);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
    let mut s = random_scene(&mut rng, &n.dims);
    s.histories[0] = vec![[2.0, 3.0]; n.dims.history];
    let f = run(&n, &s);
    for p in f.g0.data()[..n.dims.history * 2].chunks(2) {
        assert!((p[0] - 2.0).abs() < 1e-12 && (p[1] - 3.0).abs() < 1e-12);
    }
}

#[test]
fn initial_features_transform_correctly() {
    let n = net(MapMode::Invariant, 1, 3);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    for _ in 0..10 {
        let s = random_scene(&mut rng, &n.dims);
        let g = random_transform(&mut rng);
        let a = run(&n, &s);
        let b = run(&n, &s.transformed(&g));
        let expect = transform_flat(&g, &valid_rows(&a.g0, &s.agent_mask));
        assert!(rel_err(&valid_rows(&b.g0, &s.agent_mask), &expect) < 1e-9);
        let d = valid_rows(&a.h0, &s.agent_mask);
        let e = valid_rows(&b.h0, &s.agent_mask);
        assert!(d.iter().zip(&e).all(|(x, y)| (x - y).abs() < 1e-9));
    }
}

#[test]
fn backbone_is_equivariant_and_invariant() {
    for mode in [MapMode::None, MapMode::Invariant] {
        let n = net(mode, 3, 5);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
        for _ in 0..10 {
            let s = random_scene(&mut rng, &n.dims);
            let base = run(&n, &s);
            for _ in 0..5 {
                let g = random_transform(&mut rng);
                let moved = run(&n, &s.transformed(&g));
                let expect = transform_flat(&g, &valid_rows(&base.geometric, &s.agent_mask));
                assert!(rel_err(&valid_rows(&moved.geometric, &s.agent_mask), &expect) < 1e-6);
                assert!(
                    rel_err(
                        &valid_rows(&moved.pattern, &s.agent_mask),
                        &valid_rows(&base.pattern, &s.agent_mask)
                    ) < 1e-6
                );
                assert!(rel_err(moved.edges.data(), base.edges.data()) < 1e-6);
            }
        }
    }
}

#[test]
fn edges_vanish_off_real_pairs() {
    let n = net(MapMode::None, 1, 7);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    for _ in 0..10 {
        let s = random_scene(&mut rng, &n.dims);
        let e = run(&n, &s).edges;
        let a = n.dims.agents;
        for i in 0..a {
            for j in 0..a {
                if i == j || !s.agent_mask[i] || !s.agent_mask[j] {
                    assert_eq!(e.data()[i * a + j], 0.0);
                }
            }
        }
    }
}

#[test]
fn single_agent_has_no_edges() {
    let n = net(MapMode::None, 2, 9);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(10);
    let mut s = random_scene(&mut rng, &n.dims);
    for i in 1..n.dims.agents {
        s.agent_mask[i] = false;
        s.histories[i] = vec![[0.0, 0.0]; n.dims.history];
    }
    let f = run(&n, &s);
    assert!(f.edges.data().iter().all(|&v| v == 0.0));
    assert!(f.pattern.is_finite());
}

#[test]
fn point_mirrored_pair_has_symmetric_edges() {
    let n = net(MapMode::None, 1, 11);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(12);
    let mut s = random_scene(&mut rng, &n.dims);
    let track = random_track(&mut rng, n.dims.history);
    let mirrored: Vec<_> = track.iter().map(|p| [-p[0], -p[1]]).collect();
    s.histories = vec![vec![[0.0, 0.0]; n.dims.history]; n.dims.agents];
    s.histories[0] = track;
    s.histories[1] = mirrored;
    s.agent_mask = (0..n.dims.agents).map(|i| i < 2).collect();
    let e = run(&n, &s).edges;
    let a = n.dims.agents;
    assert!((e.data()[1] - e.data()[a]).abs() < 1e-12);
}

#[test]
fn agent_order_is_irrelevant() {
    let n = net(MapMode::Invariant, 3, 13);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(14);
    for _ in 0..10 {
        let s = random_scene(&mut rng, &n.dims);
        let perm = [2, 0, 1];
        let p = s.permuted_agents(&perm);
        let a = run(&n, &s);
        let b = run(&n, &p);
        let ga = n.dims.history * 2;
        let ha = n.backbone.hidden;
        for (new, &old) in perm.iter().enumerate() {
            let x = &b.geometric.data()[new * ga..(new + 1) * ga];
            let y = &a.geometric.data()[old * ga..(old + 1) * ga];
            assert!(x.iter().zip(y).all(|(u, v)| (u - v).abs() <= 1e-12));
            let x = &b.pattern.data()[new * ha..(new + 1) * ha];
            let y = &a.pattern.data()[old * ha..(old + 1) * ha];
            assert!(x.iter().zip(y).all(|(u, v)| (u - v).abs() <= 1e-12));
        }
    }
}

#[test]
fn padded_agents_do_not_leak() {
    let n = net(MapMode::Invariant, 3, 15);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(16);
    let mut s = random_scene(&mut rng, &n.dims);
    s.agent_mask = vec![true, true, false];
    s.histories[1] = random_track(&mut rng, n.dims.history);
    s.histories[2] = vec![[0.0, 0.0]; n.dims.history];
    let a = run(&n, &s);
    let mut z = s.clone();
    z.histories[2] = vec![[0.0, 0.0]; n.dims.history];
    let b = run(&n, &z);
    assert_eq!(a.geometric, b.geometric);
    assert_eq!(a.pattern, b.pattern);
    assert_eq!(a.edges, b.edges);
}

#[test]
fn one_cycle_matches_manual_composition() {
    let n = net(MapMode::Invariant, 1, 17);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(18);
    let s = random_scene(&mut rng, &n.dims);
    let batch = SceneBatch::new(&[&s], &n.dims).unwrap();
    let mut t = Tape::new(&n.store, false);
    let m = n.map.encode(&mut t, &batch).unwrap();
    let out = n.backbone.run(&mut t, &batch, m.feature).unwrap();
    let (g0, h0) = n.backbone.init_features(&mut t, &batch).unwrap();
    let h = n.backbone.fuse_map(&mut t, h0, m.feature).unwrap();
    let e = n.backbone.edge_weights(&mut t, g0, h, &batch).unwrap();
    let c = &n.backbone.cycles[0];
    let g1 = n.backbone.geometric_layer(&mut t, c, g0, h, e).unwrap();
    let h1 = n.backbone.pattern_layer(&mut t, c, g0, h, &batch).unwrap();
    assert_eq!(t.value(out.geometric), t.value(g1));
    assert_eq!(t.value(out.pattern), t.value(h1));
}

#[test]
fn coincident_agents_collapse_to_the_point() {
    let n = net(MapMode::None, 1, 19);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(20);
    let mut s = random_scene(&mut rng, &n.dims);
    s.histories = vec![vec![[4.0, -1.0]; n.dims.history]; n.dims.agents];
    s.agent_mask = vec![true; n.dims.agents];
    let f = run(&n, &s);
    for m in channel_means(&f.geometric) {
        assert!((m[0] - 4.0).abs() < 1e-12 && (m[1] + 1.0).abs() < 1e-12);
    }
    for p in f.geometric.data().chunks(2) {
        assert!((p[0] - 4.0).abs() < 1e-12 && (p[1] + 1.0).abs() < 1e-12);
    }
}

#[test]
fn twenty_cycles_stay_finite() {
    let mut cfg = small_config(MapMode::Invariant);
    cfg.cycles = 20;
    let n = net(MapMode::Invariant, 20, 21);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(22);
    for _ in 0..5 {
        let s = random_scene(&mut rng, &n.dims);
        let f = run(&n, &s);
        assert!(f.geometric.is_finite() && f.pattern.is_finite() && f.edges.is_finite());
        assert_eq!(f.geometric.shape(), &[1, cfg.agents, cfg.t_in, 2]);
        assert_eq!(f.pattern.shape(), &[1, cfg.agents, cfg.hidden_dim]);
    }
}
