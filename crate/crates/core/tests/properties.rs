use proptest::prelude::*;
use racbound_core::explorer::{self, ScanConfig, ScanKind, ScanPoint};
use racbound_core::infotheory::{self, ChannelMatrix};
use racbound_core::nsbox::{self, CorrelationQuad};
use racbound_core::protocol::{self, Dit};
use racbound_core::{NsBox, RacScheme};
use std::f64::consts::PI;

fn probability_vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        if s < 1e-9 {
            vec![1.0 / w.len() as f64; w.len()]
        } else {
            w.iter().map(|v| v / s).collect()
        }
    })
}

/// Mixture of a success-probability box and a product box: no-signaling, with biased marginals.
fn mixed_box(d: usize, k: usize) -> impl Strategy<Value = NsBox> {
    let nx = d.pow(k as u32 - 1);
    (
        prop::collection::vec(0.0f64..=1.0, nx * k),
        prop::collection::vec(probability_vector(d), nx),
        prop::collection::vec(probability_vector(d), k),
        0.0f64..=1.0,
    )
        .prop_map(move |(p, pa, pb, lambda)| {
            let s = NsBox::from_success_probs(d, k, &p).unwrap();
            NsBox::from_fn(d, k, |x, y, a, b| lambda * s.prob(x, y, a, b) + (1.0 - lambda) * pa[x][a] * pb[y][b])
                .unwrap()
        })
}

fn scenario() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![Just((2, 2)), Just((2, 3)), Just((3, 2)), Just((3, 3)), Just((4, 2))]
}

fn box_and_scheme() -> impl Strategy<Value = (NsBox, RacScheme)> {
    scenario().prop_flat_map(|(d, k)| {
        (mixed_box(d, k), prop::collection::vec(probability_vector(d), k))
            .prop_map(move |(b, m)| (b, RacScheme::new(d, k, m).unwrap()))
    })
}

fn channel(rows: usize, cols: usize) -> impl Strategy<Value = ChannelMatrix> {
    prop::collection::vec(probability_vector(cols), rows).prop_map(|r| ChannelMatrix::new(r).unwrap())
}

#[test]
fn perfect_boxes_let_bob_decode_every_dit() {
    for d in 2..=3usize {
        for k in 2..=3usize {
            for code in 0..d.pow(k as u32) {
                let a: Vec<Dit> = (0..k).map(|i| Dit::new(code / d.pow(i as u32) % d, d).unwrap()).collect();
                let x = protocol::encode_alice(&a, d, k).unwrap();
                let xi = protocol::alice_index(d, &x.iter().map(|v| v.value()).collect::<Vec<_>>());
                for b in 0..k {
                    let y = protocol::encode_bob(b, k).unwrap();
                    let xy: usize = x.iter().zip(&y).map(|(u, v)| u.value() * v).sum::<usize>() % d;
                    assert_eq!(xy, protocol::dot(d, xi, b));
                    // any outcome of Alice's half, with B_y - A_x = x.y
                    for alice_out in 0..d {
                        let a_x = Dit::new(alice_out, d).unwrap();
                        let b_y = a_x.add(Dit::new(xy, d).unwrap()).unwrap();
                        let alpha = protocol::alice_message(a_x, a[0]).unwrap();
                        assert_eq!(protocol::decode_guess(b_y, alpha).unwrap(), a[b]);
                    }
                }
            }
        }
    }
}

#[test]
fn uniform_success_gives_symmetric_channel() {
    for (d, k) in [(2, 2), (3, 2), (2, 4), (4, 3)] {
        for p in [0.1, 0.5, 0.9] {
            let b = NsBox::uniform_success(d, k, p).unwrap();
            let s = RacScheme::uniform(d, k).unwrap();
            let xi = infotheory::noise_parameter(&b, &s, 1).unwrap();
            let diag = ((d as f64 - 1.0) * xi + 1.0) / d as f64;
            for i in 0..k {
                let ch = protocol::guess_channel(&b, &s, i).unwrap().channel;
                for j in 0..d {
                    for n in 0..d {
                        let want = if j == n { diag } else { (1.0 - diag) / (d as f64 - 1.0) };
                        assert!((ch.get(j, n) - want).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn deterministic_local_strategies_respect_chsh() {
    for code in 0..16usize {
        let alice = [code & 1, code >> 1 & 1];
        let bob = [code >> 2 & 1, code >> 3 & 1];
        let b = NsBox::deterministic(2, 2, &alice, &bob).unwrap();
        let q = nsbox::correlations_2x2(&b).unwrap();
        assert!(nsbox::chsh_values(&q).iter().all(|v| *v <= 2.0 + 1e-12));
        assert!(nsbox::is_local_2x2(&q));
    }
}

fn arcsin_max(q: &CorrelationQuad) -> f64 {
    let s = q.as_array().map(f64::asin);
    nsbox::CHSH_SIGNS.iter().map(|sg| (0..4).map(|i| sg[i] * s[i]).sum::<f64>().abs()).fold(0.0, f64::max)
}

// a correlator of +-1 pins an overlap to +- another correlator, so the grid must contain them
fn has_gram_completion(q: &CorrelationQuad) -> bool {
    let steps = 200;
    (0..=steps).any(|i| {
        let t1 = -1.0 + 2.0 * i as f64 / steps as f64;
        (0..=steps).any(|j| nsbox::gram_check_2x2(q, t1, -1.0 + 2.0 * j as f64 / steps as f64))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn guess_channel_rows_are_stochastic((b, s) in box_and_scheme()) {
        for i in 0..s.k() {
            let ch = protocol::guess_channel(&b, &s, i).unwrap().channel;
            for row in ch.rows() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
            }
        }
    }

    #[test]
    fn success_boxes_are_exactly_no_signaling((d, k) in scenario(), seed in prop::collection::vec(0.0f64..=1.0, 64)) {
        let nx = d.pow(k as u32 - 1);
        let b = NsBox::from_success_probs(d, k, &seed[..nx * k]).unwrap();
        let r = nsbox::check_no_signaling(&b);
        prop_assert!(r.pass);
        prop_assert!(r.alice_violation < 1e-15 && r.bob_violation < 1e-15);
    }

    #[test]
    fn mixtures_are_no_signaling(b in scenario().prop_flat_map(|(d, k)| mixed_box(d, k))) {
        prop_assert!(nsbox::check_no_signaling(&b).pass);
    }

    #[test]
    fn per_setting_information_is_bounded((b, s) in box_and_scheme()) {
        let g = infotheory::information_gain(&b, &s).unwrap();
        let top = (s.d() as f64).log2();
        for v in &g.per_setting {
            prop_assert!(*v >= 0.0 && *v <= top + 1e-12);
        }
        prop_assert!((g.total - g.per_setting.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn isotropic_gain_matches_closed_form((d, k) in scenario(), p in 0.0f64..=1.0) {
        let b = NsBox::uniform_success(d, k, p).unwrap();
        let s = RacScheme::uniform(d, k).unwrap();
        let xi = infotheory::noise_parameter(&b, &s, 0).unwrap();
        prop_assume!(xi >= 0.0);
        let direct = infotheory::information_gain(&b, &s).unwrap().total;
        prop_assert!((direct - infotheory::gain_unbiased(d, k, xi).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn gain_unbiased_is_increasing(d in 2usize..6, k in 2usize..5, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(infotheory::gain_unbiased(d, k, hi).unwrap() > infotheory::gain_unbiased(d, k, lo).unwrap());
    }

    #[test]
    fn data_processing((a, b, px) in (2usize..5, 2usize..5, 2usize..5)
        .prop_flat_map(|(nx, ny, nz)| (channel(nx, ny), channel(ny, nz), probability_vector(nx))))
    {
        let ixy = infotheory::mutual_information(&px, &a).unwrap();
        let ixz = infotheory::mutual_information(&px, &a.then(&b).unwrap()).unwrap();
        prop_assert!(ixz <= ixy + 1e-12);
    }

    #[test]
    fn explorer_gain_matches_information_gain(p in prop::array::uniform4(0.0f64..=1.0), pa in prop::array::uniform2(0.0f64..=1.0)) {
        let pt = ScanPoint::evaluate(p, pa);
        let b = NsBox::from_success_probs(2, 2, &p).unwrap();
        let g = infotheory::information_gain(&b, &RacScheme::binary(&pa).unwrap()).unwrap();
        prop_assert!((pt.i - g.total).abs() <= 1e-12);
        prop_assert!((pt.i0 - g.per_setting[0]).abs() <= 1e-12 && (pt.i1 - g.per_setting[1]).abs() <= 1e-12);
        prop_assert!((pt.i - pt.i0 - pt.i1).abs() <= 1e-12);
    }

    #[test]
    fn arcsin_test_agrees_with_gram_completion(c in prop::array::uniform4(-20i32..=20)) {
        let q = CorrelationQuad::new(
            c[0] as f64 * 0.05, c[1] as f64 * 0.05, c[2] as f64 * 0.05, c[3] as f64 * 0.05,
        ).unwrap();
        let s = arcsin_max(&q);
        // away from the boundary, where a finite overlap grid decides completability
        prop_assume!((s - PI).abs() > 0.05);
        prop_assert_eq!(nsbox::is_quantum_2x2(&q, nsbox::ARCSIN_TOL), has_gram_completion(&q));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn refinement_never_lowers_the_window_maximum(
        lo in prop::array::uniform4(0usize..8),
        kind in prop_oneof![Just(ScanKind::SymmetricUniform), Just(ScanKind::General)],
    ) {
        let mut w = [(0.0, 1.0); 6];
        for i in 0..4 {
            let a = lo[i] as f64 / 10.0;
            w[i] = (a, a + 0.2);
        }
        if kind == ScanKind::General {
            w[4] = (0.3, 0.7);
            w[5] = (0.4, 0.6);
        }
        let coarse = ScanConfig { kind, resolution: 5, window: Some(w) };
        let fine = coarse.refined(w, 4);
        let a = explorer::scan(&coarse, None).unwrap();
        let b = explorer::scan(&fine, None).unwrap();
        prop_assert!(b.max_i >= a.max_i || a.retained == 0);
    }
}

#[test]
fn scanned_points_are_quantum_and_local_points_among_them() {
    let mut n = 0;
    let mut sink = |p: &ScanPoint| {
        n += 1;
        let q = CorrelationQuad::from_success(p.p);
        assert!(nsbox::is_quantum_2x2(&q, nsbox::ARCSIN_TOL));
        assert!(p.quantum);
        if p.local {
            assert!(p.max_chsh() <= 2.0 + 1e-12);
        }
        assert!(p.i <= 1.0 + 1e-9);
    };
    let s = explorer::scan(&ScanConfig::new(ScanKind::General, 9), Some(&mut sink)).unwrap();
    assert_eq!(s.ic_violations, 0);
    assert_eq!(n as u64, s.retained);
    assert!((s.max_i - 1.0).abs() < 1e-9);
}

#[test]
fn isotropic_scan_is_monotone() {
    let mut pts = Vec::new();
    let mut sink = |p: &ScanPoint| pts.push(*p);
    explorer::scan(&ScanConfig::new(ScanKind::Isotropic, 41), Some(&mut sink)).unwrap();
    assert!(!pts.is_empty());
    assert!(explorer::monotonicity_violation(&pts).is_none());
    let origin = ScanPoint::evaluate([0.5; 4], [0.5, 0.5]);
    assert!(origin.chsh.abs() < 1e-12 && origin.i.abs() < 1e-12);
}

#[test]
fn scan_result_does_not_depend_on_worker_count() {
    let cfg = ScanConfig::new(ScanKind::General, 8);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| explorer::scan(&cfg, None).unwrap());
    let b = three.install(|| explorer::scan(&cfg, None).unwrap());
    assert_eq!(a, b);
}

#[test]
fn resumed_scan_matches_uninterrupted_scan() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("scan.json");
    let cfg = ScanConfig::new(ScanKind::General, 11);
    let full = explorer::scan(&cfg, None).unwrap();
    let resumed = explorer::scan_resumable(&cfg, None, Some(&cp)).unwrap();
    assert!(cp.exists());
    // a finished checkpoint resumes to the same summary without new work
    let again = explorer::scan_resumable(&cfg, None, Some(&cp)).unwrap();
    assert_eq!(full, resumed);
    assert_eq!(full, again);
}
