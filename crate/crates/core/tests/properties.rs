use std::sync::Arc;

use hphi4_core::besov::{apply_block, besov_norm, max_block, DyadicCutoff, NormGrid, NormSpec};
use hphi4_core::diagrams::mild_convolve;
use hphi4_core::hermite::mehler_kernel;
use hphi4_core::noise::{read_path, write_path, PathHeader};
use hphi4_core::paracalc::{ParaConfig, Paracalc};
use hphi4_core::{Field, FieldPath, ProductRule, Products, SpectralBasis};
use proptest::prelude::*;

fn field(b: &Arc<SpectralBasis>, c: &[f64]) -> Field {
    let mut v = c.to_vec();
    v.resize(b.len(), 0.0);
    v.truncate(b.len());
    Field::from_coeffs(b, v).unwrap()
}

/// Coefficients decaying like a smooth function's.
fn coeffs(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, k).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, c)| c / (1.0 + i as f64))
            .collect()
    })
}

fn para(k: usize, rule: ProductRule) -> Paracalc {
    let b = SpectralBasis::new(1, k).unwrap();
    Paracalc::new(Products::new(&b, rule).unwrap(), ParaConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_round_trip(c in coeffs(24)) {
        let b = SpectralBasis::new(1, 24).unwrap();
        let p = Products::new(&b, ProductRule::Dealiased).unwrap();
        let u = field(&b, &c);
        let back = p.project(&p.values(&u).unwrap()).unwrap();
        prop_assert!((&back - &u).l2_norm() < 1e-12, "{}", (&back - &u).l2_norm());
    }

    #[test]
    fn bony_identity_and_bilinearity(f in coeffs(32), g in coeffs(32), h in coeffs(32), a in -2.0..2.0f64) {
        let pc = para(32, ProductRule::Collocation);
        let b = pc.basis().clone();
        let (f, g, h) = (field(&b, &f), field(&b, &g), field(&b, &h));
        let (lo, res, hi) = pc.bony(&f, &g).unwrap();
        let mut sum = &lo + &res;
        sum += &hi;
        let prod = pc.product(&f, &g).unwrap();
        prop_assert!((&sum - &prod).l2_norm() < 1e-11 * (1.0 + prod.l2_norm()));
        // linear in the first slot
        let fa = &(&f * a) + &h;
        for op in [Paracalc::para_lo, Paracalc::para_res, Paracalc::para_hi] {
            let lhs = op(&pc, &fa, &g).unwrap();
            let mut rhs = &op(&pc, &f, &g).unwrap() * a;
            rhs += &op(&pc, &h, &g).unwrap();
            prop_assert!((&lhs - &rhs).l2_norm() < 1e-11 * (1.0 + rhs.l2_norm()));
        }
    }

    #[test]
    fn blocks_reconstruct(c in coeffs(40)) {
        let b = SpectralBasis::new(2, 40).unwrap();
        let u = field(&b, &c);
        let cut = DyadicCutoff::new();
        let mut s = Field::zeros(&b);
        for j in -1..=max_block(&b) {
            s += &apply_block(&u, j, &cut);
        }
        prop_assert!((&s - &u).l2_norm() < 1e-10);
    }

    #[test]
    fn besov_embedding_holds(c in coeffs(20), s1 in -1.5..1.5f64, ds in 0.0..1.0f64, p in prop::sample::select(vec![1.0, 2.0, f64::INFINITY])) {
        let b = SpectralBasis::new(1, 20).unwrap();
        let grid = Arc::new(NormGrid::new(&b).unwrap());
        let u = field(&b, &c);
        let lo = besov_norm(&u, NormSpec::new(&b, s1, p, f64::INFINITY), &grid);
        let hi = besov_norm(&u, NormSpec::new(&b, s1 + ds, p, f64::INFINITY), &grid);
        // block −1 carries weight 2^{−σ}, hence the constant
        prop_assert!(lo <= 2f64.powf(ds) * hi * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn semigroup_keeps_nonnegative_functions_nonnegative(q in prop::collection::vec(-1.0..1.0f64, 1..6), t in 0.01..2.0f64) {
        // e^{−x²/2}Q(x)² with deg Q ≤ 5 lies in the span and is nonnegative
        let b = SpectralBasis::new(1, 24).unwrap();
        let p = Products::new(&b, ProductRule::Dealiased).unwrap();
        let vals: Vec<f64> = p
            .grid()
            .nodes()
            .map(|x| {
                let qx = q.iter().rev().fold(0.0, |acc, c| acc * x[0] + c);
                (-x[0] * x[0] / 2.0).exp() * qx * qx
            })
            .collect();
        let u = p.project(&vals).unwrap();
        let out = p.values(&u.apply_semigroup(t).unwrap()).unwrap();
        let scale = vals.iter().copied().fold(0.0, f64::max);
        prop_assert!(out.iter().all(|&v| v >= -1e-10 * (1.0 + scale)));
    }

    #[test]
    fn mehler_kernel_is_symmetric_and_positive(t in 0.01..3.0f64, x in prop::collection::vec(-3.0..3.0f64, 3), y in prop::collection::vec(-3.0..3.0f64, 3)) {
        let a = mehler_kernel(t, &x, &y).unwrap();
        let b = mehler_kernel(t, &y, &x).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-14 * a);
    }

    #[test]
    fn mild_convolve_is_linear(a in -3.0..3.0f64, c1 in coeffs(8), c2 in coeffs(8), steps in 2usize..20) {
        let b = SpectralBasis::new(1, 8).unwrap();
        let mk = |c: &[f64], s: f64| {
            FieldPath::new(0.0, 0.01, (0..=steps).map(|m| &field(&b, c) * ((m as f64 * s).sin() + 1.0)).collect()).unwrap()
        };
        let (f, g) = (mk(&c1, 0.3), mk(&c2, 0.7));
        let comb = FieldPath::new(0.0, 0.01, f.fields().iter().zip(g.fields()).map(|(x, y)| &(x * a) + y).collect()).unwrap();
        let (mf, mg, mc) = (mild_convolve(&f).unwrap(), mild_convolve(&g).unwrap(), mild_convolve(&comb).unwrap());
        for m in 0..=steps {
            let expect = &(mf.get(m) * a) + mg.get(m);
            prop_assert!((mc.get(m) - &expect).l2_norm() < 1e-13 * (1.0 + expect.l2_norm()));
        }
    }

    #[test]
    fn path_files_round_trip(rows in prop::collection::vec(coeffs(6), 1..8), seed in any::<u64>()) {
        let b = SpectralBasis::new(1, 6).unwrap();
        let path = FieldPath::new(0.0, 0.5, rows.iter().map(|c| field(&b, c)).collect()).unwrap();
        let header = PathHeader {
            dimension: 1,
            modes: 6,
            n: 3,
            dt: 0.5,
            horizon: 0.5 * (rows.len() - 1) as f64,
            seed,
            generator: "test".into(),
            rows: rows.len(),
            name: Some("psi".into()),
            replica: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("p.bin");
        write_path(&file, &header, &path).unwrap();
        let (h, data) = read_path(&file).unwrap();
        prop_assert_eq!(h, header);
        for (r, f) in data.iter().zip(path.fields()) {
            prop_assert_eq!(r.as_slice(), f.coeffs());
        }
    }

    #[test]
    fn young_sums_are_additive(c in coeffs(8), l in 1u32..6) {
        let pc = para(8, ProductRule::Collocation);
        let b = pc.basis().clone();
        let steps = 256;
        let dt = 1.0 / steps as f64;
        let u = FieldPath::new(0.0, dt, (0..=steps).map(|m| &field(&b, &c) * (1.0 + m as f64 * dt)).collect()).unwrap();
        let f = FieldPath::new(0.0, dt, (0..=steps).map(|m| Field::unit(&b, 1).scaled((3.0 * m as f64 * dt).sin())).collect()).unwrap();
        let whole = pc.young_mild_integral(&u, &f, 0.0, 1.0, l + 1).unwrap().value;
        let left = pc.young_mild_integral(&u, &f, 0.0, 0.5, l).unwrap().value.apply_semigroup(0.5).unwrap();
        let right = pc.young_mild_integral(&u, &f, 0.5, 1.0, l).unwrap().value;
        let sum = &left + &right;
        prop_assert!((&whole - &sum).l2_norm() < 1e-9);
    }
}
