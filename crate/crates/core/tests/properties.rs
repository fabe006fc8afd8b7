mod common;

use proptest::prelude::*;
use xferxai::algebra::{apply_affine, compose, to_homogeneous, AffineTransfer, HomogeneousTransform, MappingPartition};
use xferxai::explain::{display_tolerance, explain_instance, format_scale, parse_scale, ScaleDirection};
use xferxai::metrics::{log_ape, log_woa, relation_of_factors, ResponseRecord};
use xferxai::preprocess::{center, compute_means};
use xferxai::trainer::{snap_sparse, sparsity_loss_with, FitOptions, Snap, SnapThresholds};
use xferxai::{fit_transfer_with, AttributeSchema, LinearExplainer, Matrix, TransferKind};

const EXACT: f64 = 1e-12;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn explainer_strategy(max_n: usize) -> impl Strategy<Value = LinearExplainer<f64>> {
    (1..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0..5.0f64, n),
            -50.0..50.0f64,
            prop::collection::vec(-10.0..10.0f64, n),
        )
            .prop_map(move |(w, c, means)| LinearExplainer::new(common::schema("x", n), w, c, means).unwrap())
    })
}

fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

/// Explainer plus a transfer of any kind that applies to it; mappings may change the attribute count.
fn explainer_and_transfer() -> impl Strategy<Value = (LinearExplainer<f64>, AffineTransfer<f64>)> {
    (explainer_strategy(6), 0..3u8, 1..=7usize).prop_flat_map(|(e, kind, n_t)| {
        let n = e.len();
        let transfer: BoxedStrategy<AffineTransfer<f64>> = match kind {
            0 => prop::collection::vec(-3.0..3.0f64, n + 1).prop_map(AffineTransfer::translation).boxed(),
            1 => prop::collection::vec(-3.0..3.0f64, n + 1).prop_map(AffineTransfer::scaling).boxed(),
            _ => matrix_strategy(n, n_t)
                .prop_map(move |m| {
                    let t = AffineTransfer::mapping(m, MappingPartition::disjoint(n, n_t));
                    let frame = xferxai::algebra::ExplainerFrame {
                        schema: common::schema("t", n_t),
                        attribute_means: vec![0.0; n_t],
                    };
                    t.with_target(frame)
                })
                .boxed(),
        };
        (Just(e), transfer)
    })
}

/// Square homogeneous transform over `k` factor slots built from a random transfer.
fn homogeneous_strategy(k: usize) -> impl Strategy<Value = HomogeneousTransform<f64>> {
    (0..3u8, prop::collection::vec(-2.0..2.0f64, (k + 1) * (k + 1))).prop_map(move |(kind, v)| {
        let t = match kind {
            0 => AffineTransfer::translation(v[..k + 1].to_vec()),
            1 => AffineTransfer::scaling(v[..k + 1].to_vec()),
            _ => AffineTransfer::mapping(Matrix::new(k, k, v[..k * k].to_vec()).unwrap(), MappingPartition::disjoint(k, k)),
        };
        to_homogeneous(&t).unwrap()
    })
}

fn mat_close(a: &Matrix<f64>, b: &Matrix<f64>, tol: f64) -> bool {
    let scale = a.as_slice().iter().chain(b.as_slice()).fold(1.0f64, |m, v| m.max(v.abs()));
    a.max_abs_diff(b) <= tol * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn homogeneous_matches_direct_application((e, t) in explainer_and_transfer()) {
        let direct = apply_affine(&t, &e).unwrap();
        let (factors, centroid) = to_homogeneous(&t).unwrap().apply(&e.factors, e.centroid_label).unwrap();
        let m = direct.len();
        for r in 0..m {
            prop_assert!(close(factors[r], direct.factors[r], EXACT), "slot {r}: {} vs {}", factors[r], direct.factors[r]);
        }
        // padding slots beyond the target attribute count stay empty
        prop_assert!(factors[m..].iter().all(|&v| v == 0.0));
        prop_assert!(close(centroid, direct.centroid_label, EXACT));
    }

    #[test]
    fn composite_equals_sequential(
        (h1, h2, w, c) in (1..=6usize).prop_flat_map(|k| (
            homogeneous_strategy(k),
            homogeneous_strategy(k),
            prop::collection::vec(-5.0..5.0f64, k),
            -20.0..20.0f64,
        ))
    ) {
        let (w1, c1) = h1.apply(&w, c).unwrap();
        let (w2, c2) = h2.apply(&w1, c1).unwrap();
        let (wc, cc) = compose(&h2, &h1).unwrap().apply(&w, c).unwrap();
        for (a, b) in w2.iter().zip(&wc) {
            prop_assert!(close(*a, *b, EXACT));
        }
        prop_assert!(close(c2, cc, EXACT));
    }

    #[test]
    fn composition_is_associative(
        (h1, h2, h3) in (1..=6usize).prop_flat_map(|k| (homogeneous_strategy(k), homogeneous_strategy(k), homogeneous_strategy(k)))
    ) {
        let left = compose(&compose(&h3, &h2).unwrap(), &h1).unwrap();
        let right = compose(&h3, &compose(&h2, &h1).unwrap()).unwrap();
        prop_assert!(mat_close(left.matrix(), right.matrix(), EXACT));
    }

    #[test]
    fn mapping_preserves_predictions(
        (m, w_o, chi_t) in (1..=8usize, 1..=8usize).prop_flat_map(|(n_o, n_t)| (
            matrix_strategy(n_o, n_t),
            prop::collection::vec(-5.0..5.0f64, n_o),
            prop::collection::vec(-5.0..5.0f64, n_t),
        ))
    ) {
        let chi_o = m.mul_vec(&chi_t).unwrap();
        let w_t = m.tr_mul_vec(&w_o).unwrap();
        let lhs: f64 = w_o.iter().zip(&chi_o).map(|(a, b)| a * b).sum();
        let rhs: f64 = w_t.iter().zip(&chi_t).map(|(a, b)| a * b).sum();
        prop_assert!(close(lhs, rhs, EXACT), "{lhs} vs {rhs}");
    }

    #[test]
    fn scaling_sign_follows_kappa(e in explainer_strategy(6), kappa_seed in prop::collection::vec(-3.0..3.0f64, 7)) {
        let n = e.len();
        let t = AffineTransfer::scaling(kappa_seed[..n + 1].to_vec());
        let out = apply_affine(&t, &e).unwrap();
        for r in 0..n {
            let (w_o, k, w_t) = (e.factors[r], kappa_seed[r], out.factors[r]);
            if w_o != 0.0 && k != 0.0 {
                prop_assert_eq!(w_t.signum(), k.signum() * w_o.signum());
            }
        }
    }

    #[test]
    fn identity_transfers_are_neutral(e in explainer_strategy(6)) {
        for kind in [TransferKind::Subspace, TransferKind::Task, TransferKind::Attributes] {
            let out = apply_affine(&AffineTransfer::identity(kind, e.len()), &e).unwrap();
            prop_assert_eq!(&out.factors, &e.factors);
            prop_assert_eq!(out.centroid_label, e.centroid_label);
        }
    }

    #[test]
    fn explanation_is_additive(e in explainer_strategy(6), raw in prop::collection::vec(-20.0..20.0f64, 6), y in 1.0..100.0f64) {
        let raw = &raw[..e.len()];
        let ex = explain_instance(&e, raw, Some(y)).unwrap();
        let sum: f64 = ex.partial_contributions.iter().sum();
        prop_assert!((ex.explainer_estimate - ex.centroid - sum).abs() <= 1e-9);
        prop_assert!(close(ex.explainer_estimate, e.predict_raw(raw).unwrap(), EXACT));
        prop_assert!(ex.percent_difference.is_some());
        let bare = explain_instance(&e, raw, None).unwrap();
        prop_assert!(bare.percent_difference.is_none());
    }

    #[test]
    fn scale_text_round_trips(magnitude in 0.01..100.0f64, negative in any::<bool>()) {
        let kappa = if negative { -magnitude } else { magnitude };
        let text = format_scale(kappa, 2);
        let reading = parse_scale(&text).unwrap();
        prop_assert_eq!(reading.opposite, negative);
        let ratio = magnitude.max(1.0 / magnitude);
        match reading.direction {
            ScaleDirection::Similar => prop_assert!(ratio <= 1.05 + 1e-12),
            ScaleDirection::Bigger => prop_assert!(magnitude > 1.0),
            ScaleDirection::Smaller => prop_assert!(magnitude < 1.0),
            ScaleDirection::Removed => prop_assert!(false, "nonzero scale read as removed"),
        }
        if reading.direction != ScaleDirection::Similar {
            prop_assert!((reading.ratio - ratio).abs() <= display_tolerance(ratio, 2) * (1.0 + 1e-9), "{text} from {kappa}");
        }
    }

    #[test]
    fn reciprocal_scales_mirror(kappa in 0.01..100.0f64) {
        prop_assume!((kappa.max(1.0 / kappa)) > 1.05 + 1e-9);
        let a = parse_scale(&format_scale(kappa, 2)).unwrap();
        let b = parse_scale(&format_scale(1.0 / kappa, 2)).unwrap();
        prop_assert_eq!(a.ratio, b.ratio);
        let swapped = match a.direction {
            ScaleDirection::Bigger => ScaleDirection::Smaller,
            ScaleDirection::Smaller => ScaleDirection::Bigger,
            other => other,
        };
        prop_assert_eq!(b.direction, swapped);
    }

    #[test]
    fn woa_exponent_identity(
        p in -100.0..100.0f64, a in -100.0..100.0f64, m in -100.0..100.0f64,
    ) {
        let near = (p - a).abs();
        let far = (p - m).abs();
        prop_assume!(near >= 1e-6 && far >= 1e-6);
        let rec = ResponseRecord { participant_label: p, aligned_xai_label: a, misaligned_xai_label: m, explainer_label: 0.0, system_label: 1.0 };
        let woa = log_woa(&rec, 1e-6).unwrap();
        prop_assert!(close(woa.value.exp() * near, far, 1e-9));
        prop_assert_eq!(log_woa(&rec.swapped(), 1e-6).unwrap().value, -woa.value);
    }

    #[test]
    fn ape_is_scale_invariant(r in -50.0..50.0f64, w in 0.1..50.0f64, neg in any::<bool>(), c in 0.01..100.0f64, flip in any::<bool>()) {
        let w = if neg { -w } else { w };
        let c = if flip { -c } else { c };
        let base = log_ape(r, w, 1e-6).unwrap();
        let scaled = log_ape(c * r, c * w, 1e-6).unwrap();
        prop_assert_eq!(base.clamped, scaled.clamped);
        prop_assert!((base.value - scaled.value).abs() <= 1e-9 * base.value.abs().max(1.0));
    }

    #[test]
    fn relation_direction_is_kappa_sign(w_o in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64], kappa in prop_oneof![-5.0..-0.01f64, 0.01..5.0f64]) {
        let rel = relation_of_factors(w_o, kappa * w_o, 0.1).unwrap();
        prop_assert_eq!(rel.direction as f64, kappa.signum());
    }

    #[test]
    fn centering_gives_zero_column_means(
        (rows, cols, data) in (2..40usize, 1..6usize).prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(-1e3..1e3f64, r * c)))
    ) {
        let raw = Matrix::new(rows, cols, data).unwrap();
        let chi = center(&raw, &compute_means(&raw).unwrap()).unwrap();
        for j in 0..cols {
            let col = raw.column(j);
            let mean = col.iter().sum::<f64>() / rows as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64).sqrt();
            let chi_mean = chi.column(j).iter().sum::<f64>() / rows as f64;
            prop_assert!(chi_mean.abs() <= 1e-9 * sd.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn snapping_never_increases_sparsity(
        seed in 0..1000u64,
        kind in 0..3u8,
        lambda in prop_oneof![Just(0.0), Just(0.1), Just(1.0)],
        eps in (0.0..0.3f64, 0.0..0.3f64, 0.0..0.3f64),
        penalize in any::<bool>(),
    ) {
        let kind = [TransferKind::Subspace, TransferKind::Task, TransferKind::Attributes][kind as usize];
        let (o, t) = match kind {
            TransferKind::Subspace => { let p = common::subspace_pair(seed, 60, &[1.0, -2.0, 0.5], &[0.3, 0.0, -0.1, 2.0], 0.2); (p.original, p.target) }
            TransferKind::Task => { let p = common::task_pair(seed, 60, &[1.0, -2.0, 0.5], &[1.02, 1.5, -0.8, 1.0], 5.0, 1.0, 0.2); (p.original, p.target) }
            TransferKind::Attributes => { let p = common::attribute_pair(seed, 60, 0.2); (p.original, p.target) }
        };
        let mut opts = FitOptions::<f64>::default();
        opts.snap = Snap::Off;
        opts.penalize_intercept = penalize;
        opts.minimize.max_iter = 200;
        let fit = fit_transfer_with(&o, &t, kind, lambda, seed, &opts).unwrap();
        let thresholds = SnapThresholds { delta_eps: eps.0, scale_eps: eps.1, map_eps: eps.2 };
        let snapped = snap_sparse(&fit, &thresholds).unwrap();
        let before = sparsity_loss_with(&fit.transfer, penalize);
        let after = sparsity_loss_with(&snapped.transfer, penalize);
        prop_assert!(after <= before + 1e-15, "{before} -> {after}");
        prop_assert_eq!(&snapped.derived_target, &apply_affine(&snapped.transfer, &snapped.original).unwrap());
    }
}

#[test]
fn non_square_mapping_pads_with_empty_slots() {
    // 2 Original attributes from 3 Target attributes
    let m = Matrix::from_rows(&[vec![0.5, -1.0, 2.0], vec![0.0, 3.0, 1.0]]).unwrap();
    let h = to_homogeneous(&AffineTransfer::mapping(m, MappingPartition::disjoint(2, 3))).unwrap();
    assert_eq!(h.dim(), 5);
    let (w, c) = h.apply(&[2.0, 1.0], 7.0).unwrap();
    assert_eq!(w, vec![1.0, 1.0, 5.0]);
    assert_eq!(c, 7.0);
}

#[test]
fn schema_shared_mask_is_symmetric() {
    let a = AttributeSchema::from_names(&["u", "s1", "s2"]).unwrap();
    let b = AttributeSchema::from_names(&["p", "s2", "q", "s1"]).unwrap();
    let ab: Vec<(usize, usize)> = a.shared_pairs(&b);
    let ba: Vec<(usize, usize)> = b.shared_pairs(&a).into_iter().map(|(i, j)| (j, i)).collect();
    let mut ba = ba;
    ba.sort();
    assert_eq!(ab, ba);
    assert_eq!(a.shared_mask(&b), vec![false, true, true]);
}
