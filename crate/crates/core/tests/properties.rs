use nalgebra::SymmetricEigen;
use proptest::prelude::*;

use sesqui::certificates::{
    angle_from_bound, continuity_bound, gershgorin_check, symmetric_part, ConstantsBundle,
};
use sesqui::evolution::{evolve, EvolutionConfig};
use sesqui::forms::{
    associated_operator, block_apply, estimate_continuity, estimate_ellipticity, estimate_form_ellipticity,
    form_apply, numerical_range_samples, parabola_check, BlockVector, DiscreteSpace, FormMatrix, FormMetadata,
};
use sesqui::fmt_f64;
use sesqui::linalg::{c, complexify, max_abs, CVec, RMat, C64};
use sesqui::models::{
    build_damped_wave, build_ephaptic, mass_matrix, unit_stiffness, CoefficientField, Grid1D,
};
use sesqui::qualitative::{
    averaging_projection, ephaptic_sum_check, make_projection, subspace_invariance_check, LatticeOps,
    StripDirection, SumKind,
};
use sesqui::report::Verdict;

fn lambda_min(a: &RMat) -> f64 {
    SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues.min()
}

/// `m x m` matrix with diagonal in `(0.05, 3)` and nonpositive off-diagonals.
fn z_matrix() -> impl Strategy<Value = RMat> {
    (1usize..=6).prop_flat_map(|m| {
        (
            prop::collection::vec(0.05f64..3.0, m),
            prop::collection::vec(-1.5f64..=0.0, m * m),
        )
            .prop_map(move |(d, o)| RMat::from_fn(m, m, |i, j| if i == j { d[i] } else { o[i * m + j] }))
    })
}

fn complex_vec(n: usize) -> impl Strategy<Value = CVec> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_map(|v| CVec::from_iterator(v.len(), v.into_iter().map(|(a, b)| C64::new(a, b))))
}

/// Random coupled form on two P1 spaces with a complex coupling matrix.
fn random_form(n_cells: usize, entries: &[f64]) -> FormMatrix {
    let g = Grid1D::new(n_cells, 1.0).unwrap();
    let field = CoefficientField::constant(n_cells, &RMat::from_row_slice(2, 2, &entries[..4])).unwrap();
    let form = build_ephaptic(&g, &field).unwrap();
    let twist = form.block(0, 1).map(|z| z * C64::new(1.0, entries[4]));
    form.with_block(0, 1, twist).unwrap()
}

fn random_vector(form: &FormMatrix, flat: &CVec) -> BlockVector {
    BlockVector::split(form, flat)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dominance_implies_positive_definite(a in z_matrix()) {
        let bundle = ConstantsBundle::from_alpha(a.clone()).unwrap();
        if gershgorin_check(&bundle).verdict == Verdict::Pass {
            prop_assert!(lambda_min(&a) > 0.0);
        }
    }

    #[test]
    fn shrinking_couplings_keeps_dominance(a in z_matrix(), t in 0.0f64..=1.0) {
        let m = a.nrows();
        let shrunk = RMat::from_fn(m, m, |i, j| if i == j { a[(i, j)] } else { t * a[(i, j)] });
        let before = gershgorin_check(&ConstantsBundle::from_alpha(a).unwrap()).verdict;
        let after = gershgorin_check(&ConstantsBundle::from_alpha(shrunk).unwrap()).verdict;
        if before == Verdict::Pass {
            prop_assert_eq!(after, Verdict::Pass);
        }
    }

    #[test]
    fn angle_range_and_monotonicity(b1 in 0.0f64..50.0, b2 in 0.0f64..50.0) {
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let (a_lo, a_hi) = (angle_from_bound(lo), angle_from_bound(hi));
        prop_assert!(a_hi > 0.0 && a_lo <= std::f64::consts::FRAC_PI_2);
        prop_assert!(a_hi <= a_lo);
    }

    #[test]
    fn continuity_bound_is_at_least_diagonal(a in z_matrix()) {
        let m = a.nrows();
        let bundle = ConstantsBundle::new(a, RMat::zeros(m, m), vec![1.0; m], 1.0).unwrap();
        prop_assert!(continuity_bound(&bundle).unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn symmetric_part_is_idempotent(v in prop::collection::vec(-5.0f64..5.0, 9)) {
        let a = RMat::from_row_slice(3, 3, &v);
        let s = symmetric_part(&a).unwrap();
        prop_assert_eq!(symmetric_part(&s).unwrap(), s);
    }

    #[test]
    fn sesquilinearity(
        entries in prop::collection::vec(-2.0f64..2.0, 5),
        f in complex_vec(12),
        g in complex_vec(12),
        lre in -2.0f64..2.0,
        lim in -2.0f64..2.0,
    ) {
        let form = random_form(5, &entries);
        let (f, g) = (random_vector(&form, &f), random_vector(&form, &g));
        let lambda = C64::new(lre, lim);
        let base = form_apply(&form, &f, &g).unwrap();
        let scale = 1.0 + base.norm() * (1.0 + lambda.norm());
        let left = form_apply(&form, &f.scale(lambda), &g).unwrap();
        let right = form_apply(&form, &f, &g.scale(lambda)).unwrap();
        prop_assert!((left - lambda * base).norm() <= 1e-12 * scale);
        prop_assert!((right - lambda.conj() * base).norm() <= 1e-12 * scale);
    }

    #[test]
    fn splitting_identity(
        entries in prop::collection::vec(-2.0f64..2.0, 5),
        f in complex_vec(12),
        g in complex_vec(12),
    ) {
        let form = random_form(5, &entries);
        let (f, g) = (random_vector(&form, &f), random_vector(&form, &g));
        let total = form_apply(&form, &f, &g).unwrap();
        let mut sum = C64::new(0.0, 0.0);
        let mut size = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let part = block_apply(&form, i, j, f.part(j), g.part(i)).unwrap();
                size += part.norm();
                sum += part;
            }
        }
        prop_assert!((total - sum).norm() <= 1e-12 * size.max(1.0));
    }

    #[test]
    fn generator_blocks(entries in prop::collection::vec(-2.0f64..2.0, 5)) {
        let form = random_form(6, &entries);
        let op = associated_operator(&form).unwrap();
        let offsets = form.offsets();
        for i in 0..2 {
            let h_inv = form.space(i).h_gram().clone().try_inverse().unwrap();
            for j in 0..2 {
                let expected = -(&h_inv * form.block(i, j));
                let got = op.view((offsets[i], offsets[j]), expected.shape()).into_owned();
                prop_assert!(max_abs(&(got - &expected)) <= 1e-11 * max_abs(&expected).max(1.0));
            }
        }
    }

    #[test]
    fn full_coercivity_below_diagonal_blocks(
        entries in prop::collection::vec(-2.0f64..2.0, 5),
        omega in 0.0f64..2.0,
    ) {
        let form = random_form(6, &entries);
        let full = estimate_form_ellipticity(&form, omega).unwrap();
        for i in 0..2 {
            prop_assert!(full <= estimate_ellipticity(&form, i, omega).unwrap() + 1e-9);
        }
    }

    #[test]
    fn assembly_is_symmetric_and_finite(n in 2usize..40, coeff in 0.01f64..5.0) {
        let g = Grid1D::new(n, 1.0 + coeff).unwrap();
        let field = CoefficientField::constant(n, &RMat::from_element(1, 1, coeff)).unwrap();
        let form = build_ephaptic(&g, &field).unwrap();
        let s = form.full_matrix();
        prop_assert!(s.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        prop_assert_eq!(s.adjoint(), s);
        prop_assert_eq!(mass_matrix(&g).transpose(), mass_matrix(&g));
    }

    #[test]
    fn assembly_is_linear(a in prop::collection::vec(-3.0f64..3.0, 4 * 7), b in prop::collection::vec(-3.0f64..3.0, 4 * 7)) {
        let g = Grid1D::new(7, 2.0).unwrap();
        let fa = CoefficientField::from_fn(2, 7, |i, j, k| a[(i * 2 + j) * 7 + k]).unwrap();
        let fb = CoefficientField::from_fn(2, 7, |i, j, k| b[(i * 2 + j) * 7 + k]).unwrap();
        let sum = build_ephaptic(&g, &fa.add(&fb).unwrap()).unwrap().full_matrix();
        let parts = build_ephaptic(&g, &fa).unwrap().full_matrix() + build_ephaptic(&g, &fb).unwrap().full_matrix();
        prop_assert!(max_abs(&(sum - parts)) <= 1e-12 * 50.0);
    }

    #[test]
    fn damped_wave_parabola(alpha in -2.0f64..3.0, seed in 0u64..1000) {
        let g = Grid1D::new(12, 1.0).unwrap();
        let form = build_damped_wave(&g, c(alpha)).unwrap();
        let m_tilde = form.metadata().parabola_constant.unwrap();
        let samples = numerical_range_samples(&form, 200, seed);
        prop_assert!(parabola_check(&samples, m_tilde).pass);
    }

    #[test]
    fn strip_duality(entries in prop::collection::vec(-1.0f64..1.0, 6)) {
        // c = B B^T + skew part: sym(c) is positive semidefinite
        let b = RMat::from_row_slice(2, 2, &entries[..4]);
        let skew = RMat::from_row_slice(2, 2, &[0.0, entries[4], -entries[4], 0.0]);
        let coeff = &b * b.transpose() + skew + RMat::identity(2, 2) * entries[5].abs();
        let g = Grid1D::new(6, 1.0).unwrap();
        let form = build_ephaptic(&g, &CoefficientField::constant(6, &coeff).unwrap()).unwrap();
        let p = averaging_projection(2).unwrap();
        let ball = subspace_invariance_check(&form, &p, StripDirection::StripB).unwrap();
        let strip_adj = subspace_invariance_check(&form.adjoint(), &p, StripDirection::StripC).unwrap();
        prop_assert_eq!(ball.verdict(), strip_adj.verdict());
        let (r1, r2) = (ball.value("residual").unwrap(), strip_adj.value("residual").unwrap());
        prop_assert!((r1 - r2).abs() <= 1e-12 * r1.max(1.0));
    }

    #[test]
    fn row_sums_match_strip_check(entries in prop::collection::vec(-1.0f64..1.0, 9), equalise in any::<bool>(), cells in prop::collection::vec(0.0f64..1.0, 5)) {
        let b = RMat::from_row_slice(3, 3, &entries);
        let base = &b * b.transpose() + RMat::identity(3, 3) * 0.1;
        let field = CoefficientField::from_fn(3, 5, |i, j, k| {
            let mut v = base[(i, j)] * (1.0 + cells[k]);
            if equalise && i == j {
                // raise the diagonal so every row sums to the same value
                let rows: Vec<f64> = (0..3).map(|r| base.row(r).sum() * (1.0 + cells[k])).collect();
                let top = rows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                v += top - rows[i];
            }
            v
        }).unwrap();
        let g = Grid1D::new(5, 1.0).unwrap();
        let form = build_ephaptic(&g, &field).unwrap();
        let rows = ephaptic_sum_check(&field, SumKind::Rows).verdict();
        let strip = subspace_invariance_check(&form, &averaging_projection(3).unwrap(), StripDirection::StripC).unwrap().verdict();
        prop_assert_eq!(rows, strip);
    }

    #[test]
    fn random_projections_validate(v in prop::collection::vec(-1.0f64..1.0, 4)) {
        let x = CVec::from_iterator(4, v.iter().map(|&t| c(t)));
        prop_assume!(x.norm() > 1e-3);
        let u = &x / c(x.norm());
        let k = &u * u.adjoint();
        let p = make_projection(k.clone()).unwrap();
        prop_assert_eq!(p.rank(), 1);
        prop_assert!((&k * &p.eig1()[0] - &p.eig1()[0]).norm() < 1e-10);
        for w in p.eig0() {
            prop_assert!((&k * w).norm() < 1e-10);
        }
    }

    #[test]
    fn float_formatting_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn lattice_decomposition(x in -10.0f64..10.0) {
        prop_assert_eq!(LatticeOps::truncate(x) + LatticeOps::excess(x), x);
        prop_assert_eq!(LatticeOps::modulus(x), LatticeOps::sign(x) * x);
    }

    #[test]
    fn implicit_euler_contracts_on_accretive_forms(
        entries in prop::collection::vec(-1.0f64..1.0, 4),
        u in prop::collection::vec(-1.0f64..1.0, 18),
    ) {
        let b = RMat::from_row_slice(2, 2, &entries);
        let coeff = &b * b.transpose();
        let g = Grid1D::new(8, 1.0).unwrap();
        let form = build_ephaptic(&g, &CoefficientField::constant(8, &coeff).unwrap()).unwrap();
        let u0 = BlockVector::from_real(&[u[..9].to_vec(), u[9..].to_vec()]);
        let rec = evolve(&form, &u0, &EvolutionConfig::implicit_euler(0.05, 0.5).unwrap(), None).unwrap();
        for w in rec.h_norm.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
    }
}

#[test]
fn continuity_of_v_gram_block_is_one() {
    let g = Grid1D::new(10, 1.0).unwrap();
    let v = complexify(&(mass_matrix(&g) + unit_stiffness(&g)));
    let space = DiscreteSpace::new("p1", complexify(&mass_matrix(&g)), v.clone()).unwrap();
    let form = FormMatrix::new(vec![space], vec![v], FormMetadata::named("v")).unwrap();
    assert!((estimate_continuity(&form, 0, 0).unwrap() - 1.0).abs() <= 1e-9);
}

#[test]
fn refinement_changes_unit_coercivity_little() {
    for omega in [0.5, 1.0, 2.0] {
        let est = |n: usize| {
            let g = Grid1D::new(n, 1.0).unwrap();
            let form = build_ephaptic(&g, &CoefficientField::constant(n, &RMat::identity(1, 1)).unwrap()).unwrap();
            estimate_ellipticity(&form, 0, omega).unwrap()
        };
        let (coarse, fine) = (est(16), est(32));
        assert!((fine - coarse).abs() < 0.05 * coarse.abs(), "omega {omega}: {coarse} vs {fine}");
    }
}
