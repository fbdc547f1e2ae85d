//! Decompositions on randomized and two-dimensional inputs.

use proptest::prelude::*;

use dunkl_hardy::atoms::{chain_decompose, cz_split, validate_cw_atom, Bookkeeping, Support};
use dunkl_hardy::grid::WeightedGridFunction;
use dunkl_hardy::measure::Measure;
use dunkl_hardy::root_system::RootSystem;

#[test]
fn chain_in_two_dimensions() {
    let rs = RootSystem::a1_product(&[1.0, 1.0]).unwrap();
    let m = Measure::new(rs.clone());
    let (y0, r) = ([2.0, 1.5], 0.25);
    let layout = WeightedGridFunction::new(&m, &[-3.0, -3.0], &[3.0, 3.0], 7, |_| 0.0).unwrap();
    // signed masses on the four orbit balls, summing to zero
    let weights = [0.4, -0.1, -0.2, -0.1];
    let mut g = layout.clone();
    for (e, c) in rs.group().iter().zip(weights) {
        let p = e.matrix.apply(&y0);
        let ind = layout.map(|z, _| {
            if (z[0] - p[0]).hypot(z[1] - p[1]) < r {
                1.0
            } else {
                0.0
            }
        });
        g = g.axpy(c / ind.integral(), &ind).unwrap();
    }
    let d = chain_decompose(&rs, &m, &g, &y0, r, 1e4, 1e-10).unwrap();
    let Bookkeeping::Chain(book) = &d.bookkeeping else {
        unreachable!()
    };
    assert!(d.all_valid());
    assert!(d.reconstruction_error < 1e-10, "{}", d.reconstruction_error);
    assert!(book.chain_coefficient_sum <= book.group_bound);
    // every nonidentity image is at distance >= 4r = 1
    assert_eq!(book.entries.iter().filter(|e| e.in_chain).count(), 3);
    for e in book.entries.iter().filter(|e| e.in_chain) {
        let m_j = e.m_j.unwrap();
        assert_eq!(m_j, (e.distance / r).floor() as usize);
        let (lo, hi) = e.spacing.unwrap();
        assert!(lo >= r - 1e-12 && hi <= 1.25 * r + 1e-12);
    }
    let s: f64 = book.entries.iter().map(|e| e.coefficient).sum();
    assert!((s - book.chain_coefficient_sum).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn cz_reconstructs_random_step_atoms(
        steps in prop::collection::vec(-5.0f64..5.0, 16),
        k in prop::sample::select(vec![0.0, 0.5, 1.0]),
    ) {
        let m = Measure::new(RootSystem::a1_product(&[k]).unwrap());
        let raw = WeightedGridFunction::new(&m, &[0.0], &[1.0], 8, |z| steps[((z[0] * 16.0) as usize).min(15)]).unwrap();
        prop_assume!(raw.lp_norm(2.0) > 1e-6);
        let mean = raw.integral() / raw.total_mass();
        let g = raw.map(|_, v| v - mean);
        prop_assume!(g.lp_norm(2.0) > 1e-6);
        let a = g.scaled(1.0 / (g.lp_norm(2.0) * g.total_mass().sqrt()));
        let input = validate_cw_atom(&m, &a, &Support::cube(&[0.0], &[1.0]), 2.0, 1e-9).unwrap();
        prop_assert!(input.pass);
        let d = cz_split(&m, &a, 30, 1e-9, None).unwrap();
        let Bookkeeping::Cz(book) = &d.bookkeeping else { unreachable!() };
        prop_assert!(d.all_valid());
        prop_assert!(d.reconstruction_error < 1e-10);
        prop_assert!(d.coefficient_sum <= book.coefficient_bound);
        for r in &book.rounds {
            prop_assert!(r.worst_piece_contraction <= 0.5);
        }
    }
}
