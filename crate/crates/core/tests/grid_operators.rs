//! Grid maximal and square functions applied to a concrete atom.

use dunkl_hardy::grid::{
    hardy_littlewood_maximal, l1_norm_with_tail, nontangential_heat_maximal, profile,
    square_function, BallSweep, ConeGrid, WeightedGridFunction,
};
use dunkl_hardy::heat::HeatKernel;
use dunkl_hardy::measure::Measure;
use dunkl_hardy::poisson::PoissonKernel;
use dunkl_hardy::root_system::RootSystem;

/// alpha on (2, 2.5], -beta on (1.5, 2], mean zero and ||a||_2 w(B)^{1/2} = 1
/// with B = B(2, 1/2), in dimension one with k = 1.
fn atom(m: &Measure, level: u32) -> WeightedGridFunction {
    let wl = m.box_mass(&[1.5], &[2.0]).unwrap();
    let wr = m.box_mass(&[2.0], &[2.5]).unwrap();
    let wb = m.ball(&[2.0], 0.5).unwrap();
    let alpha = (1.0 / (wb * (wr + wr * wr / wl))).sqrt();
    let beta = alpha * wr / wl;
    WeightedGridFunction::new(m, &[-4.0], &[4.0], level, |z| {
        if z[0] > 2.0 && z[0] <= 2.5 {
            alpha
        } else if z[0] > 1.5 && z[0] <= 2.0 {
            -beta
        } else {
            0.0
        }
    })
    .unwrap()
}

fn setup() -> (Measure, HeatKernel, PoissonKernel) {
    let rs = RootSystem::a1_product(&[1.0]).unwrap();
    (
        Measure::new(rs.clone()),
        HeatKernel::new(rs.clone()).unwrap(),
        PoissonKernel::new(rs).unwrap(),
    )
}

#[test]
fn square_function_norm_is_stable_under_refinement() {
    let (m, _, p) = setup();
    let run = |f_level: u32, eval_level: u32, levels: usize, res: usize| {
        let a = atom(&m, f_level);
        let layout = WeightedGridFunction::new(&m, &[-8.0], &[8.0], eval_level, |_| 0.0).unwrap();
        let prof = profile(&layout, |x| {
            let cone = ConeGrid::for_function(&a, x, levels, res)?;
            Ok(square_function(&p, &a, &cone, 1e-7)?.value)
        })
        .unwrap();
        l1_norm_with_tail(&m, &prof, &[2.0], 0.5).unwrap()
    };
    let coarse = run(6, 5, 5, 2);
    let fine = run(7, 6, 9, 4);
    assert!(coarse.total.is_finite() && coarse.total > 0.0);
    let change = (fine.total - coarse.total).abs() / fine.total;
    assert!(
        change < 0.05,
        "{} -> {} ({change})",
        coarse.total,
        fine.total
    );
    assert!(fine.tail.is_finite() && fine.interior > 0.0);
}

#[test]
fn heat_maximal_function_of_an_atom_is_integrable() {
    let (m, h, _) = setup();
    let a = atom(&m, 6);
    let layout = WeightedGridFunction::new(&m, &[-8.0], &[8.0], 6, |_| 0.0).unwrap();
    let prof = profile(&layout, |x| {
        let cone = ConeGrid::for_function(&a, x, 7, 3)?;
        Ok(nontangential_heat_maximal(&h, &a, &cone).value)
    })
    .unwrap();
    let norm = l1_norm_with_tail(&m, &prof, &[2.0], 0.5).unwrap();
    assert!(norm.total.is_finite() && norm.total > 0.0);
    // M_H a >= |a| away from its jumps, so the L^1 norm cannot be below ||a||_1
    assert!(norm.total >= 0.5 * a.lp_norm(1.0), "{norm:?}");
}

#[test]
fn hardy_littlewood_dominates_averages() {
    let (m, _, _) = setup();
    let a = atom(&m, 7);
    let abs = a.map(|_, v| v.abs());
    let balls = BallSweep::for_function(&abs, 3);
    for x in [[1.6], [2.0], [2.4], [-2.0], [0.0]] {
        let est = hardy_littlewood_maximal(&m, &abs, &x, &balls).unwrap();
        // the centered average over B(2, 1/2) is a competitor whenever x lies in it
        if (x[0] - 2.0_f64).abs() < 0.5 {
            let avg = abs.integral() / m.ball(&[2.0], 0.5).unwrap();
            assert!(est.value >= 0.5 * avg, "{x:?}: {} vs {avg}", est.value);
        }
        // cells are counted by center against the exact ball measure, so a
        // small overshoot of ||f||_inf is discretization
        assert!(
            est.value <= 1.1 * abs.lp_norm(f64::INFINITY),
            "{x:?}: {}",
            est.value
        );
    }
}
