use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use alprox::nlp::LineSearchParams;
use alprox::problems::{car_step, car_step_jacobians, PolyhedralObstacle};

fn vec_of(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(lo..hi, n)
}

proptest! {
    #[test]
    fn obstacle_value_ignores_row_order(
        rows in vec_of(8, -1.0, 1.0),
        d in vec_of(4, -1.0, 1.0),
        x in vec_of(2, -2.0, 2.0),
        shift in 1usize..4,
    ) {
        let c = DMatrix::from_row_slice(4, 2, &rows);
        let obs = PolyhedralObstacle::new(c.clone(), DVector::from_vec(d.clone())).unwrap();
        let perm: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
        let c2 = DMatrix::from_fn(4, 2, |i, j| c[(perm[i], j)]);
        let d2 = DVector::from_fn(4, |i, _| d[perm[i]]);
        let obs2 = PolyhedralObstacle::new(c2, d2).unwrap();
        let x = DVector::from_vec(x);
        prop_assert_eq!(obs.eval(&x).0, obs2.eval(&x).0);
    }

    #[test]
    fn obstacle_gradient_takes_lowest_tied_row(x in vec_of(2, -2.0, 2.0)) {
        // Rows 0 and 2 are identical, so they always tie.
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -1.0, 0.0, 1.0, 0.5]);
        let obs = PolyhedralObstacle::new(c, DVector::from_vec(vec![0.2, 0.1, 0.2])).unwrap();
        let (_, row) = obs.eval(&DVector::from_vec(x));
        prop_assert_ne!(row, 2);
    }

    #[test]
    fn car_jacobians_match_central_differences(
        x in vec_of(4, -1.0, 1.0),
        u in vec_of(2, -0.5, 0.5),
    ) {
        let (d, dt, h) = (2.0, 0.03, 1e-6);
        let (x, u) = (DVector::from_vec(x), DVector::from_vec(u));
        let (fx, fu) = car_step_jacobians(&x, &u, d, dt).unwrap();
        let fd = |z: &DVector<f64>, i: usize, is_x: bool| {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[i] += h;
            zm[i] -= h;
            let (p, m) = if is_x {
                (car_step(&zp, &u, d, dt).unwrap(), car_step(&zm, &u, d, dt).unwrap())
            } else {
                (car_step(&x, &zp, d, dt).unwrap(), car_step(&x, &zm, d, dt).unwrap())
            };
            (p - m) / (2.0 * h)
        };
        for i in 0..4 {
            let col = fd(&x, i, true);
            prop_assert!((&col - fx.column(i)).amax() <= 1e-5 * (1.0 + col.amax()));
        }
        for i in 0..2 {
            let col = fd(&u, i, false);
            prop_assert!((&col - fu.column(i)).amax() <= 1e-5 * (1.0 + col.amax()));
        }
    }

    #[test]
    fn trial_steps_are_decreasing_and_cover_the_backtracking_powers(
        bps in proptest::collection::vec(-0.5f64..1.5, 0..10),
        t in 0.2f64..0.8,
    ) {
        let ls = LineSearchParams { backtrack_factor: t, ..Default::default() };
        let steps = ls.trial_steps(bps.clone());
        prop_assert_eq!(steps[0], 1.0);
        prop_assert!(steps.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(steps.iter().all(|&a| a >= ls.alpha_min && a <= 1.0));
        let mut a = 1.0;
        while a >= ls.alpha_min {
            prop_assert!(steps.contains(&a));
            a *= t;
        }
        // Anything beyond the powers is a supplied breakpoint.
        let powers = steps.iter().filter(|s| !bps.contains(s)).count();
        prop_assert!(steps.len() - powers <= bps.len());
    }
}
