use mgl_core::conditions::{
    check_convex_second_derivative, check_cross_condition, check_sqrt_convex, check_symmetric_sum_nondecreasing, Grid,
};
use mgl_core::function::{library, FunctionSpec};

const RHOS: [f64; 7] = [1.2, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];

fn grid() -> Grid {
    Grid::new(-10.0, 10.0, 201).unwrap()
}

#[test]
fn convex_second_derivative_implies_cross_condition() {
    let mut convex_count = 0;
    for f in library() {
        if check_convex_second_derivative(&f, &grid()).unwrap().holds {
            convex_count += 1;
            let v = check_cross_condition(&f, 10.0, 10.0).unwrap();
            assert!(v.holds, "{}: {v:?}", f.label());
        }
    }
    assert!(convex_count >= 5);
}

#[test]
fn cross_condition_is_strictly_wider() {
    for f in [FunctionSpec::floor_convex(), FunctionSpec::sawtooth()] {
        assert!(
            !check_convex_second_derivative(&f, &grid()).unwrap().holds,
            "{}",
            f.label()
        );
        assert!(check_cross_condition(&f, 10.0, 10.0).unwrap().holds, "{}", f.label());
    }
}

#[test]
fn power_functions_with_convex_second_derivative() {
    for rho in RHOS {
        let holds = check_convex_second_derivative(&FunctionSpec::abs_pow(rho).unwrap(), &grid())
            .unwrap()
            .holds;
        assert_eq!(holds, rho == 2.0 || rho >= 3.0, "rho = {rho}");
    }
}

#[test]
fn power_functions_with_convex_square_root_composition() {
    let g = Grid::new(0.0, 10.0, 201).unwrap();
    for rho in RHOS {
        let holds = check_sqrt_convex(&FunctionSpec::abs_pow(rho).unwrap(), &g)
            .unwrap()
            .holds;
        assert_eq!(holds, rho >= 2.0, "rho = {rho}");
    }
}

#[test]
fn negative_powers_have_nondecreasing_symmetric_sum() {
    for rho in [1.2, 1.5, 1.8] {
        let v = check_symmetric_sum_nondecreasing(&FunctionSpec::neg_abs_pow(rho).unwrap(), 10.0).unwrap();
        assert!(v.holds, "rho = {rho}: {v:?}");
    }
    for rho in [1.2, 1.5] {
        let v = check_symmetric_sum_nondecreasing(&FunctionSpec::abs_pow(rho).unwrap(), 10.0).unwrap();
        assert!(!v.holds, "rho = {rho}");
    }
}

#[test]
fn verdict_tolerance_rule() {
    for f in library() {
        let v = check_cross_condition(&f, 10.0, 10.0).unwrap();
        assert_eq!(v.holds, v.worst_violation <= 1e-7, "{}", f.label());
        assert!(v.worst_violation >= 0.0);
    }
}
