use ahres::distance::{
    boundary_decomposition, distance_csv, distance_shoot, eikonal_check, jacobian_dpi, Multiplicity, Point, ShootOptions,
};
use ahres::flow::flow_fixed;
use ahres::hypres::half_space_distance;
use ahres::metric::MetricModel;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn opts() -> ShootOptions {
    ShootOptions { starts: 4, ..ShootOptions::default() }
}

#[test]
fn unperturbed_matches_closed_form() {
    let m = MetricModel::<f64>::perturbed(2, 0.0).unwrap();
    let pairs = [
        (Point::new(0.5, vec![0.1, -0.2]), Point::new(1.3, vec![0.4, 0.3])),
        (Point::new(0.05, vec![0.0, 0.0]), Point::new(0.07, vec![0.3, 0.1])),
        (Point::new(2.0, vec![1.0, 1.0]), Point::new(0.3, vec![-1.0, 0.5])),
    ];
    for (z, zp) in &pairs {
        let d = distance_shoot(&m, z, zp, &opts()).unwrap();
        let exact = half_space_distance(z.x, &z.y, zp.x, &zp.y);
        assert_relative_eq!(d.value, exact, epsilon = 1e-10);
    }
}

#[test]
fn eikonal_exact_and_perturbed() {
    let z = Point::new(0.4, vec![0.2, 0.1]);
    let zp = Point::new(0.6, vec![-0.3, 0.4]);
    let exact = eikonal_check(&MetricModel::half_space(2), &z, &zp, &opts()).unwrap();
    assert!(exact.residual < 1e-6, "{exact:?}");
    assert!(exact.covector_mismatch < 1e-5, "{exact:?}");
    let pert = eikonal_check(&MetricModel::perturbed(2, 0.05).unwrap(), &z, &zp, &opts()).unwrap();
    assert!(pert.residual < 1e-5, "{pert:?}");
}

#[test]
fn eikonal_rejects_near_diagonal() {
    let z = Point::new(0.4, vec![0.2]);
    let zp = Point::new(0.41, vec![0.2]);
    assert!(eikonal_check(&MetricModel::half_space(1), &z, &zp, &opts()).is_err());
}

#[test]
fn distance_along_geodesic_is_twice_time() {
    let m = MetricModel::<f64>::perturbed(2, 0.05).unwrap();
    let z = Point::new(0.5, vec![0.0, 0.1]);
    let mu_dir = [0.5, -0.3];
    let mu_norm = m.dual_norm_sq(z.x, &z.y, &mu_dir).unwrap().sqrt();
    let state = vec![z.x, 0.0, 0.1, 0.6, 0.8 * mu_dir[0] / mu_norm, 0.8 * mu_dir[1] / mu_norm];
    for t in [0.2, 0.5, 0.9] {
        let end = flow_fixed(&m, &state, t, 400).unwrap();
        let zp = Point::new(end[0], end[1..3].to_vec());
        let d = distance_shoot(&m, &z, &zp, &opts()).unwrap();
        assert_relative_eq!(d.value, 2.0 * t, epsilon = 1e-8);
    }
}

#[test]
fn rank_drop_orders() {
    let radii: Vec<f64> = (0..8).map(|k| 1e-3 * 10f64.powf(2.0 * k as f64 / 7.0)).collect();
    let one = jacobian_dpi(&MetricModel::half_space(1), &Point::new(1.0, vec![0.0]), &[0.6, 0.8], &radii).unwrap();
    assert!((one.fit.slope - 1.0).abs() < 0.05, "{}", one.fit.slope);
    let pert = jacobian_dpi(
        &MetricModel::perturbed(2, 0.05).unwrap(),
        &Point::new(0.8, vec![0.1, 0.0]),
        &[0.3, 0.5, 0.2],
        &radii,
    )
    .unwrap();
    assert!((pert.fit.slope - 2.0).abs() < 0.1, "{}", pert.fit.slope);
    assert!(jacobian_dpi(&MetricModel::half_space(1), &Point::new(1.0, vec![0.0]), &[1.0, 0.0], &[0.5, 0.6, 0.7]).is_err());
}

#[test]
fn boundary_decomposition_converges() {
    let pairs: Vec<(Point, Point)> = (4..=10)
        .map(|k| {
            let x = 2f64.powi(-k);
            (Point::new(x, vec![0.0, 0.0]), Point::new(x, vec![1.0, 0.5]))
        })
        .collect();
    let exact = boundary_decomposition(&MetricModel::half_space(2), &pairs, &opts()).unwrap();
    assert!(exact.converged, "{exact:?}");
    for (row, (z, zp)) in exact.rows.iter().zip(&pairs) {
        let oracle = half_space_distance(z.x, &z.y, zp.x, &zp.y) + z.x.ln() + zp.x.ln();
        assert_relative_eq!(row.psi_tilde, oracle, epsilon = 1e-9);
    }
    // Limit of the closed form: log |Δy|².
    assert!((exact.rows.last().unwrap().psi_tilde - 1.25f64.ln()).abs() < 1e-5);
    let pert = boundary_decomposition(&MetricModel::perturbed(2, 0.05).unwrap(), &pairs, &opts()).unwrap();
    assert!(pert.converged, "{pert:?}");
    assert!(pert.increment_ratio.unwrap() < 0.75);
}

#[test]
fn csv_has_header_and_rows() {
    let m = MetricModel::<f64>::half_space(1);
    let z = Point::new(1.0, vec![0.0]);
    let zp = Point::new(1.0, vec![1.0]);
    let d = distance_shoot(&m, &z, &zp, &opts()).unwrap();
    assert_eq!(d.multiplicity, Multiplicity::Unique);
    let csv = distance_csv("half-space", &[(z, zp, d)]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,x,y,x_prime,y_prime,psi,psi_tilde,flag");
    assert!(lines[1].starts_with("half-space,1,0,1,1,") && lines[1].ends_with(",unique"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn symmetric_and_triangle(
        a in (0.2f64..2.0, -1.0f64..1.0),
        b in (0.2f64..2.0, -1.0f64..1.0),
        c in (0.2f64..2.0, -1.0f64..1.0),
    ) {
        let m = MetricModel::<f64>::perturbed(1, 0.05).unwrap();
        let (za, zb, zc) = (Point::new(a.0, vec![a.1]), Point::new(b.0, vec![b.1]), Point::new(c.0, vec![c.1]));
        let o = opts();
        let dab = distance_shoot(&m, &za, &zb, &o).unwrap().value;
        let dba = distance_shoot(&m, &zb, &za, &o).unwrap().value;
        let dbc = distance_shoot(&m, &zb, &zc, &o).unwrap().value;
        let dac = distance_shoot(&m, &za, &zc, &o).unwrap().value;
        prop_assert!((dab - dba).abs() < 1e-8 * (1.0 + dab));
        prop_assert!(dac <= dab + dbc + 1e-8);
    }
}
