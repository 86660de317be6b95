use ifront_core::*;

fn front(d: f64, r: f64, c: f64, y_max: f64) -> FrontProfile {
    let params = ModelParams::new(d, r, c).unwrap();
    let res = find_alpha1(&params, 1e-8, y_max).unwrap();
    reconstruct(&res.trajectory, &params).unwrap()
}

/// Derivative at `xs[2]` of the quartic through five points.
fn lagrange5_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let x0 = xs[2];
    let mut total = 0.0;
    for j in 0..5 {
        let denom: f64 = (0..5).filter(|&m| m != j).map(|m| xs[j] - xs[m]).product();
        let mut num = 0.0;
        for k in (0..5).filter(|&k| k != j) {
            num += (0..5).filter(|&m| m != j && m != k).map(|m| x0 - xs[m]).product::<f64>();
        }
        total += ys[j] * num / denom;
    }
    total
}

#[test]
fn reconstructed_u_satisfies_first_equation() {
    for (d, r, c) in [(2.0, 1.0, 0.5), (2.0, 1.0, 2.0)] {
        let prof = front(d, r, c, 200.0);
        let mut worst: f64 = 0.0;
        for i in 2..prof.len() - 2 {
            let u = prof.u[i];
            if !(1e-3..0.999).contains(&u) {
                continue;
            }
            let slope = lagrange5_slope(&prof.xi[i - 2..=i + 2], &prof.u[i - 2..=i + 2]);
            let kinetic = u * (1.0 - u - d * prof.v[i]);
            worst = worst.max((c * slope + kinetic).abs() / kinetic.abs().max(c * slope.abs()));
        }
        assert!(worst <= 1e-4, "({d},{r},{c}) residual {worst}");
    }
}

#[test]
fn endpoint_values_separate() {
    let prof = front(2.0, 1.0, 1.0, 200.0);
    let n = prof.len();
    let k = n / 10;
    let right_max = prof.v[n - k..].iter().cloned().fold(0.0, f64::max);
    let left_min = prof.v[..k].iter().cloned().fold(1.0, f64::min);
    assert!(right_max < left_min);
}

#[test]
fn xi_range_grows_logarithmically_with_horizon() {
    let (r, c) = (1.0, 1.0);
    let short = front(2.0, r, c, 200.0);
    let long = front(2.0, r, c, 800.0);
    let gain = long.xi[long.len() - 1] - short.xi[short.len() - 1];
    let expected = c / r * 4f64.ln();
    assert!(gain > 0.0);
    assert!((gain / expected - 1.0).abs() < 0.3, "gain {gain} vs {expected}");
}

#[test]
fn speed_residual_shrinks_with_horizon() {
    let a = speed_residual(&front(2.0, 1.0, 1.0, 200.0)).unwrap();
    let b = speed_residual(&front(2.0, 1.0, 1.0, 400.0)).unwrap();
    assert!(b < a && a < 1e-2, "{a} {b}");
}

#[test]
fn effective_diffusion_increasing_for_homogeneous_front() {
    let prof = front(2.0, 1.0, 0.5, 200.0);
    let curve = effective_diffusion(&prof);
    assert!(curve.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1));
}

#[test]
fn effective_diffusion_depends_on_speed() {
    let curves: Vec<Vec<(f64, f64)>> = [2.0, 0.5, 0.2]
        .iter()
        .map(|&c| effective_diffusion(&front(2.0, 1.0, c, default_y_max(c))))
        .collect();
    let at = |curve: &[(f64, f64)], v: f64| {
        let i = curve.partition_point(|p| p.0 < v).clamp(1, curve.len() - 1);
        let (a, b) = (curve[i - 1], curve[i]);
        a.1 + (b.1 - a.1) * (v - a.0) / (b.0 - a.0)
    };
    for i in 0..3 {
        for j in i + 1..3 {
            let sup = (1..100)
                .map(|k| k as f64 / 100.0)
                .map(|v| (at(&curves[i], v) - at(&curves[j], v)).abs())
                .fold(0.0, f64::max);
            assert!(sup > 0.05, "curves {i} and {j} differ by {sup}");
        }
    }
}
