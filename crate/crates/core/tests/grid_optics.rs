use num_complex::Complex64 as C64;
use omx_core::estimators::barycenter;
use omx_core::grid_optics::*;
use omx_core::OmxError;

fn waist() -> BeamParams {
    BeamParams::new(1.0, 100.0, 0.0).unwrap()
}

#[test]
fn tem00_at_waist_is_real_unit_norm_and_peaked() {
    let g = PixelGrid::square(256, 0.05).unwrap();
    let f = tem00(&waist(), &g).unwrap();
    assert!((f.energy() - 1.0).abs() < 1e-12);
    assert!(f.amp.iter().all(|a| a.im == 0.0));
    let peak = f.amp.iter().map(|a| a.re).fold(f64::MIN, f64::max);
    for (i, j) in [(127, 127), (128, 127), (127, 128), (128, 128)] {
        assert_eq!(f.amp[g.index(i, j)].re, peak);
    }
}

#[test]
fn tem00_profile_drops_by_one_over_e_at_the_waist() {
    let g = PixelGrid::square(257, 0.05).unwrap();
    let f = tem00(&waist(), &g).unwrap();
    let c = f.amp[g.index(128, 128)].re;
    let at_w = f.amp[g.index(148, 128)].re;
    assert!((g.x(148) - 1.0).abs() < 1e-12);
    assert!((at_w / c - (-1.0f64).exp()).abs() < 1e-6);
}

#[test]
fn rayleigh_identities() {
    let p0 = waist();
    let zr = p0.rayleigh_range();
    assert!((zr - 50.0).abs() < 1e-12);
    let p = BeamParams::new(1.0, 100.0, zr).unwrap();
    assert!((p.width() - 2f64.sqrt()).abs() < 1e-12);
    assert!((p.gouy_phase() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    assert!((p.curvature_radius() - 2.0 * zr).abs() < 1e-9);
}

#[test]
fn beam_params_reject_non_finite() {
    assert!(BeamParams::new(f64::NAN, 1.0, 0.0).is_err());
    assert!(BeamParams::new(1.0, -1.0, 0.0).is_err());
    assert!(BeamParams::new(1.0, 1.0, f64::INFINITY).is_err());
}

#[test]
fn tem00_off_focus_carries_curvature_and_gouy_phase() {
    let g = PixelGrid::square(128, 1.0 / 8.0).unwrap();
    let p = BeamParams::new(1.0, 20.0, 5.0).unwrap();
    let f = tem00(&p, &g).unwrap();
    assert!((f.energy() - 1.0).abs() < 1e-10);
    let idx = g.index(70, 64);
    let (x, y) = g.coord(idx);
    let want = -p.k * (x * x + y * y) / (2.0 * p.curvature_radius()) - p.gouy_phase();
    let got = f.amp[idx].arg();
    let d = (got - want).rem_euclid(2.0 * std::f64::consts::PI);
    assert!(d < 1e-9 || (2.0 * std::f64::consts::PI - d) < 1e-9);
}

#[test]
fn energy_is_one_on_various_adequate_grids() {
    for (n, pitch, z) in [(96, 0.125, 0.0), (200, 0.05, 3.0), (64, 0.1, 0.0)] {
        let p = BeamParams::new(1.0, 10.0, z).unwrap();
        let g = PixelGrid::square(n, pitch).unwrap();
        assert!(g.nx as f64 * g.pitch >= 6.0 * p.width());
        assert!((tem00(&p, &g).unwrap().energy() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn zero_shift_is_identity() {
    let g = PixelGrid::square(64, 0.125).unwrap();
    let f = tem00(&waist(), &g).unwrap();
    assert_eq!(shifted_field(&f, 0.0, (1.0, 0.0)).unwrap(), f);
}

#[test]
fn integer_pixel_shift_is_an_exact_roll() {
    let g = PixelGrid::square(64, 0.125).unwrap();
    let f = ComplexField::from_fn(g, |x, y| C64::new((3.0 * x).sin() + y, x * y));
    let s = shifted_field(&f, g.pitch, (1.0, 0.0)).unwrap();
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            assert_eq!(s.amp[g.index(i, j)], f.amp[g.index(i + 1, j)]);
        }
    }
    let s = shifted_field(&f, -2.0 * g.pitch, (0.0, 1.0)).unwrap();
    for j in 2..g.ny {
        for i in 0..g.nx {
            assert_eq!(s.amp[g.index(i, j)], f.amp[g.index(i, j - 2)]);
        }
    }
}

#[test]
fn shifted_gaussian_barycenter_moves_against_the_shift() {
    let g = PixelGrid::square(256, 1.0 / 16.0).unwrap();
    let f = tem00(&waist(), &g).unwrap();
    let dir = (0.6, 0.8);
    let s = shifted_field(&f, 0.1, dir).unwrap();
    let (bx, by) = barycenter(&s.intensity()).unwrap();
    assert!((bx + 0.1 * dir.0).abs() < 1e-3);
    assert!((by + 0.1 * dir.1).abs() < 1e-3);
    assert!((s.energy() - 1.0).abs() < 1e-3);
}

#[test]
fn shift_beyond_budget_is_rejected() {
    let g = PixelGrid::square(32, 0.125).unwrap();
    let f = ComplexField::zeros(g);
    assert!(matches!(
        shifted_field(&f, 2.0, (1.0, 0.0)),
        Err(OmxError::ShiftOutOfRange { .. })
    ));
    assert!(shifted_field(&f, 0.1, (1.0, 1.0)).is_err());
}

#[test]
fn first_order_mode_matches_tem00_at_zero_and_at_center() {
    let g = PixelGrid::square(65, 0.125).unwrap();
    let p = waist();
    let t = tem00(&p, &g).unwrap();
    assert_eq!(first_order_displaced(&p, &g, 0.0, (1.0, 0.0)).unwrap(), t);
    let c = g.index(32, 32);
    for xi in [0.01, 0.3, -0.7] {
        let f = first_order_displaced(&p, &g, xi, (1.0, 0.0)).unwrap();
        assert!((f.amp[c] - t.amp[c]).norm() < 1e-12);
    }
}

#[test]
fn first_order_residual_is_quadratic_in_xi() {
    let g = PixelGrid::square(256, 1.0 / 16.0).unwrap();
    let p = waist();
    let t = tem00(&p, &g).unwrap();
    let resid = |xi: f64| {
        let a = shifted_field(&t, -xi, (1.0, 0.0)).unwrap();
        let b = first_order_displaced(&p, &g, xi, (1.0, 0.0)).unwrap();
        let d: f64 = a.amp.iter().zip(&b.amp).map(|(x, y)| (x - y).norm_sqr()).sum();
        (d * g.area()).sqrt()
    };
    let (r1, r2) = (resid(0.16), resid(0.08));
    let ratio = r1 / r2;
    assert!((ratio - 4.0).abs() < 0.8, "ratio {ratio}");
}

#[test]
fn derivative_mode_of_displaced_gaussian_gives_waist() {
    let g = PixelGrid::square(256, 1.0 / 16.0).unwrap();
    let t = tem00(&waist(), &g).unwrap();
    let (v, a) = derivative_mode(|xi| shifted_field(&t, xi, (1.0, 0.0)), 1e-3).unwrap();
    assert!((a - 1.0).abs() < 5e-3, "a = {a}");
    assert!(v.sum().abs() * g.area() < 1e-10);
    assert!((v.energy() - 1.0).abs() < 1e-12);
    let v00 = analytic_v00(&g, 1.0).unwrap();
    let overlap = inner(&v, &v00).unwrap().abs();
    assert!(overlap >= 0.9999, "overlap {overlap}");
}

#[test]
fn waist_oracle_by_fine_quadrature() {
    // ∫(∂x f)² for unit-norm f = √(2/π)/w·e^{−r²/w²}, by midpoint rule on a fine grid.
    let w = 1.0;
    let h = 1.0 / 200.0;
    let n = 2000;
    let mut s = 0.0;
    for j in 0..n {
        let y = (j as f64 + 0.5 - n as f64 / 2.0) * h;
        for i in 0..n {
            let x = (i as f64 + 0.5 - n as f64 / 2.0) * h;
            let f = (2.0 / std::f64::consts::PI).sqrt() / w * (-(x * x + y * y) / (w * w)).exp();
            let dfx = -2.0 * x / (w * w) * f;
            s += dfx * dfx;
        }
    }
    s *= h * h;
    let a_oracle = 1.0 / s.sqrt();
    assert!((a_oracle - w).abs() < 1e-6);
    let g = PixelGrid::square(256, 1.0 / 16.0).unwrap();
    let t = tem00(&waist(), &g).unwrap();
    let (_, a) = derivative_mode(|xi| shifted_field(&t, xi, (1.0, 0.0)), 1e-3).unwrap();
    assert!((a - a_oracle).abs() / a_oracle < 5e-3);
}

#[test]
fn derivative_mode_is_grid_convergent() {
    let a_at = |n: usize, pitch: f64| {
        let g = PixelGrid::square(n, pitch).unwrap();
        let t = tem00(&waist(), &g).unwrap();
        derivative_mode(|xi| shifted_field(&t, xi, (1.0, 0.0)), 1e-3).unwrap().1
    };
    // Bilinear resampling biases a by O(pitch²): 0.2% at w0/16, 0.05% at w0/32.
    let a16 = a_at(256, 1.0 / 16.0);
    let a32 = a_at(512, 1.0 / 32.0);
    let a64 = a_at(512, 1.0 / 64.0);
    assert!((a16 - 1.0).abs() < 5e-3);
    assert!((a32 - a64).abs() / a64 < 1e-3, "{a32} vs {a64}");
    let r = (a16 - a32) / (a32 - a64);
    assert!((r - 4.0).abs() < 0.5, "convergence ratio {r}");
}

#[test]
fn insensitive_system_is_an_error() {
    let g = PixelGrid::square(16, 0.1).unwrap();
    let f = ComplexField::from_fn(g, |_, _| C64::new(1.0, 0.0));
    assert!(matches!(
        derivative_mode(|_| Ok(f.clone()), 1e-3),
        Err(OmxError::InsensitiveConfiguration)
    ));
    assert!(derivative_mode(|_| Ok(f.clone()), 0.0).is_err());
}

#[test]
fn analytic_v00_is_odd_and_unit_norm() {
    let g = PixelGrid::square(128, 1.0 / 16.0).unwrap();
    let v = analytic_v00(&g, 1.0).unwrap();
    assert!((v.energy() - 1.0).abs() < 1e-12);
    for j in 0..g.ny {
        for i in 0..g.nx {
            assert_eq!(v.val[g.index(i, j)], -v.val[g.index(g.nx - 1 - i, j)]);
        }
    }
}

#[test]
fn flipped_mode_overlap_is_sqrt_two_over_pi() {
    let g = PixelGrid::square(512, 1.0 / 32.0).unwrap();
    let v = analytic_v00(&g, 1.0).unwrap();
    let t = tem00(&waist(), &g).unwrap().abs();
    let flipped = RealField::from_fn(g, |x, _| x.signum())
        .val
        .iter()
        .zip(&t.val)
        .map(|(s, a)| s * a)
        .collect();
    let flipped = normalize(&RealField::new(g, flipped).unwrap()).unwrap();
    let ov = inner(&v, &flipped).unwrap();
    let want = (2.0 / std::f64::consts::PI).sqrt();
    assert!((ov - want).abs() / want < 0.01, "{ov}");
}

#[test]
fn inner_basics() {
    let g = PixelGrid::square(8, 0.5).unwrap();
    let z = ComplexField::zeros(g);
    assert_eq!(inner(&z, &z).unwrap(), C64::new(0.0, 0.0));
    assert!(normalize(&z).is_err());
    let f = ComplexField::from_fn(g, |x, y| C64::new(x, y));
    assert!(inner(&f, &f).unwrap().re > 0.0);
    let n = normalize(&f).unwrap();
    assert!((inner(&n, &n).unwrap().re - 1.0).abs() < 1e-12);
    let other = ComplexField::zeros(PixelGrid::square(4, 0.5).unwrap());
    assert!(inner(&f, &other).is_err());
}
