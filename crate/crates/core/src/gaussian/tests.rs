use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn c(re: f64, im: f64) -> C64 {
    C64::from_f64(re, im)
}

pub(crate) fn random_term(rng: &mut ChaCha8Rng, d: usize, poly_degree: usize) -> GaussianTerm<f64> {
    let mut g = [[0.0; 3]; 3];
    for row in g.iter_mut().take(d) {
        for x in row.iter_mut().take(d) {
            *x = rng.gen_range(-1.0..1.0);
        }
    }
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let s: f64 = (0..d).map(|k| g[i][k] * g[j][k]).sum();
            a[i * d + j] = 0.3 * s + if i == j { 0.6 } else { 0.0 };
            b[i * d + j] = rng.gen_range(-1.0..1.0);
        }
    }
    let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let amp = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let t = GaussianTerm::wavepacket(d, amp, &q, &p, width_from_parts(d, &a, &b)).unwrap();
    if poly_degree == 0 {
        return t;
    }
    let mut terms = Vec::new();
    for _ in 0..4 {
        let mut e = [0u8; MAX_DIM];
        let mut left = rng.gen_range(0..=poly_degree);
        for slot in e.iter_mut().take(d) {
            let k = rng.gen_range(0..=left);
            *slot = k as u8;
            left -= k;
        }
        terms.push((e, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
    }
    let center: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    t.with_poly(Poly::from_terms(terms), &center).unwrap()
}

/// Tensor trapezoid rule on `[-half, half]^d`; spectrally accurate for
/// smooth, rapidly decaying integrands.
fn trapezoid(d: usize, half: f64, h: f64, f: impl Fn(&[f64]) -> C64) -> C64 {
    let n = (2.0 * half / h).round() as i64;
    let mut s = C64::zero();
    let mut x = vec![0.0; d];
    let mut idx = vec![0i64; d];
    loop {
        for j in 0..d {
            x[j] = -half + idx[j] as f64 * h;
        }
        s += f(&x);
        let mut j = 0;
        loop {
            idx[j] += 1;
            if idx[j] <= n {
                break;
            }
            idx[j] = 0;
            j += 1;
            if j == d {
                return s.scale_f(h.powi(d as i32));
            }
        }
    }
}

fn quad_inner(u: &GaussianTerm<f64>, v: &GaussianTerm<f64>, half: f64, h: f64) -> C64 {
    trapezoid(u.dim(), half, h, |x| u.eval(x).conj() * v.eval(x))
}

#[test]
fn unit_gaussian_norm_is_sqrt_pi() {
    let u = GaussianTerm::wavepacket(1, C64::one(), &[0.7], &[0.0], width_from_parts(1, &[1.0], &[0.0])).unwrap();
    let n = inner(&u, &u).unwrap();
    assert!((n.re - std::f64::consts::PI.sqrt()).abs() < 1e-14 && n.im.abs() < 1e-15);
}

#[test]
fn overlaps_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (d, cases, half, h) in [(1usize, 20, 16.0, 0.05), (2, 6, 14.0, 0.1)] {
        for _ in 0..cases {
            let u = random_term(&mut rng, d, 3);
            let v = random_term(&mut rng, d, 3);
            let exact = inner(&u, &v).unwrap();
            let quad = quad_inner(&u, &v, half, h);
            assert!((exact - quad).abs() <= 1e-10 * quad.abs().max(1e-300), "d={d}: {exact:?} vs {quad:?}");
        }
    }
}

#[test]
fn sesquilinear_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in 1..=3 {
        let u = random_term(&mut rng, d, 2);
        let v = random_term(&mut rng, d, 2);
        let a = inner(&u, &v).unwrap();
        let b = inner(&v, &u).unwrap();
        assert!((a - b.conj()).abs() < 1e-12 * a.abs());
        let s = c(0.3, -2.0);
        let l = inner(&u.scale(s), &v).unwrap();
        assert!((l - s.conj() * a).abs() < 1e-12 * l.abs());
    }
}

#[test]
fn product_is_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in 1..=3 {
        let u = random_term(&mut rng, d, 2);
        let v = random_term(&mut rng, d, 2);
        let w = multiply(&u, &v).unwrap();
        let w2 = multiply(&v, &u).unwrap();
        w.check_valid().unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let want = u.eval(&x) * v.eval(&x);
            assert!((w.eval(&x) - want).abs() <= 1e-12 * want.abs().max(1e-12));
            assert!((w2.eval(&x) - want).abs() <= 1e-12 * want.abs().max(1e-12));
        }
    }
    let g =
        |a: f64| GaussianTerm::wavepacket(1, C64::one(), &[0.0], &[0.0], width_from_parts(1, &[a], &[0.0])).unwrap();
    let w = multiply(&g(0.4), &g(1.1)).unwrap();
    assert!((w.width()[0][0].re - 1.5).abs() < 1e-15);
}

#[test]
fn free_evolution_identity_unitarity_and_parseval() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in 1..=3 {
        for deg in [0, 2] {
            let u = random_term(&mut rng, d, deg);
            let v = random_term(&mut rng, d, deg);
            assert_eq!(free_evolve(&u, 0.0, 1.0).unwrap(), u);
            let nu = u.norm_sqr().unwrap();
            let uv = inner(&u, &v).unwrap();
            for t in [0.1, 1.0, 5.0] {
                for sign in [1.0, -1.0] {
                    let ut = free_evolve(&u, t, sign).unwrap();
                    let vt = free_evolve(&v, t, sign).unwrap();
                    ut.check_valid().unwrap();
                    assert!((ut.norm_sqr().unwrap() - nu).abs() <= 1e-12 * nu, "d={d} deg={deg} t={t}");
                    assert!((inner(&ut, &vt).unwrap() - uv).abs() <= 1e-12 * nu.max(uv.abs()));
                }
            }
        }
    }
}

#[test]
fn forward_then_backward_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for d in 1..=3 {
        let u = random_term(&mut rng, d, 2);
        let back = free_evolve(&free_evolve(&u, 2.5, 1.0).unwrap(), 2.5, -1.0).unwrap();
        let diff = inner(&u, &u).unwrap() - inner(&u, &back).unwrap().scale_f(2.0) + inner(&back, &back).unwrap();
        assert!(diff.re.abs() < 1e-11 * u.norm_sqr().unwrap());
    }
}

#[test]
fn free_evolution_solves_the_free_equation() {
    // ∂_t w = iσΔw checked by centered differences in t and x
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for d in 1..=2 {
        let u = random_term(&mut rng, d, 2);
        for sign in [1.0, -1.0] {
            let t = 0.6;
            let dt = 1e-4;
            let dx = 1e-3;
            let wp = free_evolve(&u, t + dt, sign).unwrap();
            let wm = free_evolve(&u, t - dt, sign).unwrap();
            let w = free_evolve(&u, t, sign).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dtw = (wp.eval(&x) - wm.eval(&x)).scale_f(0.5 / dt);
            let mut lap = C64::zero();
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += dx;
                xm[j] -= dx;
                lap += (w.eval(&xp) + w.eval(&xm) - w.eval(&x).scale_f(2.0)).scale_f(1.0 / (dx * dx));
            }
            let rhs = lap.mul_i().scale_f(sign);
            assert!((dtw - rhs).abs() < 1e-5 * (1.0 + rhs.abs()), "{dtw:?} vs {rhs:?}");
        }
    }
}

#[test]
fn free_evolution_width_closed_form_1d() {
    let u = GaussianTerm::wavepacket(1, C64::one(), &[0.0], &[0.0], width_from_parts(1, &[1.0], &[0.0])).unwrap();
    let ut = free_evolve(&u, 0.5, 1.0).unwrap();
    // Q_t = 1 / (1 + i)
    let want = c(1.0, 1.0).inv();
    assert!((ut.width()[0][0] - want).abs() < 1e-15);
    assert!((ut.eval(&[0.0]) - c(1.0, 1.0).sqrt().inv()).abs() < 1e-15);
}

/// Sum over perfect matchings of `idx` of products of covariance entries.
fn wick(cov: &Mat3<f64>, idx: &[usize]) -> C64 {
    if idx.is_empty() {
        return C64::one();
    }
    if idx.len() % 2 == 1 {
        return C64::zero();
    }
    let first = idx[0];
    let mut s = C64::zero();
    for k in 1..idx.len() {
        let rest: Vec<usize> = idx[1..].iter().enumerate().filter(|&(j, _)| j + 1 != k).map(|(_, &x)| x).collect();
        s += cov[first][idx[k]] * wick(cov, &rest);
    }
    s
}

#[test]
fn moments_match_wick_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..5 {
        let mut cov: Mat3<f64> = [[C64::zero(); 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                cov[i][j] = z;
                cov[j][i] = z;
            }
        }
        let m = Moments::new(&cov, [4, 4, 4]);
        for a in 0..=4u8 {
            for b in 0..=(4 - a) {
                for cc in 0..=(4 - a - b) {
                    let mut idx = Vec::new();
                    idx.extend(std::iter::repeat_n(0, a as usize));
                    idx.extend(std::iter::repeat_n(1, b as usize));
                    idx.extend(std::iter::repeat_n(2, cc as usize));
                    let want = wick(&cov, &idx);
                    assert!((m.get([a, b, cc]) - want).abs() < 1e-13 * (1.0 + want.abs()));
                }
            }
        }
    }
}

#[test]
fn dual_derivative_of_norm_matches_finite_differences() {
    let v0 = [1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let u = gamma(1, &v0).unwrap();
    let lifted = dual_lift(&u, 0).unwrap();
    let n = inner(&lifted, &lifted).unwrap();
    let h = 1e-5;
    let norm = |v: &[f64]| gamma(1, v).unwrap().norm_sqr().unwrap();
    let mut vp = v0;
    let mut vm = v0;
    vp[0] += h;
    vm[0] -= h;
    let fd = (norm(&vp) - norm(&vm)) / (2.0 * h);
    assert!((n.re.d[0] - 2.0 * std::f64::consts::PI.sqrt()).abs() < 1e-13);
    assert!((n.re.d[0] - fd).abs() < 1e-6 * fd.abs());
    // translation invariance of the norm
    let lq = dual_lift(&u, Layout::new(1).center).unwrap();
    assert!(inner(&lq, &lq).unwrap().re.d[0].abs() < 1e-13);
    // a constant term carries no derivative
    let w: GaussianTerm<Dual<1>> = lift(&gamma(1, &[0.5, 0.2, 1.3, 0.4, 0.3, -0.2]).unwrap());
    assert_eq!(inner(&w, &w).unwrap().re.d[0], 0.0);
}

#[test]
fn dual_parts_propagate_through_the_algebra() {
    // d/dv of ⟨w, e^{-itΔ} (V · e^{itΔ} γ(v))⟩ against finite differences
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for d in [1usize, 2] {
        let lay = Layout::new(d);
        let w = random_term(&mut rng, d, 0);
        let pot = random_term(&mut rng, d, 0);
        let mut v = params_of(&random_term(&mut rng, d, 0)).unwrap();
        v[lay.center] += 0.1;
        let f = |x: &[f64]| -> C64 {
            let g = gamma(d, x).unwrap();
            let hg = free_evolve(&multiply(&pot, &free_evolve(&g, 0.8, 1.0).unwrap()).unwrap(), 0.8, -1.0).unwrap();
            inner(&w, &hg).unwrap()
        };
        for i in 0..lay.len {
            let dv: Vec<Dual<1>> = v
                .iter()
                .enumerate()
                .map(|(k, &x)| if k == i { Dual::variable(x, 0) } else { Dual::constant(x) })
                .collect();
            let g = gamma(d, &dv).unwrap();
            let lp: GaussianTerm<Dual<1>> = lift(&pot);
            let hg = free_evolve(&multiply(&lp, &free_evolve(&g, 0.8, 1.0).unwrap()).unwrap(), 0.8, -1.0).unwrap();
            let got = inner(&lift(&w), &hg).unwrap();
            let h = 1e-6;
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[i] += h;
            vm[i] -= h;
            let fd = (f(&vp) - f(&vm)).scale_f(0.5 / h);
            let err = ((got.re.d[0] - fd.re).powi(2) + (got.im.d[0] - fd.im).powi(2)).sqrt();
            assert!(err < 1e-6 * (1.0 + fd.abs()), "d={d} param {i}: {err}");
        }
    }
}

#[test]
fn derivative_polynomials_match_dual_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for d in 1..=3 {
        let lay = Layout::new(d);
        let v = params_of(&random_term(&mut rng, d, 0)).unwrap();
        let w = random_term(&mut rng, d, 0);
        let (base, polys) = derivative_polys(d, &v).unwrap();
        let q = &v[lay.center..lay.center + d];
        let gram = poly_gram(&w, &[Poly::one()], &w.center(), &base, &polys, q).unwrap();
        for i in 0..lay.len {
            let dv: Vec<Dual<1>> = v
                .iter()
                .enumerate()
                .map(|(k, &x)| if k == i { Dual::variable(x, 0) } else { Dual::constant(x) })
                .collect();
            let got = inner(&lift(&w), &gamma(d, &dv).unwrap()).unwrap();
            let want = gram[0][i];
            let direct = inner(&w, &base.clone().with_poly(polys[i].clone(), q).unwrap()).unwrap();
            assert!((c(got.re.d[0], got.im.d[0]) - want).abs() < 1e-12 * (1.0 + want.abs()), "d={d} i={i}");
            assert!((direct - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }
}

#[test]
fn parameters_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for d in 1..=3 {
        let u = random_term(&mut rng, d, 0);
        let v = params_of(&u).unwrap();
        assert_eq!(v.len(), param_count(d));
        let u2 = gamma(d, &v).unwrap();
        let v2 = params_of(&u2).unwrap();
        for (a, b) in v.iter().zip(&v2) {
            assert!((a - b).abs() < 1e-12);
        }
        for _ in 0..5 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert!((u.eval(&x) - u2.eval(&x)).abs() < 1e-12);
        }
    }
    assert_eq!(param_count(1), 6);
    assert_eq!(param_count(3), 20);
}

#[test]
fn serialization_round_trips_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let terms = vec![random_term(&mut rng, 2, 0), random_term(&mut rng, 2, 3)];
    let s = GaussianSum::from_terms(2, terms).unwrap();
    let json = serde_json::to_string(&s).unwrap();
    let back: GaussianSum<f64> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s);
}

#[test]
fn invalid_widths_are_rejected() {
    let w = width_from_parts(1, &[-0.1], &[0.0]);
    assert_eq!(GaussianTerm::wavepacket(1, C64::one(), &[0.0], &[0.0], w).unwrap_err(), Error::InvalidWidth);
    let w = width_from_parts(2, &[1.0, 2.0, 2.0, 1.0], &[0.0; 4]);
    assert!(GaussianTerm::wavepacket(2, C64::one(), &[0.0, 0.0], &[0.0, 0.0], w).is_err());
    assert!(gamma(1, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn parseval_under_free_evolution(seed in 0u64..10_000, d in 1usize..=3, t in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_term(&mut rng, d, 1);
            let v = random_term(&mut rng, d, 1);
            let uv = inner(&u, &v).unwrap();
            let scale = (u.norm_sqr().unwrap() * v.norm_sqr().unwrap()).sqrt();
            let sign = t.signum();
            let ut = free_evolve(&u, t.abs(), sign).unwrap();
            let vt = free_evolve(&v, t.abs(), sign).unwrap();
            prop_assert!(ut.check_valid().is_ok());
            prop_assert!((inner(&ut, &vt).unwrap() - uv).abs() <= 1e-12 * scale);
        }

        #[test]
        fn products_keep_positive_widths(seed in 0u64..10_000, d in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_term(&mut rng, d, 0);
            let v = free_evolve(&random_term(&mut rng, d, 0), 3.0, 1.0).unwrap();
            prop_assert!(multiply(&u, &v).unwrap().check_valid().is_ok());
        }

        #[test]
        fn norms_are_positive(seed in 0u64..10_000, d in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_term(&mut rng, d, 2);
            let n = inner(&u, &u).unwrap();
            prop_assert!(n.re > 0.0);
            prop_assert!(n.im.abs() <= 1e-12 * n.re);
        }
    }
}
