//! Property tests across module boundaries.

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use qpf_core::dynamics::{
    circle_dist, lyapunov_exponent, projective_flow, rotation_number, verify_conjugacy,
    CompiledField, ConjugacyOptions, RotationOptions, Sl2Flow,
};
use qpf_core::homological::{
    dense_oracle_solve, lattice, solve_homological, HomologicalParams, ModeSystem,
};
use qpf_core::kamflow::{ChainElement, ConjugationChain};
use qpf_core::spectral::{FourierIndex, PhiFunction, TorusFunction};

const OMEGA: [f64; 2] = [1.0, 0.618_033_988_749_894_9];

fn majorant(f: &TorusFunction, s: f64, r: f64) -> f64 {
    f.modes()
        .map(|(i, c)| {
            c.norm() * (i.l.abs() as f64 * s + (i.k[0].abs() + i.k[1].abs()) as f64 * r).exp()
        })
        .sum()
}

fn real_function(terms: &[(i32, [i32; 2], f64, bool)]) -> TorusFunction {
    terms
        .iter()
        .fold(TorusFunction::zero(), |acc, &(l, k, a, sine)| {
            let t = if sine {
                TorusFunction::sin_mode(l, k, a)
            } else {
                TorusFunction::cos_mode(l, k, a)
            };
            &acc + &t
        })
}

fn torus_terms(
    l_max: i32,
    k_max: i32,
    n: usize,
) -> impl Strategy<Value = Vec<(i32, [i32; 2], f64, bool)>> {
    prop::collection::vec(
        (
            -l_max..=l_max,
            -k_max..=k_max,
            -k_max..=k_max,
            -1.0..1.0f64,
            any::<bool>(),
        )
            .prop_map(|(l, a, b, c, s)| (l, [a, b], c, s)),
        1..=n,
    )
}

fn phi_terms(k_max: i32, n: usize) -> impl Strategy<Value = Vec<(i32, [i32; 2], f64, bool)>> {
    prop::collection::vec(
        (-k_max..=k_max, 1..=k_max, -1.0..1.0f64, any::<bool>())
            .prop_map(|(a, b, c, s)| (0, [a, b], c, s)),
        1..=n,
    )
}

fn scaled(f: TorusFunction, s: f64, r: f64, size: f64) -> TorusFunction {
    let n = majorant(&f, s, r);
    if n == 0.0 {
        f
    } else {
        f.scale(size / n)
    }
}

/// Largest ‖g‖ for which |⟨k,ω⟩ + lρ|² > |l|(K−|l|)²‖g‖ on every mode.
fn dominance_limit(k: u32, rho: f64) -> f64 {
    let mut best = f64::INFINITY;
    for l in 1..k as i32 {
        let m = k as i32 - l;
        for kk in lattice(m as u32) {
            let d = kk[0] as f64 * OMEGA[0] + kk[1] as f64 * OMEGA[1] + l as f64 * rho;
            best = best.min(d * d / (l as f64 * (m * m) as f64));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dominance_keeps_neumann_contractive(
        k in 3u32..=8,
        rho in 0.0..1.0f64,
        t in 0.3..0.95f64,
        g_terms in phi_terms(3, 3),
        f_terms in torus_terms(4, 4, 6),
    ) {
        let (s, r, delta, sigma) = (1.0, 1.0, 0.5, 0.25);
        let limit = dominance_limit(k, rho);
        prop_assume!(limit > 1e-12);
        let g = scaled(real_function(&g_terms), 0.0, r, t * limit);
        let g = PhiFunction::from_torus(g).unwrap();
        prop_assume!(g.without_mean().norm(r) > 0.0);
        let f = scaled(real_function(&f_terms).without_theta_mean(), s, r, 1e-3);
        prop_assume!(!f.is_zero());
        let params = HomologicalParams {
            rho,
            omega: OMEGA,
            k,
            s,
            r,
            delta,
            sigma,
            gamma: 0.1,
            tau: 3.0,
            eta: None,
            eta_tilde: None,
            waive: true,
        };
        let sol = solve_homological(&f, &g, &params).unwrap();
        prop_assert!(sol.audit.dominance_ok);
        let g_var = g.without_mean();
        for l in (1..k as i32).flat_map(|l| [-l, l]) {
            let sys = ModeSystem::build(l, k, &g_var, rho + g.mean(), OMEGA, r - sigma);
            prop_assert!(sys.c_value() < 0.5, "l={l} C={}", sys.c_value());
            let rhs: Vec<Complex64> = sys.lattice.iter().map(|kk| f.coef(FourierIndex { l, k: *kk })).collect();
            let x = dense_oracle_solve(&sys, &rhs).unwrap();
            let scale = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (kk, v) in sys.lattice.iter().zip(&x) {
                let got = sol.h.coef(FourierIndex { l, k: *kk });
                prop_assert!((got - v).norm() <= 1e-10 * scale.max(f64::MIN_POSITIVE));
            }
        }
    }

    #[test]
    fn torus_function_json_roundtrip(terms in torus_terms(5, 5, 10), s in 0.0..3.0f64, r in 0.0..3.0f64) {
        let f = real_function(&terms).with_strips(s, r);
        let back = TorusFunction::from_json(&f.to_json()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn chain_roundtrip_and_inverse(
        h1 in phi_terms(3, 3),
        h2 in torus_terms(2, 2, 4),
        h3 in phi_terms(2, 2),
        x in 0.0..1.0f64,
        p0 in 0.0..1.0f64,
        p1 in 0.0..1.0f64,
    ) {
        let fiber = |t: &[(i32, [i32; 2], f64, bool)], size| {
            PhiFunction::from_torus(scaled(real_function(t), 0.0, 0.0, size)).unwrap()
        };
        let near = scaled(real_function(&h2), 0.0, 0.0, 0.01);
        let chain = ConjugationChain {
            elements: vec![
                ChainElement::FiberTranslation { h: fiber(&h1, 0.2) },
                ChainElement::NearIdentity { h: near },
                ChainElement::FiberTranslation { h: fiber(&h3, 0.1) },
            ],
        };
        let back = ConjugationChain::from_json(&chain.to_json()).unwrap();
        prop_assert_eq!(&back, &chain);
        let phi = [p0, p1];
        let y = chain.eval(x, phi);
        prop_assert!(circle_dist(chain.inverse_eval(y, phi), x) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn fiber_translation_removes_phase_forcing(rho in 0.05..0.95f64, terms in phi_terms(3, 3), size in 0.01..0.1f64) {
        let g = PhiFunction::from_torus(scaled(real_function(&terms), 0.0, 0.0, size)).unwrap().without_mean();
        prop_assume!(g.as_torus().abs_sum() > 0.0);
        let h = g.solve_constant_coefficient(OMEGA, 100).unwrap();
        let chain = ConjugationChain {
            elements: vec![ChainElement::FiberTranslation { h }],
        };
        let a = CompiledField::new(&(&TorusFunction::constant(rho) + g.as_torus()), OMEGA);
        let b = CompiledField::new(&TorusFunction::constant(rho), OMEGA);
        let opts = ConjugacyOptions {
            samples: 5,
            horizon: 10.0,
            ..ConjugacyOptions::default()
        };
        let rep = verify_conjugacy(&chain, &a, &b, &opts).unwrap();
        prop_assert!(rep.max_defect <= 1e-8, "{}", rep.max_defect);
        let rot = rotation_number(&a, &RotationOptions { horizon: 200.0, dt: 1e-3, starts: 3, ..RotationOptions::default() }).unwrap();
        prop_assert!((rot.rho - rho).abs() <= rot.error.max(1e-9));
    }

    #[test]
    fn elliptic_constant_rotation_number(nu in 0.2..1.0f64, a in -0.5..0.5f64, b in 0.3..2.0f64, flip in any::<bool>()) {
        // trace zero, a² + bc = −ν²: eigenvalues ±iν, lines turn at rate ν/π
        let b = if flip { -b } else { b };
        let c = -(nu * nu + a * a) / b;
        let flow = Sl2Flow::constant([[a, b], [c, -a]], OMEGA).unwrap();
        let field = projective_flow(&flow).unwrap();
        let rot = rotation_number(&field, &RotationOptions { horizon: 400.0, starts: 3, ..RotationOptions::default() }).unwrap();
        let want = -b.signum() * nu / PI;
        prop_assert!((rot.rho - want).abs() <= 10.0 * rot.error.max(1e-9), "{} vs {want} ± {}", rot.rho, rot.error);
    }

    #[test]
    fn hyperbolic_constant_lyapunov(lambda in 0.05..0.3f64, a in -0.3..0.3f64, b in 0.2..1.0f64) {
        // a² + bc = λ²; the transient decays like 1/T, which the half-horizon difference measures
        let c = (lambda * lambda - a * a) / b;
        let flow = Sl2Flow::constant([[a, b], [c, -a]], OMEGA).unwrap();
        let est = lyapunov_exponent(&flow, [0.0, 0.0], 2000.0, 1e-2).unwrap();
        prop_assert!((est.exponent - lambda).abs() <= 1.01 * est.error + 1e-9, "{} vs {lambda} ± {}", est.exponent, est.error);
    }
}
