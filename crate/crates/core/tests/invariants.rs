use std::sync::Arc;

use carnot_campanato::hpoly::apply_xi;
use carnot_campanato::{
    basis_indices, best_poly_values, build_nodes, Campanato, CampanatoParams, CarnotGroup, Domain, HPolynomial,
    HomDistance, MultiIndex, Poly, QuadScheme,
};
use proptest::prelude::*;

fn group(key: &str) -> Arc<CarnotGroup> {
    Arc::new(CarnotGroup::builtin(key).unwrap())
}

fn coords(n: usize, s: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-s..s, n)
}

fn objective(g: &CarnotGroup, fit: &carnot_campanato::ApproxResult, ns: &carnot_campanato::NodeSet, vals: &[f64]) -> f64 {
    let mut buf = vec![0.0; g.dim()];
    ns.iter()
        .zip(vals)
        .map(|((x, w), u)| w * (u - fit.eval_with(g, x, &mut buf)).abs().powf(fit.p))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engel_law_is_associative(a in coords(4, 3.0), b in coords(4, 3.0), c in coords(4, 3.0)) {
        let g = group("engel");
        let l = g.multiply(&g.multiply(&a, &b).unwrap().0, &c).unwrap().0;
        let r = g.multiply(&a, &g.multiply(&b, &c).unwrap().0).unwrap().0;
        for (x, y) in l.iter().zip(&r) {
            prop_assert!((x - y).abs() <= 1e-11 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn dilation_is_an_automorphism(a in coords(5, 2.0), b in coords(5, 2.0), lam in 0.05f64..4.0) {
        let g = group("heisenberg:2");
        let l = g.dilate(lam, &g.multiply(&a, &b).unwrap().0).unwrap().0;
        let r = g.multiply(&g.dilate(lam, &a).unwrap().0, &g.dilate(lam, &b).unwrap().0).unwrap().0;
        for (x, y) in l.iter().zip(&r) {
            prop_assert!((x - y).abs() <= 1e-11 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn fields_match_flow_differences(
        coeffs in prop::collection::vec(-2.0f64..2.0, 13),
        x in coords(3, 1.0),
        i in 0usize..3,
    ) {
        let g = group("heisenberg:1");
        let idx = basis_indices(&g, 3);
        let poly = Poly::from_terms(3, idx.iter().cloned().zip(coeffs.iter().copied()));
        let xp = apply_xi(&HPolynomial::absolute(poly.clone()), i, &g).expand(&g);
        let t = 1e-4;
        let fd = (poly.eval_f64(&g.flow(&x, i, t).0) - poly.eval_f64(&g.flow(&x, i, -t).0)) / (2.0 * t);
        let exact = xp.eval_f64(&x);
        prop_assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()), "fd {fd} vs {exact}");
    }

    #[test]
    fn residual_shrinks_on_sub_balls(x0 in coords(3, 0.4), shrink in 0.2f64..0.95, p in 1.0f64..3.0) {
        let g = group("heisenberg:1");
        let m = HomDistance::default_for(g.clone());
        let dom = Domain::cube(3, 2.0);
        let ns = build_nodes(&dom, &m, &x0, 0.6, &QuadScheme::Grid { res: 12 }).unwrap();
        let u = |x: &[f64]| (x[0] - 0.3 * x[2]).abs().sqrt() + x[1] * x[1];
        let vals = ns.values(u).unwrap();
        let fit = best_poly_values(&g, &vals, &ns, &x0, 0.6, 1, p).unwrap();
        let sub = ns.filter(|x| m.distance(&x0, x).unwrap() < 0.6 * shrink);
        prop_assume!(sub.len() > 10);
        let sub_vals = sub.values(u).unwrap();
        let sub_fit = best_poly_values(&g, &sub_vals, &sub, &x0, 0.6 * shrink, 1, p).unwrap();
        prop_assert!(sub_fit.residual <= fit.residual * (1.0 + 1e-6) + 1e-12);
    }

    #[test]
    fn best_fit_is_a_local_minimum(
        x0 in coords(2, 0.5),
        p in 1.2f64..3.0,
        dir in prop::collection::vec(-1.0f64..1.0, 6),
        eps in 1e-3f64..1e-1,
    ) {
        let g = group("euclidean:2");
        let m = HomDistance::default_for(g.clone());
        let dom = Domain::cube(2, 1.0);
        let ns = build_nodes(&dom, &m, &x0, 0.5, &QuadScheme::Grid { res: 40 }).unwrap();
        let vals = ns.values(|x: &[f64]| (3.0 * x[0]).sin() * x[1].exp()).unwrap();
        let fit = best_poly_values(&g, &vals, &ns, &x0, 0.5, 2, p).unwrap();
        let base = objective(&g, &fit, &ns, &vals);
        let mut moved = fit.clone();
        for (c, d) in moved.scaled.iter_mut().zip(&dir) {
            *c += eps * d;
        }
        prop_assert!(objective(&g, &moved, &ns, &vals) >= base * (1.0 - 1e-9));
    }

    #[test]
    fn bracket_scales_under_dilation(x0 in coords(3, 0.5), r in 0.1f64..0.5, s in 0.3f64..3.0) {
        // u_s = u o delta_{1/s} has bracket s^{(Q - lambda)/p} times that of u
        let g = group("heisenberg:1");
        let m = HomDistance::default_for(g.clone());
        let dom = Domain::cube(3, 50.0);
        let params = CampanatoParams::new(1, 2.0, 6.5).unwrap();
        let scheme = QuadScheme::Grid { res: 14 };
        let u = |x: &[f64]| (x[0] * x[1]).abs().sqrt() + x[2].cos();
        let us = move |x: &[f64]| {
            let y = [x[0] / s, x[1] / s, x[2] / (s * s)];
            (y[0] * y[1]).abs().sqrt() + y[2].cos()
        };
        let e = Campanato::new(&m, &dom, &u, params, scheme);
        let es = Campanato::new(&m, &dom, &us, params, scheme);
        let b = e.bracket(&e.local(&x0, r).unwrap().fit);
        let x0s = g.dilate(s, &x0).unwrap().0;
        let bs = es.bracket(&es.local(&x0s, s * r).unwrap().fit);
        let want = b * s.powf((4.0 - 6.5) / 2.0);
        prop_assert!((bs - want).abs() <= 1e-6 * want.abs() + 1e-12, "{bs} vs {want}");
    }
}

#[test]
fn polynomials_have_zero_bracket() {
    let g = group("engel");
    let m = HomDistance::default_for(g.clone());
    let dom = Domain::unit_ball(4);
    let idx = basis_indices(&g, 2);
    let poly = Poly::from_terms(4, idx.iter().enumerate().map(|(t, j)| (j.clone(), 1.0 / (t as f64 + 1.0))));
    let u = move |x: &[f64]| poly.eval_f64(x);
    let e = Campanato::new(&m, &dom, &u, CampanatoParams::new(2, 2.0, 9.0).unwrap(), QuadScheme::Grid { res: 9 });
    let fit = e.local(&[0.1, 0.0, -0.05, 0.02], 0.7).unwrap().fit;
    assert!(e.bracket(&fit) < 1e-9);
    assert_eq!(fit.indices[0], MultiIndex::zeros(4));
}
