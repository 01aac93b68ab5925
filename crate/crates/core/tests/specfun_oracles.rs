mod common;

use hypergam::specfun::{appell_f1, gauss_2f1};
use num_rational::BigRational;
use num_traits::Zero;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn gauss_series_against_exact_rationals() {
    let cases = [
        ((19, 2), (1, 1), (3, 1), (3, 5)),
        ((2, 1), (1, 1), (7, 2), (3, 10)),
        ((3, 2), (5, 2), (4, 1), (3, 4)),
        ((1, 2), (1, 2), (3, 2), (1, 4)),
        ((49, 2), (1, 1), (4, 1), (9, 10)),
        ((7, 3), (2, 5), (11, 4), (-1, 2)),
        ((5, 2), (-3, 1), (3, 2), (2, 3)),
    ];
    for ((an, ad), (bn, bd), (cn, cd), (xn, xd)) in cases {
        let exact = common::exact_2f1(&common::q(an, ad), &common::q(bn, bd), &common::q(cn, cd), &common::q(xn, xd));
        let got = gauss_2f1(an as f64 / ad as f64, bn as f64 / bd as f64, cn as f64 / cd as f64, xn as f64 / xd as f64);
        assert!(got.is_ok());
        assert!(rel(got.value(), exact) < 1e-10, "{an}/{ad} {bn}/{bd} {cn}/{cd} {xn}/{xd}: {} vs {exact}", got.value());
    }
}

#[test]
fn gauss_identities() {
    assert_eq!(gauss_2f1(2.5_f64, 1.0, 4.5, 0.0).value(), 1.0);
    assert!(rel(gauss_2f1(1.0_f64, 1.0, 2.0, 0.5).value(), 2.0 * 2f64.ln()) < 1e-12);
    // arcsin(√x)/√(x(1-x)) = ₂F₁(1, 1; 3/2; x)
    let x = 0.3_f64;
    let expect = x.sqrt().asin() / (x * (1.0 - x)).sqrt();
    assert!(rel(gauss_2f1(1.0, 1.0, 1.5, x).value(), expect) < 1e-12);
}

#[test]
fn appell_against_double_series() {
    let cases = [
        (1.5, 2.0, 0.7, 3.5, 0.6, 0.3),
        (2.0, 1.0, 3.5, 5.0, 0.45, 0.8),
        (3.0, 0.5, 1.5, 4.25, 0.9, 0.2),
        (0.75, 2.25, 1.0, 2.0, 0.1, 0.5),
    ];
    for (a, b1, b2, c, x, y) in cases {
        let got = appell_f1(a, b1, b2, c, x, y);
        let expect = common::appell_series(a, b1, b2, c, x, y);
        assert!(got.is_ok());
        assert!(rel(got.value(), expect) < 1e-8, "{a} {b1} {b2} {c} {x} {y}: {} vs {expect}", got.value());
    }
}

#[test]
fn appell_reductions() {
    for (a, b1, b2, c, x) in [(1.5, 2.0, 0.7, 3.5, 0.6), (4.0, 1.0, 2.5, 6.5, 0.85), (0.5, 3.0, 1.0, 2.0, -0.4)] {
        let f = appell_f1(a, b1, b2, c, x, 0.0_f64).value();
        assert!(rel(f, gauss_2f1(a, b1, c, x).value()) < 1e-6);
        let f = appell_f1(a, b1, b2, c, x, x).value();
        assert!(rel(f, gauss_2f1(a, b1 + b2, c, x).value()) < 1e-6);
    }
}

#[test]
fn exact_oracle_is_exact_on_terminating_series() {
    // ₂F₁(-2, 1; 1; x) = (1 - x)²
    let v = common::exact_2f1(&common::q(-2, 1), &common::q(1, 1), &common::q(1, 1), &common::q(1, 3));
    assert!((v - 4.0 / 9.0).abs() < 1e-15);
    assert!(BigRational::zero() < common::q(1, 3));
}
