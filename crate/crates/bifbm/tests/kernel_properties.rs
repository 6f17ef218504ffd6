//! Property tests for the kernel algebra: symmetry, diagonal laws, the
//! closed-form decomposition identities, and parameter classification,
//! all under randomized parameters and time pairs.

use bifbm::{classify_params, increment_variance, KernelSpec, ParamVerdict, RegionLabel};
use proptest::prelude::*;

/// Relative agreement scale: deviations are measured against
/// max(1, |lhs|, |rhs|) so one tolerance covers tiny and huge values.
fn rel_gap(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

/// Agreement scale for identities whose two routes cancel large powers:
/// both sides round at the size of their biggest intermediate term, so
/// that magnitude joins the denominator. A wrong formula still shows up
/// as an O(1) relative gap on this scale.
fn split_gap(lhs: f64, rhs: f64, magnitude: f64) -> f64 {
    (lhs - rhs).abs() / magnitude.max(lhs.abs()).max(rhs.abs()).max(1.0)
}

fn time() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        // Log-uniform times cover the scales where powf loses digits.
        (-6.0..6.0f64).prop_map(|e| 10f64.powf(e)),
        0.0..100.0f64,
    ]
}

fn hurst() -> impl Strategy<Value = f64> {
    (1e-3..4.0f64).prop_filter("H must be positive", |h| *h > 0.0)
}

fn k_param() -> impl Strategy<Value = f64> {
    1e-3..2.0f64
}

fn gamma() -> impl Strategy<Value = f64> {
    1e-3..3.0f64
}

fn any_kernel() -> impl Strategy<Value = KernelSpec> {
    let leaf = prop_oneof![
        (hurst(), k_param()).prop_map(|(h, k)| KernelSpec::bif_bm(h, k).unwrap()),
        (1e-3..1.0f64).prop_map(|h| KernelSpec::fbm(h).unwrap()),
        gamma().prop_map(|g| KernelSpec::c_gamma(g).unwrap()),
        gamma().prop_map(|g| KernelSpec::q_gamma(g).unwrap()),
        Just(KernelSpec::min_kernel()),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), 0.1..4.0f64)
                .prop_map(|(base, theta)| KernelSpec::time_change(base, theta).unwrap()),
            (inner.clone(), 0.0..10.0f64)
                .prop_map(|(base, w)| KernelSpec::scale(base, w).unwrap()),
            (inner.clone(), inner).prop_map(|(a, b)| KernelSpec::sum(a, b)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// eval must not depend on argument order, bit for bit: it canonizes
    /// the pair before touching any arithmetic.
    #[test]
    fn eval_is_bit_exact_symmetric(spec in any_kernel(), s in time(), t in time()) {
        let a = spec.eval(s, t);
        let b = spec.eval(t, s);
        prop_assert!(a.to_bits() == b.to_bits(), "{spec}: eval({s},{t})={a} vs eval({t},{s})={b}");
    }

    /// Variance along the diagonal is the pure power law t^(2HK).
    #[test]
    fn bifbm_diagonal_is_a_power_law(h in hurst(), k in k_param(), t in time()) {
        let spec = KernelSpec::bif_bm(h, k).unwrap();
        let expect = if t == 0.0 { 0.0 } else { t.powf(2.0 * h * k) };
        prop_assert!(rel_gap(spec.eval(t, t), expect) <= 1e-12);
    }

    /// The two-component split of the bifractional kernel is exact
    /// algebra for every H, K > 0, PSD or not.
    #[test]
    fn bifbm_split_matches_everywhere(
        h in hurst(),
        k in k_param(),
        s in time(),
        t in time(),
    ) {
        let direct = KernelSpec::bif_bm(h, k).unwrap();
        let split = KernelSpec::bifbm_split(h, k).unwrap();
        let magnitude = s.max(t).powf(2.0 * h * k);
        prop_assert!(
            split_gap(direct.eval(s, t), split.eval(s, t), magnitude) <= 1e-13,
            "H={h}, K={k}, s={s}, t={t}"
        );
    }

    /// Scaled bifractional plus the smooth remainder reproduces fbm of
    /// index HK whenever that index stays in (0, 1].
    #[test]
    fn lei_nualart_split_matches_fbm(
        h in hurst(),
        u in 1e-3..1.0f64,
        s in time(),
        t in time(),
    ) {
        // Choose K inside (0, 1] with HK <= 1 by construction.
        let k = u * (1.0 / h).min(1.0);
        prop_assume!(k > 0.0);
        let fbm = KernelSpec::fbm(h * k).unwrap();
        let split = KernelSpec::lei_nualart_split(h, k).unwrap();
        let magnitude = s.max(t).powf(2.0 * h * k);
        prop_assert!(
            split_gap(fbm.eval(s, t), split.eval(s, t), magnitude) <= 1e-13,
            "H={h}, K={k}, s={s}, t={t}"
        );
    }

    /// fbm = (Q_2H + min^2H) / 2 on the rough side H <= 1/2.
    #[test]
    fn fbm_split_matches_fbm(h in 1e-3..0.5f64, s in time(), t in time()) {
        let fbm = KernelSpec::fbm(h).unwrap();
        let split = KernelSpec::fbm_split(h).unwrap();
        let magnitude = s.max(t).powf(2.0 * h);
        prop_assert!(
            split_gap(fbm.eval(s, t), split.eval(s, t), magnitude) <= 1e-13,
            "H={h}, s={s}, t={t}"
        );
    }

    /// Increment variance is symmetric and zero at zero lag.
    #[test]
    fn increment_variance_is_a_squared_distance(
        spec in any_kernel(),
        s in time(),
        t in time(),
    ) {
        let st = increment_variance(&spec, s, t);
        let ts = increment_variance(&spec, t, s);
        prop_assert!(st.to_bits() == ts.to_bits());
        let zero = increment_variance(&spec, s, s);
        prop_assert!(zero.abs() <= 1e-9 * spec.eval(s, s).abs().max(1.0));
    }

    /// Classification is total on the positive quadrant and consistent:
    /// the theorem region and the necessary-condition violations never
    /// overlap, and every theorem-region point satisfies its definition.
    #[test]
    fn classification_is_total_and_coherent(h in hurst(), k in k_param()) {
        let ParamVerdict { label, .. } = classify_params(h, k).unwrap();
        match label {
            RegionLabel::TheoremRegion => {
                prop_assert!(k <= 1.0 && 2.0 * h * k <= 1.0);
            }
            RegionLabel::NecessaryViolated => {
                prop_assert!(k > 1.0 / h);
                prop_assert!(!(k <= 1.0 && 2.0 * h * k <= 1.0));
            }
            RegionLabel::OtherKnownRegion | RegionLabel::Unknown => {
                prop_assert!(!(k <= 1.0 && 2.0 * h * k <= 1.0));
                prop_assert!(k <= 1.0 / h + 1e-12);
            }
        }
    }
}
