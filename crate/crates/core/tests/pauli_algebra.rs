use hamid_core::pauli::{commutator, multiply, Phase, PauliString};
use nalgebra::DMatrix;
use num_complex::Complex;
use proptest::prelude::*;

fn word(max_n: usize) -> impl Strategy<Value = PauliString> {
    (1..=max_n).prop_flat_map(|n| word_on(n))
}

fn word_on(n: usize) -> impl Strategy<Value = PauliString> {
    (0..1u64 << n, 0..1u64 << n).prop_map(move |(x, z)| PauliString::new(n, x, z).unwrap())
}

fn triple(max_n: usize) -> impl Strategy<Value = (PauliString, PauliString, PauliString)> {
    (1..=max_n).prop_flat_map(|n| (word_on(n), word_on(n), word_on(n)))
}

fn close(a: &DMatrix<Complex<f64>>, b: &DMatrix<Complex<f64>>) -> bool {
    (a - b).iter().all(|z| z.norm() < 1e-12)
}

proptest! {
    #[test]
    fn product_is_associative((a, b, c) in triple(12)) {
        let (p1, ab) = multiply(&a, &b).unwrap();
        let (p2, left) = multiply(&ab, &c).unwrap();
        let (p3, bc) = multiply(&b, &c).unwrap();
        let (p4, right) = multiply(&a, &bc).unwrap();
        prop_assert_eq!(left, right);
        prop_assert_eq!(p1 * p2, p3 * p4);
    }

    #[test]
    fn word_squares_to_identity(a in word(20)) {
        let (phase, w) = multiply(&a, &a).unwrap();
        prop_assert_eq!(phase, Phase::ONE);
        prop_assert!(w.is_identity());
    }

    #[test]
    fn commutator_antisymmetric((a, b, _) in triple(16)) {
        let ab = commutator(&a, &b).unwrap();
        let ba = commutator(&b, &a).unwrap();
        prop_assert_eq!(ab.map(|(s, w)| (-s, w)), ba);
        prop_assert_eq!(ab.is_none(), a.commutes_with(&b));
    }

    #[test]
    fn product_matches_dense((a, b, _) in triple(5)) {
        let (phase, w) = multiply(&a, &b).unwrap();
        let lhs = a.to_dense::<f64>() * b.to_dense::<f64>();
        prop_assert!(close(&lhs, &(w.to_dense::<f64>() * phase.to_complex::<f64>())));
    }

    #[test]
    fn display_parse_round_trip(a in word(30)) {
        let back: PauliString = a.to_string().parse().unwrap();
        prop_assert_eq!(back, a);
        prop_assert_eq!(a.weight(), a.to_string().chars().filter(|c| *c != 'I').count());
    }
}

#[test]
fn mismatched_sizes_rejected() {
    let a: PauliString = "XY".parse().unwrap();
    let b: PauliString = "XYZ".parse().unwrap();
    assert!(multiply(&a, &b).is_err());
    assert!(commutator(&a, &b).is_err());
    assert!("XQ".parse::<PauliString>().is_err());
}
