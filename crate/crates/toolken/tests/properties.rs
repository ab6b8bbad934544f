//! Property tests for the exact-arithmetic literal layer and the corpus
//! serialization round trip.

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use toolken::corpus::{load_corpus, save_corpus};
use toolken::literal::NumberLiteral;
use toolken::synth::{gen_reasoning_corpus, GenConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Rendering a literal and parsing it back preserves the exact value.
    #[test]
    fn literal_roundtrip_integers(n in any::<i64>()) {
        let lit = NumberLiteral::from_int(n);
        let back = NumberLiteral::parse(&lit.to_string()).unwrap();
        prop_assert!(back.value_eq(&lit));
    }

    #[test]
    fn literal_roundtrip_rationals(numer in -10_000i64..10_000, denom in 1i64..10_000) {
        let value = BigRational::new(BigInt::from(numer), BigInt::from(denom));
        let lit = NumberLiteral::from_value(value.clone());
        let back = NumberLiteral::parse(&lit.to_string()).unwrap();
        prop_assert_eq!(back.value(), &value);
    }

    /// Surfaces normalize: parsing any rendered literal twice is stable.
    #[test]
    fn literal_surface_is_canonical(numer in -10_000i64..10_000, denom in 1i64..10_000) {
        let lit = NumberLiteral::from_value(BigRational::new(
            BigInt::from(numer),
            BigInt::from(denom),
        ));
        let once = NumberLiteral::parse(lit.surface()).unwrap();
        let twice = NumberLiteral::parse(once.surface()).unwrap();
        prop_assert_eq!(once.surface(), twice.surface());
    }

    /// Garbage never parses into a literal silently.
    #[test]
    fn literal_rejects_nonnumeric(s in "[a-zA-Z<>()=,']{1,8}") {
        prop_assert!(NumberLiteral::parse(&s).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Save → load over generated corpora is the identity, any seed.
    #[test]
    fn corpus_roundtrip(seed in 0u64..10_000) {
        let config = GenConfig { seed, train_size: 12, test_size: 3, ..GenConfig::default() };
        let data = gen_reasoning_corpus(&config).unwrap();
        let mut buf = Vec::new();
        save_corpus(&mut buf, &data.train, &data.registry, &data.vocab).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(tmp.path(), &buf).unwrap();
        let back = load_corpus(tmp.path(), &data.registry, &data.vocab).unwrap();
        prop_assert_eq!(back, data.train);
    }
}
