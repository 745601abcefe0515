//! parse(serialize(ast)) == ast over generated valid ASTs.

mod common;

use common::seqgen::generate;
use proptest::prelude::*;
use vsi_core::seq::{parse_str, serialize};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn parse_inverts_serialize(seed in any::<u64>()) {
        let ast = generate(seed);
        let text = serialize(&ast);
        let back = parse_str(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &ast, "{}", text);
        prop_assert_eq!(serialize(&back), text);
    }

    #[test]
    fn malformed_text_never_panics(seed in any::<u64>(), cut in 0.0..1.0f64, junk in "[{}();=:+*/#a-z0-9 \n-]{0,6}") {
        let text = serialize(&generate(seed));
        let chars: Vec<char> = text.chars().collect();
        let at = (cut * chars.len() as f64) as usize;
        let broken: String = chars[..at].iter().collect::<String>() + &junk + &chars[at..].iter().collect::<String>();
        let _ = parse_str(&broken);
        let _ = parse_str(&chars[..at].iter().collect::<String>());
    }
}
