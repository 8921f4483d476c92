#![no_main]

use convdiag::homotopy::parse_value_range;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|bytes: &[u8]| {
    let Ok(text) = std::str::from_utf8(bytes) else { return };
    let Ok(range) = parse_value_range(text) else { return };
    assert_eq!(parse_value_range(&range.to_string()).unwrap(), range);
    if range.count <= 10_000 {
        let values = range.values();
        assert_eq!(values.len(), range.count);
        assert!(values.iter().all(|v| v.is_finite()));
    }
});
