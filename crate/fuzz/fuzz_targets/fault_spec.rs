#![no_main]

use convdiag::circuit::FaultKind;
use convdiag_cli::parse_fault;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|bytes: &[u8]| {
    let Ok(text) = std::str::from_utf8(bytes) else { return };
    let Ok(fault) = parse_fault(text) else { return };
    assert!(!fault.component.is_empty());
    let shown = match fault.kind {
        FaultKind::JacobianSignFlip => format!("{}:flip", fault.component),
        FaultKind::JacobianScale { factor } => format!("{}:scale:{factor:e}", fault.component),
    };
    assert_eq!(parse_fault(&shown).unwrap(), fault);
});
