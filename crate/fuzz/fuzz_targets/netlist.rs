#![no_main]

use convdiag::circuit::{assemble, parse_netlist, serialize_netlist};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|bytes: &[u8]| {
    let Ok(text) = std::str::from_utf8(bytes) else { return };
    let Ok(netlist) = parse_netlist(text) else { return };
    // NaN parameters cannot compare equal; validation rejects them anyway.
    if netlist.validate().is_err() {
        return;
    }
    let again = parse_netlist(&serialize_netlist(&netlist).unwrap()).unwrap();
    assert_eq!(netlist, again);
    let _ = assemble(&netlist);
});
