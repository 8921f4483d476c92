//! `ID:flip` and `ID:scale:FACTOR` fault specs given on the command line.

use convdiag::circuit::FaultSpec;

use crate::CliError;

/// Splits at the last one or two colons, so component ids may themselves
/// contain colons.
pub fn parse_fault(text: &str) -> Result<FaultSpec, CliError> {
    let bad = |why: &str| CliError::Parse(format!("fault `{text}`: {why}"));
    if let Some(id) = text.strip_suffix(":flip") {
        if id.is_empty() {
            return Err(bad("missing component id"));
        }
        return Ok(FaultSpec::sign_flip(id));
    }
    let (head, factor) = text
        .rsplit_once(':')
        .ok_or_else(|| bad("expected ID:flip or ID:scale:FACTOR"))?;
    let id = head
        .strip_suffix(":scale")
        .ok_or_else(|| bad("expected ID:flip or ID:scale:FACTOR"))?;
    if id.is_empty() {
        return Err(bad("missing component id"));
    }
    let factor: f64 = factor.parse().map_err(|_| bad("factor is not a number"))?;
    if !factor.is_finite() {
        return Err(bad("factor must be finite"));
    }
    Ok(FaultSpec::scale(id, factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_kinds() {
        assert_eq!(
            parse_fault("D1.gmin:flip").unwrap(),
            FaultSpec::sign_flip("D1.gmin")
        );
        assert_eq!(
            parse_fault("D.L:scale:0.95").unwrap(),
            FaultSpec::scale("D.L", 0.95)
        );
        assert_eq!(
            parse_fault("a:b:flip").unwrap(),
            FaultSpec::sign_flip("a:b")
        );
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "",
            ":flip",
            "D1",
            "D1:scale",
            "D1:scale:x",
            "D1:scale:inf",
            ":scale:2",
            "D1:bump:2",
        ] {
            assert!(parse_fault(bad).is_err(), "{bad}");
        }
    }
}
