//! Strict unit-suffixed flag values. Every dimensioned flag must carry its
//! unit; a bare number is rejected so that `--hold 3` can never silently mean
//! three seconds.

/// Suffix and its power of ten.
type Table = &'static [(&'static str, i32)];

const VOLTAGE: Table = &[("V", 0), ("mV", -3), ("uV", -6), ("µV", -6)];
const TIME: Table = &[("s", 0), ("ms", -3), ("us", -6), ("µs", -6)];
const FREQUENCY: Table = &[("Hz", 0), ("mHz", -3), ("kHz", 3)];
const CURRENT: Table = &[("A", 0), ("mA", -3), ("uA", -6), ("µA", -6), ("nA", -9), ("pA", -12)];
const CONDUCTANCE: Table = &[("S", 0), ("mS", -3), ("uS", -6), ("µS", -6), ("nS", -9), ("pS", -12)];
const RATE: Table = &[("V/s", 0), ("mV/s", -3)];

fn parse(s: &str, table: Table, what: &str) -> Result<f64, String> {
    let s = s.trim();
    let mut units: Vec<&(&str, i32)> = table.iter().collect();
    units.sort_by_key(|u| std::cmp::Reverse(u.0.len()));
    for (suffix, scale) in units {
        if let Some(num) = s.strip_suffix(suffix) {
            let num = num.trim_end();
            if num.is_empty() {
                continue;
            }
            if let Ok(x) = num.parse::<f64>() {
                if !x.is_finite() {
                    return Err(format!("{what} `{s}` is not finite"));
                }
                // Shift the decimal exponent so `0.8nA` parses to exactly 0.8e-9.
                return Ok(match num.split_once(['e', 'E']) {
                    Some((m, e)) => e.parse::<i32>().ok().and_then(|e| format!("{m}e{}", e + scale).parse().ok()),
                    None => format!("{num}e{scale}").parse().ok(),
                }
                .unwrap_or(x * 10f64.powi(*scale)));
            }
        }
    }
    let names: Vec<&str> = table.iter().map(|u| u.0).collect();
    if s.parse::<f64>().is_ok() {
        Err(format!("{what} `{s}` needs a unit suffix ({})", names.join(", ")))
    } else {
        Err(format!("cannot read `{s}` as a {what} (expected a number followed by one of {})", names.join(", ")))
    }
}

pub fn voltage(s: &str) -> Result<f64, String> {
    parse(s, VOLTAGE, "voltage")
}

pub fn time(s: &str) -> Result<f64, String> {
    parse(s, TIME, "duration")
}

pub fn frequency(s: &str) -> Result<f64, String> {
    parse(s, FREQUENCY, "frequency")
}

pub fn current(s: &str) -> Result<f64, String> {
    parse(s, CURRENT, "current")
}

pub fn conductance(s: &str) -> Result<f64, String> {
    parse(s, CONDUCTANCE, "conductance")
}

pub fn sweep_rate(s: &str) -> Result<f64, String> {
    parse(s, RATE, "sweep rate")
}

/// `gamma,delta,hold`, e.g. `70mV,50mV,3ms`.
pub fn encoding_cell(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected gamma,delta,hold (e.g. 70mV,50mV,3ms), got `{s}`"));
    }
    Ok((voltage(parts[0])?, voltage(parts[1])?, time(parts[2])?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes_scale() {
        assert_eq!(voltage("170mV").unwrap(), 0.17);
        assert_eq!(voltage("0.2V").unwrap(), 0.2);
        assert_eq!(voltage("-70mV").unwrap(), -0.07);
        assert_eq!(time("5ms").unwrap(), 5e-3);
        assert_eq!(time("1e-3s").unwrap(), 1e-3);
        assert_eq!(frequency("200mHz").unwrap(), 0.2);
        assert_eq!(frequency("10kHz").unwrap(), 1e4);
        assert_eq!(current("0.8nA").unwrap(), 0.8e-9);
        assert_eq!(sweep_rate("2mV/s").unwrap(), 2e-3);
        assert_eq!(conductance("1.5nS").unwrap(), 1.5e-9);
    }

    #[test]
    fn bare_and_wrong_units_are_rejected() {
        assert!(voltage("170").unwrap_err().contains("needs a unit"));
        assert!(time("3").is_err());
        assert!(voltage("5ms").is_err());
        assert!(time("5mV").is_err());
        assert!(voltage("mV").is_err());
        assert!(voltage("infmV").is_err());
        assert!(frequency("5 Hz").is_ok());
    }

    #[test]
    fn encoding_cells_parse() {
        assert_eq!(encoding_cell("70mV,50mV,3ms").unwrap(), (0.07, 0.05, 3e-3));
        assert!(encoding_cell("70mV,50mV").is_err());
        assert!(encoding_cell("70,50,3").is_err());
    }
}
