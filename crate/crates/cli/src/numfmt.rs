//! `%g`-style number formatting.

/// Digits for human-readable tables.
pub const HUMAN: usize = 6;
/// Digits for CSV and JSON files; enough to round-trip an f64.
pub const MACHINE: usize = 17;

/// Formats `x` with `sig` significant digits, fixed or scientific like C's
/// `%.{sig}g`, trailing zeros removed.
pub fn g(x: f64, sig: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= sig as i32 {
        let mantissa = trim(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn human(x: f64) -> String {
    g(x, HUMAN)
}

pub fn machine(x: f64) -> String {
    g(x, MACHINE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(g(0.21110255, 6), "0.211103");
        assert_eq!(g(7.0, 6), "7");
        assert_eq!(g(-1.0, 6), "-1");
        assert_eq!(g(1234567.0, 6), "1.23457e+06");
        assert_eq!(g(0.0001, 6), "0.0001");
        assert_eq!(g(0.00001234, 6), "1.234e-05");
        assert_eq!(g(999999.5, 6), "1e+06");
        assert_eq!(g(-220.0, 6), "-220");
        assert_eq!(g(f64::NAN, 6), "nan");
    }

    #[test]
    fn machine_digits_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02214076e23,
            std::f64::consts::PI,
        ] {
            assert_eq!(machine(x).parse::<f64>().unwrap(), x);
        }
    }
}
