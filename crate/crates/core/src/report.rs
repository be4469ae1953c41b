//! Number formatting and CSV helpers shared by every writer.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Six significant digits, plain notation for moderate magnitudes.
pub fn fmt6(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    if !(-5..=15).contains(&exp) {
        return sci;
    }
    if exp > 5 {
        let unit = 10f64.powi(exp - 5);
        return format!("{:.0}", (v / unit).round() * unit);
    }
    let decimals = (5 - exp) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(1.0), "1");
        assert_eq!(fmt6(0.123456789), "0.123457");
        assert_eq!(fmt6(-11.57894736), "-11.5789");
        assert_eq!(fmt6(123456789.0), "123457000");
        assert_eq!(fmt6(9.9999996), "10");
        assert_eq!(fmt6(1.5e-9), "1.50000e-9");
        assert_eq!(fmt6(f64::NAN), "NaN");
    }
}
