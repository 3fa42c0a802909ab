//! Text formatting and CSV helpers shared by the exporters.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::Result;

/// Formats `x` with `digits` significant digits, `%g` style.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// CSV float formatting (9 significant digits).
pub fn fmt_csv(x: f64) -> String {
    fmt_sig(x, 9)
}

/// Dense row-major dump without a header.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut w: W) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_sig(m[(i, j)], 17)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_matrix_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_matrix_csv(m, std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.0, 9), "0");
        assert_eq!(fmt_sig(9.63, 9), "9.63");
        assert_eq!(fmt_sig(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(fmt_sig(-123456.789, 4), "-1.235e5");
        assert_eq!(fmt_sig(1e-7, 9), "1e-7");
        assert_eq!(fmt_sig(2.0 / 3.0 * 1e-3, 3), "0.000667");
        assert_eq!(fmt_sig(f64::NAN, 9), "NaN");
        assert_eq!(fmt_sig(100.0, 3), "100");
        assert_eq!(fmt_sig(999.96, 4), "1000");
    }

    #[test]
    fn round_trips_at_17_digits() {
        for &x in &[std::f64::consts::PI, -1.2345678901234567e-200, 6.02e23] {
            let s = fmt_sig(x, 17);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }
}
