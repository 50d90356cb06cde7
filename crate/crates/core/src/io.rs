//! Number formatting and CSV helpers for bit-stable exports.

use std::fmt::Write as _;

/// C-style `%.12e`: twelve fractional digits and a signed exponent of at least two digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Accumulates rows under a fixed header. Fields are written verbatim.
#[derive(Clone, Debug)]
pub struct CsvBuilder {
    columns: usize,
    buf: String,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self { columns: header.len(), buf }
    }

    pub fn row<I, S>(&mut self, fields: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut n = 0;
        for (i, f) in fields.into_iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{}", f.as_ref());
            n += 1;
        }
        debug_assert_eq!(n, self.columns, "csv row width");
        self.buf.push('\n');
        self
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Splits a CSV export into header and rows. No quoting support; none of the
/// exports here need it.
pub fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.is_empty());
    let header = lines.next().map(|h| h.split(',').map(str::to_owned).collect()).unwrap_or_default();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf() {
        assert_eq!(fmt_num(0.0), "0.000000000000e+00");
        assert_eq!(fmt_num(1.0), "1.000000000000e+00");
        assert_eq!(fmt_num(-0.5), "-5.000000000000e-01");
        assert_eq!(fmt_num(123456.0), "1.234560000000e+05");
        assert_eq!(fmt_num(1e-123), "1.000000000000e-123");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }

    #[test]
    fn round_trips_through_parse() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-7, 6.02e23] {
            let back: f64 = fmt_num(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn builder_and_parser_agree() {
        let mut b = CsvBuilder::new(&["a", "b"]);
        b.row(["1", "2"]).row(["3", "4"]);
        let text = b.finish();
        assert_eq!(text, "a,b\n1,2\n3,4\n");
        let (h, rows) = parse_csv(&text);
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows[1], vec!["3", "4"]);
    }
}
