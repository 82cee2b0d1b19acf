//! Number formatting, CSV and JSON fragments shared by the commands.

use kemeny_core::{HittingEstimate, IntegralOutcome, Verdict};
use serde_json::{json, Value};

/// `v` with 12 significant digits.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    if v == 0.0 {
        return "0".into();
    }
    // Decide the layout from the exponent after rounding.
    let sci = format!("{v:.11e}");
    let exp: i32 = sci[sci.find('e').map_or(0, |i| i + 1)..].parse().unwrap_or(0);
    if (-5..12).contains(&exp) {
        format!("{:.*}", (11 - exp) as usize, v)
    } else {
        sci
    }
}

/// Short form for error estimates and ratios.
pub fn short(v: f64) -> String {
    format!("{v:.2e}")
}

pub struct Csv {
    out: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut out = header.join(",");
        out.push_str("\r\n");
        Csv { out }
    }

    pub fn row(&mut self, cells: &[String]) {
        let quoted: Vec<String> = cells.iter().map(|c| quote(c)).collect();
        self.out.push_str(&quoted.join(","));
        self.out.push_str("\r\n");
    }

    pub fn finish(self) -> String {
        self.out
    }
}

fn quote(cell: &str) -> String {
    if cell.contains([',', '"', '\r', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

pub fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Converged => "converged",
        Verdict::Divergent => "divergent",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn integral_json(out: &IntegralOutcome) -> Value {
    json!({
        "value": out.value(),
        "status": out.status,
        "error_estimate": out.error_estimate,
        "lower_bound": out.lower_bound,
        "cutoffs_used": out.cutoffs_used,
        "diagnostics": out.diagnostics.iter().map(|d| json!({
            "cutoff": d.cutoff,
            "log_increment": d.log_increment,
            "ratio": d.ratio,
        })).collect::<Vec<_>>(),
    })
}

pub fn estimate_json(e: &HittingEstimate) -> Value {
    json!({
        "mean": e.mean,
        "stderr": e.stderr,
        "n_censored": e.n_censored,
        "n_paths": e.n_paths,
        "censored_fraction": e.censored_fraction(),
        "valid": e.is_valid(),
    })
}

/// `value  status  (error ...)` for text output.
pub fn integral_text(out: &IntegralOutcome) -> String {
    let mut s = format!("{}  {}", num(out.value()), verdict_word(out.status));
    if out.is_converged() {
        s.push_str(&format!("  (error {})", short(out.error_estimate)));
    } else if out.lower_bound {
        s.push_str("  (partial value at last cutoff)");
    }
    s
}

/// Cutoff table, one indented line per truncation point.
pub fn diagnostics_text(out: &IntegralOutcome, indent: &str) -> String {
    let mut s = String::new();
    for d in &out.diagnostics {
        s.push_str(&format!(
            "{indent}R = {:<10} increment {:<10} ratio {}\n",
            num_compact(d.cutoff),
            short(d.log_increment.exp()),
            d.ratio.map_or("-".into(), |r| {
                if r.abs() < 1e4 {
                    format!("{r:.4}")
                } else {
                    short(r)
                }
            }),
        ));
    }
    s
}

fn num_compact(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        short(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(1.0), "1.00000000000");
        assert_eq!(num(2.464696351237), "2.46469635124");
        assert_eq!(num(-0.000123456789012345), "-0.000123456789012");
        assert_eq!(num(1234.5), "1234.50000000");
        assert_eq!(num(6.02e23), "6.02000000000e23");
        assert_eq!(num(9.99999999999951), "10.0000000000");
        assert_eq!(num(0.0), "0");
    }

    #[test]
    fn csv_quotes_when_needed() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&["1".into(), "x, \"y\"".into()]);
        assert_eq!(c.finish(), "a,b\r\n1,\"x, \"\"y\"\"\"\r\n");
    }
}
