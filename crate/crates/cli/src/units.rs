//! Quantities written as `"<number> <unit>"` with SI prefixes.

/// Physical dimension expected by a configuration key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Frequency,
    Time,
    Length,
    Mass,
    Temperature,
    Rate,
    Dimensionless,
}

impl Dim {
    fn bases(self) -> &'static [(&'static str, f64)] {
        match self {
            Dim::Frequency => &[("Hz", 1.0)],
            Dim::Time => &[("s", 1.0)],
            Dim::Length => &[("m", 1.0)],
            Dim::Mass => &[("g", 1e-3)],
            Dim::Temperature => &[("K", 1.0)],
            Dim::Rate => &[("/s", 1.0), ("1/s", 1.0), ("s^-1", 1.0), ("Hz", 1.0), ("cps", 1.0)],
            Dim::Dimensionless => &[],
        }
    }

    pub fn si_unit(self) -> &'static str {
        match self {
            Dim::Frequency => "Hz",
            Dim::Time => "s",
            Dim::Length => "m",
            Dim::Mass => "kg",
            Dim::Temperature => "K",
            Dim::Rate => "/s",
            Dim::Dimensionless => "",
        }
    }
}

fn prefix(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "f" => 1e-15,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" | "µ" | "μ" => 1e-6,
        "m" => 1e-3,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        _ => return None,
    })
}

/// Parses `"190 kHz"`, `"2e-15 kg"` or a bare number (already SI).
pub fn parse_quantity(text: &str, dim: Dim) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| c.is_whitespace() || (is_unit_start(c) && !is_exponent(text, i)))
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| format!("cannot read a number from {text:?}"))?;
    let unit = unit.trim();
    let scale = unit_scale(unit, dim)?;
    let v = value * scale;
    if !v.is_finite() {
        return Err(format!("{text:?} is not finite"));
    }
    Ok(v)
}

fn is_unit_start(c: char) -> bool {
    c.is_alphabetic() || c == '/' || c == 'µ' || c == 'μ'
}

// `e`/`E` directly followed by a digit or sign belongs to the mantissa.
fn is_exponent(text: &str, i: usize) -> bool {
    let b = text.as_bytes();
    (b[i] == b'e' || b[i] == b'E')
        && i > 0
        && b[i - 1].is_ascii_digit() | (b[i - 1] == b'.')
        && b.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == b'-' || *n == b'+')
}

fn unit_scale(unit: &str, dim: Dim) -> Result<f64, String> {
    if unit.is_empty() {
        return Ok(1.0);
    }
    for &(base, factor) in dim.bases() {
        if let Some(p) = unit.strip_suffix(base) {
            if let Some(s) = prefix(p) {
                return Ok(s * factor);
            }
        }
    }
    if dim == Dim::Dimensionless {
        Err(format!("unexpected unit {unit:?} on a dimensionless value"))
    } else {
        Err(format!("unit {unit:?} is not a {dim:?} unit (expected e.g. {:?})", dim.si_unit()))
    }
}
