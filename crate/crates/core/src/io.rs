//! Plain-text spectrum files.
//!
//! Input files hold temperature in the first column and a desorption rate
//! or a surface flux in the second. Separators may be commas, whitespace or
//! both; lines starting with `#` are comments, and a single non-numeric
//! header line is accepted before the data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::domain::{MaterialParams, TestProtocol};
use crate::error::{Error, Result};
use crate::fit::{ExperimentalSpectrum, FitResult};
use crate::spectrum::DesorptionSpectrum;
use crate::units::{convert, Unit, UnitFamily, UnitSystem};

/// Meaning of the second column of an input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    /// Desorption rate ΔC.
    DeltaC,
    /// Outflow through one face J; converted with ΔC = 2J/L.
    Flux,
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deltac" | "rate" | "dc" => Ok(ValueKind::DeltaC),
            "flux" | "j" => Ok(ValueKind::Flux),
            other => Err(Error::InvalidParameter(format!("unknown column kind '{other}'"))),
        }
    }
}

/// Column units of a two-column file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnUnits {
    pub temperature: Unit,
    pub value: Unit,
}

impl FromStr for ColumnUnits {
    type Err = Error;

    /// Parses `"<temperature unit>,<value unit>"`, e.g. `C,wppm_s`.
    fn from_str(s: &str) -> Result<Self> {
        let (t, v) = s
            .split_once(',')
            .ok_or_else(|| Error::InvalidParameter(format!("expected '<temperature>,<value>' units, got '{s}'")))?;
        let units = ColumnUnits {
            temperature: t.parse()?,
            value: v.parse()?,
        };
        if units.temperature.family() != UnitFamily::Temperature {
            return Err(Error::InvalidParameter(format!("'{t}' is not a temperature unit")));
        }
        Ok(units)
    }
}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|f| !f.is_empty())
}

/// Parses numeric rows, returning `(line number, first, second)`.
fn parse_rows(text: &str) -> Result<Vec<(usize, f64, f64)>> {
    let mut rows = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = split_fields(line).collect();
        let first_is_number = fields.first().is_some_and(|f| f.parse::<f64>().is_ok());
        if !seen_content && !first_is_number {
            // header row
            seen_content = true;
            continue;
        }
        seen_content = true;
        if fields.len() < 2 {
            return Err(Error::Format(format!("line {line_no}: expected two columns, got '{line}'")));
        }
        let parse = |f: &str| -> Result<f64> {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::Format(format!("line {line_no}: '{f}' is not a number")))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("line {line_no}: non-finite value '{f}'")));
            }
            Ok(v)
        };
        rows.push((line_no, parse(fields[0])?, parse(fields[1])?));
    }
    Ok(rows)
}

/// Sorts by temperature and averages rows that share one.
fn sort_and_merge(mut rows: Vec<(f64, f64)>) -> (Vec<f64>, Vec<f64>) {
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ts: Vec<f64> = Vec::with_capacity(rows.len());
    let mut vs: Vec<f64> = Vec::with_capacity(rows.len());
    let mut counts: Vec<usize> = Vec::with_capacity(rows.len());
    for (t, v) in rows {
        if ts.last() == Some(&t) {
            *vs.last_mut().expect("parallel vectors") += v;
            *counts.last_mut().expect("parallel vectors") += 1;
        } else {
            ts.push(t);
            vs.push(v);
            counts.push(1);
        }
    }
    for (v, n) in vs.iter_mut().zip(counts) {
        *v /= n as f64;
    }
    (ts, vs)
}

/// Parses an experimental spectrum from text, converting to K and
/// mol/(m³·s). Flux input is turned into ΔC = 2J/L with the protocol's
/// thickness, which assumes both faces desorb alike.
pub fn parse_experiment(
    text: &str,
    kind: ValueKind,
    units: ColumnUnits,
    material: &MaterialParams,
    protocol: &TestProtocol,
) -> Result<ExperimentalSpectrum> {
    let expected = match kind {
        ValueKind::DeltaC => UnitFamily::Rate,
        ValueKind::Flux => UnitFamily::Flux,
    };
    if units.value.family() != expected {
        return Err(Error::InvalidParameter(format!(
            "unit {} cannot describe a {kind:?} column",
            units.value
        )));
    }
    let rows = parse_rows(text)?;
    if rows.len() < 4 {
        return Err(Error::Format(format!("need at least 4 data rows, found {}", rows.len())));
    }
    let converted = rows
        .into_iter()
        .map(|(_, t, v)| {
            let t = convert(t, units.temperature, Unit::Kelvin, material)?;
            let v = match kind {
                ValueKind::DeltaC => convert(v, units.value, Unit::MolPerM3S, material)?,
                ValueKind::Flux => 2.0 * convert(v, units.value, Unit::MolPerM2S, material)? / protocol.thickness,
            };
            Ok((t, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let (temperature, rate) = sort_and_merge(converted);
    if temperature.len() < 4 {
        return Err(Error::Format(format!(
            "need at least 4 distinct temperatures, found {}",
            temperature.len()
        )));
    }
    ExperimentalSpectrum::new(temperature, rate, None)
}

pub fn load_experiment(
    path: impl AsRef<Path>,
    kind: ValueKind,
    units: ColumnUnits,
    material: &MaterialParams,
    protocol: &TestProtocol,
) -> Result<ExperimentalSpectrum> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut spec = parse_experiment(&text, kind, units, material, protocol)?;
    spec.source = Some(path.display().to_string());
    Ok(spec)
}

/// Scientific notation with 15 significant digits.
fn num(v: f64) -> String {
    format!("{v:.14e}")
}

fn render_csv(header: &[String], columns: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    let rows = columns.first().map_or(0, Vec::len);
    for k in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| num(c[k])).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn convert_all(values: &[f64], to: Unit, from: Unit, material: &MaterialParams) -> Result<Vec<f64>> {
    values.iter().map(|&v| convert(v, from, to, material)).collect()
}

/// CSV text for a simulated spectrum: temperature, total, lattice and
/// per-trap rates, then the one-face flux.
pub fn spectrum_csv(spec: &DesorptionSpectrum, units: &UnitSystem, material: &MaterialParams) -> Result<String> {
    units.validate()?;
    let rate = |v: &[f64]| convert_all(v, units.rate, Unit::MolPerM3S, material);
    let mut header = vec![
        format!("T [{}]", units.temperature),
        format!("deltaC_total [{}]", units.rate),
        format!("deltaC_CL [{}]", units.rate),
    ];
    let mut columns = vec![
        convert_all(&spec.temperature, units.temperature, Unit::Kelvin, material)?,
        rate(&spec.total)?,
        rate(&spec.lattice)?,
    ];
    for (i, tr) in spec.trapped.iter().enumerate() {
        header.push(format!("deltaC_CT{} [{}]", i + 1, units.rate));
        columns.push(rate(tr)?);
    }
    header.push(format!("flux [{}]", units.flux));
    columns.push(convert_all(&spec.flux, units.flux, Unit::MolPerM2S, material)?);
    Ok(render_csv(&header, &columns))
}

pub fn export_spectrum(
    spec: &DesorptionSpectrum,
    path: impl AsRef<Path>,
    units: &UnitSystem,
    material: &MaterialParams,
) -> Result<()> {
    write_text(path.as_ref(), &spectrum_csv(spec, units, material)?)
}

pub fn export_experiment(
    spec: &ExperimentalSpectrum,
    path: impl AsRef<Path>,
    units: &UnitSystem,
    material: &MaterialParams,
) -> Result<()> {
    units.validate()?;
    let header = [format!("T [{}]", units.temperature), format!("deltaC [{}]", units.rate)];
    let columns = [
        convert_all(&spec.temperature, units.temperature, Unit::Kelvin, material)?,
        convert_all(&spec.rate, units.rate, Unit::MolPerM3S, material)?,
    ];
    write_text(path.as_ref(), &render_csv(&header, &columns))
}

/// Per-iteration convergence history of a fit.
pub fn trace_csv(result: &FitResult) -> String {
    let mut out = String::from("iteration,evaluations,best_f,mean_f,stall,failed\n");
    for r in &result.trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration,
            r.evaluations,
            num(r.best),
            num(r.mean),
            r.stall,
            r.failed
        );
    }
    out
}

pub fn export_trace(result: &FitResult, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &trace_csv(result))
}

/// Rewrites a two-column file in other units. Extra columns are dropped.
pub fn convert_table(text: &str, from: ColumnUnits, to: ColumnUnits, material: &MaterialParams) -> Result<String> {
    if to.temperature.family() != UnitFamily::Temperature || from.value.family() != to.value.family() {
        return Err(Error::Unit {
            from: format!("{},{}", from.temperature, from.value),
            to: format!("{},{}", to.temperature, to.value),
        });
    }
    let rows = parse_rows(text)?;
    let mut ts = Vec::with_capacity(rows.len());
    let mut vs = Vec::with_capacity(rows.len());
    for (_, t, v) in rows {
        ts.push(convert(t, from.temperature, to.temperature, material)?);
        vs.push(convert(v, from.value, to.value, material)?);
    }
    let header = [format!("T [{}]", to.temperature), format!("value [{}]", to.value)];
    Ok(render_csv(&header, &[ts, vs]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup() -> (MaterialParams, TestProtocol) {
        (
            MaterialParams::bcc_iron(),
            TestProtocol::new(2e-3, 0.1, 0.0, 293.0, 900.0).unwrap(),
        )
    }

    const KELVIN_RATE: ColumnUnits = ColumnUnits {
        temperature: Unit::Kelvin,
        value: Unit::MolPerM3S,
    };

    #[test]
    fn mixed_separators_and_sorting() {
        let (m, p) = setup();
        let text = "400, 4\n300 3\n350;\t3.5\n500,5,extra\n";
        let s = parse_experiment(text, ValueKind::DeltaC, KELVIN_RATE, &m, &p).unwrap();
        assert_eq!(s.temperature, vec![300.0, 350.0, 400.0, 500.0]);
        assert_eq!(s.rate, vec![3.0, 3.5, 4.0, 5.0]);
    }

    #[test]
    fn comments_do_not_change_the_result() {
        let (m, p) = setup();
        let plain = "300 1\n310 2\n320 3\n330 4\n";
        let commented = "# exported data\n#T value\n300 1\n# mid comment\n310 2\n320 3\n330 4\n";
        let a = parse_experiment(plain, ValueKind::DeltaC, KELVIN_RATE, &m, &p).unwrap();
        let b = parse_experiment(commented, ValueKind::DeltaC, KELVIN_RATE, &m, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_value_names_its_line() {
        let (m, p) = setup();
        let err = parse_experiment("290 1\n295 1\n300, abc\n310 2\n", ValueKind::DeltaC, KELVIN_RATE, &m, &p).unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("line 3"), "{msg}"),
            e => panic!("{e:?}"),
        }
        let err = parse_experiment("290 1\n295 nan\n300 1\n310 2\n", ValueKind::DeltaC, KELVIN_RATE, &m, &p).unwrap_err();
        assert!(matches!(err, Error::Format(ref msg) if msg.contains("line 2")));
    }

    #[test]
    fn too_few_rows() {
        let (m, p) = setup();
        let r = parse_experiment("300 1\n310 2\n320 3\n", ValueKind::DeltaC, KELVIN_RATE, &m, &p);
        assert!(matches!(r, Err(Error::Format(_))));
    }

    #[test]
    fn duplicate_temperatures_are_averaged() {
        let (m, p) = setup();
        let s = parse_experiment("300 1\n300 3\n310 2\n320 3\n330 4\n", ValueKind::DeltaC, KELVIN_RATE, &m, &p).unwrap();
        assert_eq!(s.temperature[0], 300.0);
        assert_eq!(s.rate[0], 2.0);
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn celsius_and_wppm_per_second() {
        let (m, p) = setup();
        let units: ColumnUnits = "C,wppm_s".parse().unwrap();
        let s = parse_experiment("20 1\n30 2\n40 3\n50 4\n", ValueKind::DeltaC, units, &m, &p).unwrap();
        assert_relative_eq!(s.temperature[0], 293.15, max_relative = 1e-15);
        // 1 wppm/s = ρ/M_H mol/(m³·s)
        assert_relative_eq!(s.rate[0], m.mass_density / 1.008, max_relative = 1e-12);
    }

    #[test]
    fn flux_column_becomes_two_j_over_l() {
        let (m, p) = setup();
        let units = ColumnUnits {
            temperature: Unit::Kelvin,
            value: Unit::MolPerM2S,
        };
        let s = parse_experiment("300 1e-6\n310 2e-6\n320 1e-6\n330 0\n", ValueKind::Flux, units, &m, &p).unwrap();
        assert_relative_eq!(s.rate[1], 2.0 * 2e-6 / 2e-3, max_relative = 1e-14);
        assert!(parse_experiment("300 1\n310 2\n320 1\n330 0\n", ValueKind::Flux, KELVIN_RATE, &m, &p).is_err());
    }

    #[test]
    fn unit_spec_parsing() {
        assert!("K".parse::<ColumnUnits>().is_err());
        assert!("wppm/s,K".parse::<ColumnUnits>().is_err());
        let u: ColumnUnits = "K,mol/(m3*s)".parse().unwrap();
        assert_eq!(u.value, Unit::MolPerM3S);
    }

    #[test]
    fn conversion_table() {
        let m = MaterialParams::bcc_iron();
        let from: ColumnUnits = "C,wppm_s".parse().unwrap();
        let to: ColumnUnits = "K,mol/(m3*s)".parse().unwrap();
        let out = convert_table("# c\n0 1\n100 2\n", from, to, &m).unwrap();
        let back = convert_table(&out, to, from, &m).unwrap();
        let rows = parse_rows(&back).unwrap();
        assert_relative_eq!(rows[1].1, 100.0, max_relative = 1e-12);
        assert_relative_eq!(rows[1].2, 2.0, max_relative = 1e-12);
        let bad: ColumnUnits = "K,mol/m3".parse().unwrap();
        assert!(convert_table("0 1\n", from, bad, &m).is_err());
    }
}
