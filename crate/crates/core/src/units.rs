//! Output unit families and exact conversions between them.
//!
//! Every unit maps to an internal base (K, s, mol/m³, mol/(m³·s),
//! mol/(m²·s)). Weight-ppm units need the host density; they use
//! `wppm = C·M_H/ρ` with C in mol/m³, M_H in g/mol and ρ in g/cm³.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{MaterialParams, HYDROGEN_MOLAR_MASS};
use crate::error::{Error, Result};

const CELSIUS_OFFSET: f64 = 273.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitFamily {
    Flux,
    Content,
    Rate,
    Temperature,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "mol/(m2*s)")]
    MolPerM2S,
    #[serde(rename = "mol/(cm2*s)")]
    MolPerCm2S,
    #[serde(rename = "wppm*m/s")]
    WppmMPerS,
    #[serde(rename = "mol/m3")]
    MolPerM3,
    #[serde(rename = "mol/cm3")]
    MolPerCm3,
    #[serde(rename = "wppm")]
    Wppm,
    #[serde(rename = "mol/(m3*s)")]
    MolPerM3S,
    #[serde(rename = "mol/(cm3*s)")]
    MolPerCm3S,
    #[serde(rename = "wppm/s")]
    WppmPerS,
    #[serde(rename = "K")]
    Kelvin,
    #[serde(rename = "C")]
    Celsius,
    #[serde(rename = "s")]
    Second,
}

impl Unit {
    pub fn family(self) -> UnitFamily {
        use Unit::*;
        match self {
            MolPerM2S | MolPerCm2S | WppmMPerS => UnitFamily::Flux,
            MolPerM3 | MolPerCm3 | Wppm => UnitFamily::Content,
            MolPerM3S | MolPerCm3S | WppmPerS => UnitFamily::Rate,
            Kelvin | Celsius => UnitFamily::Temperature,
            Second => UnitFamily::Time,
        }
    }

    pub fn symbol(self) -> &'static str {
        use Unit::*;
        match self {
            MolPerM2S => "mol/(m2*s)",
            MolPerCm2S => "mol/(cm2*s)",
            WppmMPerS => "wppm*m/s",
            MolPerM3 => "mol/m3",
            MolPerCm3 => "mol/cm3",
            Wppm => "wppm",
            MolPerM3S => "mol/(m3*s)",
            MolPerCm3S => "mol/(cm3*s)",
            WppmPerS => "wppm/s",
            Kelvin => "K",
            Celsius => "C",
            Second => "s",
        }
    }

    /// Multiplicative factor from this unit to its family base, or `None`
    /// for the affine temperature scale.
    fn to_base_factor(self, material: &MaterialParams) -> Option<f64> {
        use Unit::*;
        // mol/m3 per wppm
        let per_wppm = material.mass_density / HYDROGEN_MOLAR_MASS;
        match self {
            MolPerM2S | MolPerM3 | MolPerM3S | Kelvin | Second => Some(1.0),
            MolPerCm2S => Some(1e4),
            MolPerCm3 | MolPerCm3S => Some(1e6),
            WppmMPerS | Wppm | WppmPerS => Some(per_wppm),
            Celsius => None,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, ' ' | '(' | ')' | '*' | '·' | '_' | '.'))
            .collect();
        use Unit::*;
        let unit = match key.as_str() {
            "mol/m2s" | "molm2s" => MolPerM2S,
            "mol/cm2s" | "molcm2s" => MolPerCm2S,
            "wppmm/s" | "wppmms" | "wtppmm/s" => WppmMPerS,
            "mol/m3" | "molm3" => MolPerM3,
            "mol/cm3" | "molcm3" => MolPerCm3,
            "wppm" | "wtppm" | "ppm" => Wppm,
            "mol/m3s" | "molm3s" => MolPerM3S,
            "mol/cm3s" | "molcm3s" => MolPerCm3S,
            "wppm/s" | "wppms" | "wtppm/s" => WppmPerS,
            "k" | "kelvin" => Kelvin,
            "c" | "°c" | "degc" | "celsius" => Celsius,
            "s" | "sec" | "second" | "seconds" => Second,
            _ => {
                return Err(Error::Unit {
                    from: s.to_string(),
                    to: "a known unit".to_string(),
                })
            }
        };
        Ok(unit)
    }
}

/// Converts `value` between two units of the same family.
pub fn convert(value: f64, from: Unit, to: Unit, material: &MaterialParams) -> Result<f64> {
    if from.family() != to.family() {
        return Err(Error::Unit {
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    if from == to {
        return Ok(value);
    }
    if from.family() == UnitFamily::Temperature {
        return Ok(match (from, to) {
            (Unit::Celsius, Unit::Kelvin) => value + CELSIUS_OFFSET,
            (Unit::Kelvin, Unit::Celsius) => value - CELSIUS_OFFSET,
            _ => unreachable!("temperature family has two members"),
        });
    }
    let a = from
        .to_base_factor(material)
        .expect("non-temperature units are multiplicative");
    let b = to
        .to_base_factor(material)
        .expect("non-temperature units are multiplicative");
    Ok(value * (a / b))
}

/// Unit selections for every output quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub flux: Unit,
    pub content: Unit,
    pub rate: Unit,
    pub temperature: Unit,
    pub time: Unit,
}

impl Default for UnitSystem {
    fn default() -> Self {
        UnitSystem {
            flux: Unit::MolPerM2S,
            content: Unit::MolPerM3,
            rate: Unit::MolPerM3S,
            temperature: Unit::Kelvin,
            time: Unit::Second,
        }
    }
}

impl UnitSystem {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            (self.flux, UnitFamily::Flux),
            (self.content, UnitFamily::Content),
            (self.rate, UnitFamily::Rate),
            (self.temperature, UnitFamily::Temperature),
            (self.time, UnitFamily::Time),
        ];
        for (unit, family) in pairs {
            if unit.family() != family {
                return Err(Error::InvalidParameter(format!(
                    "unit {unit} is not a {family:?} unit"
                )));
            }
        }
        Ok(())
    }
}
