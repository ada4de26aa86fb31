//! Output formats: CSV tables, 16-bit binary PGM heatmaps and JSON
//! sidecars. All writers are deterministic byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::PixelMask;
use crate::lyapunov::{FieldMeta, ParamGrid, ScalarField};
use crate::potential::{MassField, MassSummary};

/// `re,im,<column>` per pixel, bottom row first, `-inf` for sentinels.
pub fn scalar_csv(field: &ScalarField) -> String {
    cells_csv(&field.grid, "value", &field.values)
}

/// `re,im,mass` per pixel, bottom row first.
pub fn mass_csv(mass: &MassField) -> String {
    cells_csv(&mass.grid, "mass", &mass.masses)
}

/// `re,im,flag` per pixel with flags as `0`/`1`.
pub fn mask_csv(mask: &PixelMask) -> String {
    let vals: Vec<f64> = mask.flags.iter().map(|f| if *f { 1.0 } else { 0.0 }).collect();
    cells_csv(&mask.grid, "flag", &vals)
}

fn cells_csv(grid: &ParamGrid, column: &str, values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 40);
    let _ = writeln!(out, "re,im,{column}");
    for (k, v) in values.iter().enumerate() {
        let z = grid.pixel_at(k);
        let _ = writeln!(out, "{},{},{}", z.re, z.im, v);
    }
    out
}

/// Binary 16-bit PGM, most significant byte first, top row = largest
/// imaginary part. `levels[k]` is in `[0, 1]` in grid index order.
pub fn pgm16(grid: &ParamGrid, levels: &[f64]) -> Vec<u8> {
    let header = format!("P5\n{} {}\n65535\n", grid.nx, grid.ny);
    let mut out = Vec::with_capacity(header.len() + 2 * levels.len());
    out.extend_from_slice(header.as_bytes());
    for j in (0..grid.ny).rev() {
        for i in 0..grid.nx {
            let v = levels[grid.index(i, j)];
            let q = if v.is_nan() { 0 } else { (v.clamp(0.0, 1.0) * 65535.0).round() as u16 };
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    out
}

/// Linear map of the finite range onto the grey levels; sentinels are black.
pub fn scalar_pgm(field: &ScalarField) -> Vec<u8> {
    let levels: Vec<f64> = match field.range() {
        Some((lo, hi)) if hi > lo => {
            field.values.iter().map(|v| if v.is_finite() { (v - lo) / (hi - lo) } else { 0.0 }).collect()
        }
        _ => field.values.iter().map(|v| if v.is_finite() { 0.5 } else { 0.0 }).collect(),
    };
    pgm16(&field.grid, &levels)
}

/// Nonnegative part of the masses, scaled by the largest cell.
pub fn mass_pgm(mass: &MassField) -> Vec<u8> {
    let max = mass.masses.iter().copied().fold(0.0, f64::max);
    let levels: Vec<f64> =
        mass.masses.iter().map(|m| if max > 0.0 { m.max(0.0) / max } else { 0.0 }).collect();
    pgm16(&mass.grid, &levels)
}

pub fn mask_pgm(mask: &PixelMask) -> Vec<u8> {
    let levels: Vec<f64> = mask.flags.iter().map(|f| if *f { 1.0 } else { 0.0 }).collect();
    pgm16(&mask.grid, &levels)
}

/// Decodes a 16-bit PGM written by [`pgm16`] into `(width, height, samples)`
/// with samples in file order.
pub fn read_pgm16(bytes: &[u8]) -> Option<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let data = bytes.get(pos..pos + 2 * w * h)?;
    Some((w, h, data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

/// JSON sidecar of a scalar field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub meta: FieldMeta,
    pub grid: ParamGrid,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub sentinels: usize,
}

impl FieldSidecar {
    pub fn of(field: &ScalarField) -> Self {
        let range = field.range();
        FieldSidecar {
            meta: field.meta.clone(),
            grid: field.grid,
            min: range.map(|r| r.0),
            max: range.map(|r| r.1),
            sentinels: field.sentinel_count(),
        }
    }
}

/// JSON sidecar of a mass field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassSidecar {
    pub meta: FieldMeta,
    pub grid: ParamGrid,
    #[serde(flatten)]
    pub summary: MassSummary,
    pub overflow: f64,
}

impl MassSidecar {
    pub fn of(mass: &MassField) -> Self {
        MassSidecar { meta: mass.meta.clone(), grid: mass.grid, summary: mass.summary(), overflow: mass.overflow }
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.json` for a scalar field.
pub fn write_scalar_field(dir: &Path, stem: &str, field: &ScalarField) -> Result<()> {
    fs::write(dir.join(format!("{stem}.csv")), scalar_csv(field))?;
    fs::write(dir.join(format!("{stem}.pgm")), scalar_pgm(field))?;
    fs::write(dir.join(format!("{stem}.json")), to_json_pretty(&FieldSidecar::of(field))?)?;
    Ok(())
}

/// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.json` for a mass field.
pub fn write_mass_field(dir: &Path, stem: &str, mass: &MassField) -> Result<()> {
    fs::write(dir.join(format!("{stem}.csv")), mass_csv(mass))?;
    fs::write(dir.join(format!("{stem}.pgm")), mass_pgm(mass))?;
    fs::write(dir.join(format!("{stem}.json")), to_json_pretty(&MassSidecar::of(mass))?)?;
    Ok(())
}

/// Reads back a mass field written by [`write_mass_field`]; values round-trip
/// exactly.
pub fn read_mass_field(dir: &Path, stem: &str) -> Result<MassField> {
    let side: MassSidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let csv = fs::read_to_string(dir.join(format!("{stem}.csv")))?;
    let mut lines = csv.lines();
    if lines.next() != Some("re,im,mass") {
        return Err(Error::Parse(format!("{stem}.csv: unexpected header")));
    }
    let masses = lines
        .map(|l| {
            l.rsplit(',').next().and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| Error::Parse(format!("bad row `{l}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = MassField::new(side.grid, masses, side.meta)?;
    out.overflow = side.overflow;
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_pretty(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    fn grid() -> ParamGrid {
        ParamGrid::new(C::new(0.0, 0.0), 1.0, 1.0, 8, 8).unwrap()
    }

    #[test]
    fn pgm_layout() {
        let g = grid();
        let f = ScalarField::from_fn(g, FieldMeta::kind("t"), |z| z.im).unwrap();
        let bytes = scalar_pgm(&f);
        assert!(bytes.starts_with(b"P5\n8 8\n65535\n"));
        let (w, h, px) = read_pgm16(&bytes).unwrap();
        assert_eq!((w, h), (8, 8));
        // top row holds the largest imaginary part
        assert_eq!(px[0], 65535);
        assert_eq!(px[63], 0);
        assert_eq!(bytes.len(), 13 + 128);
    }

    #[test]
    fn csv_round_trips_values() {
        let g = grid();
        let mut values: Vec<f64> = (0..64).map(|k| (k as f64).sqrt() / 3.0).collect();
        values[20] = f64::NEG_INFINITY;
        let f = ScalarField::new(g, values.clone(), FieldMeta::kind("t")).unwrap();
        let csv = scalar_csv(&f);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("re,im,value"));
        for (k, line) in lines.enumerate() {
            let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert_eq!(v, values[k]);
        }
    }

    #[test]
    fn mass_sidecar_fields() {
        let g = grid();
        let mut masses = vec![0.0; 64];
        masses[g.index(3, 3)] = 2.0;
        masses[g.index(4, 4)] = -0.5;
        let m = MassField::new(g, masses, FieldMeta::kind("t")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&to_json_pretty(&MassSidecar::of(&m)).unwrap()).unwrap();
        for key in ["total", "min", "max", "negative_fraction"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["negative_fraction"], 0.25);
        let (_, _, px) = read_pgm16(&mass_pgm(&m)).unwrap();
        assert_eq!(px.iter().filter(|p| **p == 65535).count(), 1);
        let dir = tempfile::tempdir().unwrap();
        write_mass_field(dir.path(), "m", &m).unwrap();
        assert_eq!(read_mass_field(dir.path(), "m").unwrap(), m);
    }
}
