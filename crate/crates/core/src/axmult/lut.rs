//! The `AXLU` product-table file.
//!
//! Layout (little endian): magic `AXLU`, version u32, energy_per_op f64,
//! name length u16, UTF-8 name, 65536 u16 products in weight-major order.
//! Files written here append an error-profile trailer (mean f64, MAE f64,
//! max u32) that the loader checks against a recomputation; files without
//! the trailer are accepted.

use std::fs;
use std::path::Path;

use super::mode::{AxMode, ErrorProfile, TABLE_LEN};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AXLU";
pub const AXLU_VERSION: u32 = 1;
const TRAILER_LEN: usize = 20;
const PROFILE_TOL: f64 = 1e-9;

pub fn lut_to_bytes(mode: &AxMode) -> Vec<u8> {
    let name = mode.name().as_bytes();
    let mut out = Vec::with_capacity(22 + name.len() + 2 * TABLE_LEN + TRAILER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&AXLU_VERSION.to_le_bytes());
    out.extend_from_slice(&mode.energy_per_op().to_le_bytes());
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name);
    for p in mode.table() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let profile = mode.error_profile();
    out.extend_from_slice(&profile.mean_error.to_le_bytes());
    out.extend_from_slice(&profile.mean_absolute_error.to_le_bytes());
    out.extend_from_slice(&profile.max_absolute_error.to_le_bytes());
    out
}

/// Parses an AXLU file, returning the mode and its stored profile when present.
pub fn lut_from_bytes(bytes: &[u8]) -> Result<(AxMode, Option<ErrorProfile>)> {
    if bytes.len() < 18 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing AXLU header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != AXLU_VERSION {
        return Err(Error::Format(format!("unsupported AXLU version {version}")));
    }
    let energy = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let name_len = u16::from_le_bytes(bytes[16..18].try_into().unwrap()) as usize;
    let name = bytes
        .get(18..18 + name_len)
        .ok_or_else(|| Error::Format("truncated AXLU name".into()))?;
    let name = std::str::from_utf8(name).map_err(|e| Error::Format(format!("AXLU name is not UTF-8: {e}")))?;
    let body = &bytes[18 + name_len..];
    let table_bytes = 2 * TABLE_LEN;
    let stored = match body.len() {
        n if n == table_bytes => None,
        n if n == table_bytes + TRAILER_LEN => {
            let t = &body[table_bytes..];
            Some(ErrorProfile {
                mean_error: f64::from_le_bytes(t[0..8].try_into().unwrap()),
                mean_absolute_error: f64::from_le_bytes(t[8..16].try_into().unwrap()),
                max_absolute_error: u32::from_le_bytes(t[16..20].try_into().unwrap()),
            })
        }
        n => {
            return Err(Error::Format(format!(
                "AXLU table holds {} products, expected {TABLE_LEN}",
                n / 2
            )))
        }
    };
    let table = body[..table_bytes]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let mode = AxMode::new(name, table, energy)?;
    if let Some(stored) = stored {
        let actual = mode.error_profile();
        if !actual.matches(&stored, PROFILE_TOL) {
            return Err(Error::Validation(format!(
                "AXLU metadata {stored:?} disagrees with table profile {actual:?}"
            )));
        }
    }
    Ok((mode, stored))
}

pub fn load_lut(path: impl AsRef<Path>) -> Result<AxMode> {
    Ok(lut_from_bytes(&fs::read(path)?)?.0)
}

pub fn save_lut(mode: &AxMode, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, lut_to_bytes(mode))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(table_len: usize, energy: f64) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(MAGIC);
        v.extend_from_slice(&AXLU_VERSION.to_le_bytes());
        v.extend_from_slice(&energy.to_le_bytes());
        v.extend_from_slice(&1u16.to_le_bytes());
        v.push(b'x');
        for i in 0..table_len {
            v.extend_from_slice(&(((i >> 8) * (i & 0xFF)) as u16).to_le_bytes());
        }
        v
    }

    #[test]
    fn exact_file_without_trailer() {
        let (mode, stored) = lut_from_bytes(&raw(TABLE_LEN, 1.0)).unwrap();
        assert!(stored.is_none());
        assert_eq!(mode.error_profile(), ErrorProfile::exact());
    }

    #[test]
    fn short_table_is_format_error() {
        assert!(matches!(lut_from_bytes(&raw(65535, 1.0)), Err(Error::Format(_))));
    }

    #[test]
    fn non_positive_energy_is_validation_error() {
        assert!(matches!(
            lut_from_bytes(&raw(TABLE_LEN, 0.0)),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            lut_from_bytes(&raw(TABLE_LEN, -2.0)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn wrong_magic() {
        let mut b = raw(TABLE_LEN, 1.0);
        b[3] = b'X';
        assert!(matches!(lut_from_bytes(&b), Err(Error::Format(_))));
    }

    #[test]
    fn tampered_trailer_rejected() {
        let mode = AxMode::truncation(2).unwrap();
        let mut b = lut_to_bytes(&mode);
        let n = b.len();
        b[n - 1] ^= 0x40;
        assert!(matches!(lut_from_bytes(&b), Err(Error::Validation(_))));
    }
}
