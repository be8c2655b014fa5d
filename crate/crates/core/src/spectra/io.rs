//! Spectrum CSV files (`h,n,energy,multiplicity`) and the JSON manifest
//! that ties one file per `h` together.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Level, Provenance, SolverMeta, Spectrum};
use crate::curve::{fmt_f64, parse_f64};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub h: f64,
    pub file: String,
    pub provenance: Provenance,
    pub solver: Option<SolverMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dimension: usize,
    pub lambda_max: f64,
    pub entries: Vec<ManifestEntry>,
}

pub fn write_spectrum_csv<W: Write>(spec: &Spectrum, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["h", "n", "energy", "multiplicity"])?;
    let h = fmt_f64(spec.h());
    let n = spec.dimension().to_string();
    for l in spec.levels() {
        w.write_record([h.as_str(), n.as_str(), &fmt_f64(l.energy), &l.multiplicity.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the rows of one spectrum file. The cutoff and provenance are not
/// stored per row and come from the manifest.
pub fn read_spectrum_csv<R: Read>(
    reader: R,
    h: f64,
    dimension: usize,
    lambda_max: f64,
    provenance: Provenance,
    solver: Option<SolverMeta>,
) -> Result<Spectrum> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["h", "n", "energy", "multiplicity"] {
        return Err(Error::Parse(format!("unexpected spectrum header {headers:?}")));
    }
    let mut levels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!("spectrum row {row} has {} fields", rec.len())));
        }
        let row_h = parse_f64(&rec[0])?;
        let row_n: usize = rec[1].trim().parse().map_err(|e| Error::Parse(format!("bad dimension: {e}")))?;
        if row_h != h || row_n != dimension {
            return Err(Error::Parse(format!(
                "spectrum row {row} has (h, n) = ({row_h}, {row_n}), expected ({h}, {dimension})"
            )));
        }
        let energy = parse_f64(&rec[2])?;
        let multiplicity: u64 =
            rec[3].trim().parse().map_err(|e| Error::Parse(format!("bad multiplicity: {e}")))?;
        levels.push(Level { energy, multiplicity });
    }
    Spectrum::new(h, dimension, lambda_max, levels, provenance, solver)
}

/// Writes `spectrum_XXX.csv` per spectrum plus `manifest.json` into `dir`.
pub fn write_spectra(dir: &Path, spectra: &[Spectrum]) -> Result<Manifest> {
    let first = spectra.first().ok_or_else(|| Error::InvalidInput("no spectra to write".into()))?;
    if spectra.iter().any(|s| s.dimension() != first.dimension() || s.lambda_max() != first.lambda_max()) {
        return Err(Error::InvalidInput("spectra must share dimension and lambda_max".into()));
    }
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(spectra.len());
    for (i, s) in spectra.iter().enumerate() {
        let file = format!("spectrum_{i:03}.csv");
        let mut w = BufWriter::new(File::create(dir.join(&file))?);
        write_spectrum_csv(s, &mut w)?;
        w.flush()?;
        entries.push(ManifestEntry { h: s.h(), file, provenance: s.provenance(), solver: s.solver() });
    }
    let manifest = Manifest { dimension: first.dimension(), lambda_max: first.lambda_max(), entries };
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_NAME))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

/// Reads every spectrum listed in `dir/manifest.json`. A missing manifest
/// or listed file is a configuration error.
pub fn read_spectra(dir: &Path) -> Result<Vec<Spectrum>> {
    let path = dir.join(MANIFEST_NAME);
    if !path.is_file() {
        return Err(Error::Config(format!("no spectrum manifest at {}", path.display())));
    }
    let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(&path)?))?;
    if manifest.entries.is_empty() {
        return Err(Error::Config("spectrum manifest lists no files".into()));
    }
    manifest
        .entries
        .iter()
        .map(|e| {
            let file = dir.join(&e.file);
            if !file.is_file() {
                return Err(Error::Config(format!("manifest lists missing file {}", file.display())));
            }
            read_spectrum_csv(
                BufReader::new(File::open(file)?),
                e.h,
                manifest.dimension,
                manifest.lambda_max,
                e.provenance,
                e.solver,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::exact_harmonic_spectrum;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let spectra: Vec<Spectrum> = [0.1, 0.03, 1.0 / 3.0 * 0.1]
            .iter()
            .map(|&h| exact_harmonic_spectrum(3, h, 1.7).unwrap().with_alternating_shift(h * h * h).unwrap())
            .collect();
        write_spectra(dir.path(), &spectra).unwrap();
        let back = read_spectra(dir.path()).unwrap();
        assert_eq!(back, spectra);
    }

    #[test]
    fn missing_file_is_configuration_error() {
        let dir = tempfile::tempdir().unwrap();
        let spectra = vec![exact_harmonic_spectrum(2, 0.1, 1.0).unwrap()];
        write_spectra(dir.path(), &spectra).unwrap();
        fs::remove_file(dir.path().join("spectrum_000.csv")).unwrap();
        assert!(matches!(read_spectra(dir.path()), Err(Error::Config(_))));
        assert!(matches!(read_spectra(&dir.path().join("nope")), Err(Error::Config(_))));
    }

    #[test]
    fn header_is_checked() {
        let text = "h,n,E,mult\n0.1,2,0.2,1\n";
        let r = read_spectrum_csv(text.as_bytes(), 0.1, 2, 1.0, Provenance::ExactHarmonic, None);
        assert!(matches!(r, Err(Error::Parse(_))));
    }
}
