//! Persisted reference libraries: one trajectory CSV per scenario plus a
//! manifest that records which case produced them, so a stale library is
//! refused instead of silently reused.

use super::{format_f64, parse_cell, read_to_string, write_string, IoError};
use crate::grid::MicrogridSpec;
use crate::reference::{ExPostSequence, ExPostSequences};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Sidecar for a persisted set of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryManifest {
    pub scenario_ids: Vec<String>,
    /// Fingerprint of the case the offline stage solved.
    pub spec_hash: String,
    /// Solver tolerance used by the offline stage.
    pub tolerance: f64,
    /// Day cost at the optimum per scenario, $.
    pub costs: Vec<f64>,
}

/// Canonical fingerprint of a case: SHA-256 over its serialized form.
pub fn spec_fingerprint(spec: &MicrogridSpec) -> String {
    let bytes = serde_json::to_vec(spec).expect("case serialization cannot fail");
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

const MANIFEST_NAME: &str = "manifest.json";

/// Writes `manifest.json` and one `<scenario_id>.csv` per stored sequence.
/// `ges_ids` names the state-of-charge columns, in asset order.
pub fn persist_sequences(
    dir: &Path,
    sequences: &ExPostSequences,
    ges_ids: &[String],
    spec_hash: &str,
    tolerance: f64,
) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|source| IoError::File {
        path: dir.display().to_string(),
        source,
    })?;
    let manifest = LibraryManifest {
        scenario_ids: sequences
            .entries
            .iter()
            .map(|e| e.scenario_id.clone())
            .collect(),
        spec_hash: spec_hash.to_string(),
        tolerance,
        costs: sequences.entries.iter().map(|e| e.cost).collect(),
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
    write_string(&dir.join(MANIFEST_NAME), &manifest_json)?;
    let mut header = String::from("t,grid_mw");
    for id in ges_ids {
        header.push_str(&format!(",soc_{id}"));
    }
    for entry in &sequences.entries {
        assert_eq!(entry.soc.len(), ges_ids.len(), "asset column mismatch");
        let mut out = String::with_capacity(32 * entry.grid.len());
        out.push_str(&header);
        out.push('\n');
        for t in 0..entry.grid.len() {
            out.push_str(&t.to_string());
            out.push(',');
            out.push_str(&format_f64(entry.grid[t]));
            for soc in &entry.soc {
                out.push(',');
                out.push_str(&format_f64(soc[t]));
            }
            out.push('\n');
        }
        write_string(&dir.join(format!("{}.csv", entry.scenario_id)), &out)?;
    }
    Ok(())
}

/// Loads a persisted library, refusing it when the manifest was built for a
/// different case fingerprint. Returns the sequences and the manifest.
pub fn load_sequences(
    dir: &Path,
    expected_spec_hash: &str,
) -> Result<(ExPostSequences, LibraryManifest), IoError> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let manifest_raw = read_to_string(&manifest_path)?;
    let manifest: LibraryManifest =
        serde_json::from_str(&manifest_raw).map_err(|e| IoError::Parse {
            path: manifest_path.display().to_string(),
            line: e.line(),
            column: Some(e.column()),
            message: e.to_string(),
        })?;
    if manifest.spec_hash != expected_spec_hash {
        return Err(IoError::StaleLibrary {
            expected: expected_spec_hash.to_string(),
            found: manifest.spec_hash,
        });
    }
    if manifest.costs.len() != manifest.scenario_ids.len() {
        return Err(IoError::Config {
            path: manifest_path.display().to_string(),
            message: format!(
                "{} costs for {} scenarios",
                manifest.costs.len(),
                manifest.scenario_ids.len()
            ),
        });
    }
    let mut entries = Vec::with_capacity(manifest.scenario_ids.len());
    for (id, cost) in manifest.scenario_ids.iter().zip(&manifest.costs) {
        let path = dir.join(format!("{id}.csv"));
        if !path.exists() {
            return Err(IoError::Config {
                path: dir.display().to_string(),
                message: format!("manifest lists scenario '{id}' but {id}.csv is missing"),
            });
        }
        entries.push(load_sequence_csv(&path, id, *cost)?);
    }
    Ok((ExPostSequences { entries }, manifest))
}

fn load_sequence_csv(path: &Path, id: &str, cost: f64) -> Result<ExPostSequence, IoError> {
    let contents = read_to_string(path)?;
    let parse_err = |line: usize, column: Option<usize>, message: String| IoError::Parse {
        path: path.display().to_string(),
        line,
        column,
        message,
    };
    let mut lines = contents.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, None, "empty file".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 2 || columns[0] != "t" || columns[1] != "grid_mw" {
        return Err(parse_err(
            1,
            Some(1),
            format!("header must start with 't,grid_mw', found '{header}'"),
        ));
    }
    for (i, name) in columns.iter().enumerate().skip(2) {
        if !name.starts_with("soc_") {
            return Err(parse_err(
                1,
                Some(i + 1),
                format!("expected a 'soc_<id>' column, found '{name}'"),
            ));
        }
    }
    let assets = columns.len() - 2;
    let mut grid = Vec::new();
    let mut soc = vec![Vec::new(); assets];
    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != columns.len() {
            return Err(parse_err(
                line_no,
                None,
                format!("{} cells in a {}-column file", cells.len(), columns.len()),
            ));
        }
        let t = cells[0].trim().parse::<usize>().map_err(|_| {
            parse_err(
                line_no,
                Some(1),
                format!("'{}' is not a period index", cells[0].trim()),
            )
        })?;
        if t != grid.len() {
            return Err(parse_err(
                line_no,
                Some(1),
                format!("period {t} out of order (expected {})", grid.len()),
            ));
        }
        grid.push(parse_cell(cells[1], path, line_no, 2)?);
        for (g, track) in soc.iter_mut().enumerate() {
            track.push(parse_cell(cells[g + 2], path, line_no, g + 3)?);
        }
    }
    Ok(ExPostSequence {
        scenario_id: id.to_string(),
        soc,
        grid,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tiny_spec;

    fn sample_sequences() -> ExPostSequences {
        ExPostSequences {
            entries: vec![
                ExPostSequence {
                    scenario_id: "day-000".into(),
                    soc: vec![vec![0.5, 0.123456789012345678, 0.7]],
                    grid: vec![1.5e-17, -2.25, 3.0],
                    cost: 41.5000000001,
                },
                ExPostSequence {
                    scenario_id: "day-001".into(),
                    soc: vec![vec![0.4, 0.5, 0.6]],
                    grid: vec![0.0, 0.1, -0.2],
                    cost: -3.25,
                },
            ],
        }
    }

    #[test]
    fn sequences_roundtrip_to_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let seqs = sample_sequences();
        persist_sequences(dir.path(), &seqs, &["es".into()], "abc123", 1e-6).unwrap();
        let (back, manifest) = load_sequences(dir.path(), "abc123").unwrap();
        assert_eq!(back, seqs);
        assert_eq!(manifest.scenario_ids, vec!["day-000", "day-001"]);
        assert_eq!(manifest.tolerance, 1e-6);
    }

    #[test]
    fn fingerprints_detect_case_drift() {
        let a = spec_fingerprint(&tiny_spec(2));
        let b = spec_fingerprint(&tiny_spec(2));
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let mut other = tiny_spec(2);
        other.ges[0].initial_soc = 0.6;
        assert_ne!(a, spec_fingerprint(&other));
    }

    #[test]
    fn stale_manifest_is_refused_with_guidance() {
        let dir = tempfile::tempdir().unwrap();
        persist_sequences(dir.path(), &sample_sequences(), &["es".into()], "old", 1e-6).unwrap();
        let err = load_sequences(dir.path(), "new").unwrap_err();
        match &err {
            IoError::StaleLibrary { expected, found } => {
                assert_eq!(expected, "new");
                assert_eq!(found, "old");
            }
            other => panic!("unexpected error {other}"),
        }
        assert!(err.to_string().contains("re-run the offline stage"));
    }

    #[test]
    fn missing_scenario_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        persist_sequences(dir.path(), &sample_sequences(), &["es".into()], "h", 1e-6).unwrap();
        std::fs::remove_file(dir.path().join("day-001.csv")).unwrap();
        let err = load_sequences(dir.path(), "h").unwrap_err();
        assert!(err.to_string().contains("day-001"), "{err}");
    }

    #[test]
    fn sequence_header_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        persist_sequences(dir.path(), &sample_sequences(), &["es".into()], "h", 1e-6).unwrap();
        let path = dir.path().join("day-000.csv");
        let contents = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, contents.replace("soc_es", "charge_es")).unwrap();
        let err = load_sequences(dir.path(), "h").unwrap_err();
        assert!(err.to_string().contains("soc_"), "{err}");
    }
}
