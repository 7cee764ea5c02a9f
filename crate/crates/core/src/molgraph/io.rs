use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{parse_smiles, to_smiles, Molecule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MolRecord {
    pub id: String,
    pub mol: Molecule,
}

/// One TAB-separated line per molecule: id, SMILES, target (or `NA`),
/// coordinates as `x,y,z` per atom joined by `;` (or `NA`). Atoms are
/// written in SMILES order.
pub fn write_dataset(path: &Path, records: &[MolRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        if r.id.contains(['\t', '\n']) {
            return Err(Error::input(format!("molecule id '{}' contains a tab or newline", r.id)));
        }
        let (smiles, order) = to_smiles(&r.mol)?;
        let target = r.mol.target.map_or("NA".to_string(), |t| format!("{t:?}"));
        let coords = match &r.mol.coords {
            None => "NA".to_string(),
            Some(c) => order.iter().map(|&i| format!("{:?},{:?},{:?}", c[i as usize][0], c[i as usize][1], c[i as usize][2])).collect::<Vec<_>>().join(";"),
        };
        writeln!(out, "{}\t{smiles}\t{target}\t{coords}", r.id).expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<MolRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::format(path, format!("line {}: {msg}", ln + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad(format!("expected 4 tab-separated fields, got {}", f.len())));
        }
        let mut mol = parse_smiles(f[1]).map_err(|e| bad(format!("SMILES: {e}")))?;
        mol.target = match f[2] {
            "NA" => None,
            t => Some(t.parse().map_err(|_| bad(format!("bad target '{t}'")))?),
        };
        if f[3] != "NA" {
            let coords = f[3]
                .split(';')
                .map(|xyz| {
                    let v: Vec<f64> = xyz.split(',').map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad(format!("bad coordinate '{xyz}'")))?;
                    <[f64; 3]>::try_from(v).map_err(|_| bad(format!("coordinate '{xyz}' must have 3 components")))
                })
                .collect::<Result<Vec<_>>>()?;
            mol = Molecule::new(mol.atoms, mol.bonds, Some(coords), mol.target).map_err(|e| bad(e.to_string()))?;
        }
        out.push(MolRecord { id: f[0].to_string(), mol });
    }
    Ok(out)
}
