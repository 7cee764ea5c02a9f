//! Directory layout:
//! - `nodes_paper.tsv`: `id TAB year TAB label-or-NA`
//! - `edges_cites.tsv`, `edges_writes.tsv`, `edges_affiliated.tsv`: `src TAB dst`
//! - `features.pfgm`: paper feature matrix
//! - `meta.tsv` (optional): `num_authors`, `num_institutions`, `num_classes`

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EdgeSets, EdgeType, GraphParts, HeteroGraph};
use crate::error::{Error, Result};
use crate::pfgm;

const EDGE_FILES: [(EdgeType, &str); 3] = [
    (EdgeType::Cites, "edges_cites.tsv"),
    (EdgeType::Writes, "edges_writes.tsv"),
    (EdgeType::AffiliatedWith, "edges_affiliated.tsv"),
];

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_dir(graph: &HeteroGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut nodes = String::new();
    for p in 0..graph.num_papers() as u32 {
        match graph.label(p) {
            Some(l) => writeln!(nodes, "{p}\t{}\t{l}", graph.year(p)).unwrap(),
            None => writeln!(nodes, "{p}\t{}\tNA", graph.year(p)).unwrap(),
        }
    }
    write_file(&dir.join("nodes_paper.tsv"), &nodes)?;
    for (et, name) in EDGE_FILES {
        let mut s = String::new();
        for (a, b) in graph.forward(et).expand() {
            writeln!(s, "{a}\t{b}").unwrap();
        }
        write_file(&dir.join(name), &s)?;
    }
    let meta = format!(
        "num_authors\t{}\nnum_institutions\t{}\nnum_classes\t{}\n",
        graph.count(super::NodeType::Author),
        graph.count(super::NodeType::Institution),
        graph.num_classes()
    );
    write_file(&dir.join("meta.tsv"), &meta)?;
    pfgm::write(&dir.join("features.pfgm"), graph.features())
}

fn read_lines(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split('\t').map(|s| s.trim().to_string()).collect()))
        .collect())
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::format(path, format!("line {line}: cannot parse '{s}'")))
}

fn read_edges(path: &Path) -> Result<Vec<(u32, u32)>> {
    read_lines(path)?
        .into_iter()
        .map(|(ln, f)| {
            if f.len() != 2 {
                return Err(Error::format(path, format!("line {ln}: expected 2 fields, found {}", f.len())));
            }
            Ok((parse_num(path, ln, &f[0])?, parse_num(path, ln, &f[1])?))
        })
        .collect()
}

pub fn load_dir(dir: &Path) -> Result<HeteroGraph> {
    let features = pfgm::read(&dir.join("features.pfgm"))?;
    let n = features.rows;
    let nodes_path = dir.join("nodes_paper.tsv");
    let mut years = vec![0i32; n];
    let mut labels = vec![-1i32; n];
    let mut seen = vec![false; n];
    for (ln, f) in read_lines(&nodes_path)? {
        if f.len() != 3 {
            return Err(Error::format(&nodes_path, format!("line {ln}: expected 3 fields, found {}", f.len())));
        }
        let id: usize = parse_num(&nodes_path, ln, &f[0])?;
        if id >= n {
            return Err(Error::format(&nodes_path, format!("line {ln}: paper {id} but only {n} feature rows")));
        }
        years[id] = parse_num(&nodes_path, ln, &f[1])?;
        labels[id] = if f[2] == "NA" { -1 } else { parse_num(&nodes_path, ln, &f[2])? };
        seen[id] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::format(&nodes_path, format!("paper {missing} has features but no node record")));
    }
    let mut edges = EdgeSets::default();
    for (et, name) in EDGE_FILES {
        let list = read_edges(&dir.join(name))?;
        match et {
            EdgeType::Cites => edges.cites = list,
            EdgeType::Writes => edges.writes = list,
            EdgeType::AffiliatedWith => edges.affiliated = list,
        }
    }

    let meta_path = dir.join("meta.tsv");
    let (mut authors, mut insts, mut classes) = (None, None, None);
    if meta_path.exists() {
        for (ln, f) in read_lines(&meta_path)? {
            if f.len() != 2 {
                return Err(Error::format(&meta_path, format!("line {ln}: expected key TAB value")));
            }
            let v: usize = parse_num(&meta_path, ln, &f[1])?;
            match f[0].as_str() {
                "num_authors" => authors = Some(v),
                "num_institutions" => insts = Some(v),
                "num_classes" => classes = Some(v),
                other => return Err(Error::format(&meta_path, format!("line {ln}: unknown key '{other}'"))),
            }
        }
    }
    let max_plus_one = |it: &mut dyn Iterator<Item = u32>| it.max().map_or(0, |m| m as usize + 1);
    let num_authors = authors.unwrap_or_else(|| {
        max_plus_one(&mut edges.writes.iter().map(|e| e.0).chain(edges.affiliated.iter().map(|e| e.0)))
    });
    let num_institutions = insts.unwrap_or_else(|| max_plus_one(&mut edges.affiliated.iter().map(|e| e.1)));
    let num_classes = classes.unwrap_or_else(|| labels.iter().map(|&l| (l + 1) as usize).max().unwrap_or(0).max(1));
    HeteroGraph::new(GraphParts { num_authors, num_institutions, num_classes, features, years, labels, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::{synth_mag, SynthMagConfig};

    #[test]
    fn roundtrip_through_directory() {
        let g = synth_mag(&SynthMagConfig { num_papers: 150, duplicates: 5, ..Default::default() }, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dir(&g, dir.path()).unwrap();
        let back = load_dir(dir.path()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn loads_without_meta() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        let m = pfgm::Matrix::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        pfgm::write(&p.join("features.pfgm"), &m).unwrap();
        fs::write(p.join("nodes_paper.tsv"), "0\t2015\t1\n1\t2019\tNA\n2\t2011\t0\n").unwrap();
        fs::write(p.join("edges_cites.tsv"), "0\t1\n2\t1\n").unwrap();
        fs::write(p.join("edges_writes.tsv"), "0\t0\n1\t2\n").unwrap();
        fs::write(p.join("edges_affiliated.tsv"), "1\t4\n").unwrap();
        let g = load_dir(p).unwrap();
        assert_eq!(g.count(crate::hetgraph::NodeType::Author), 2);
        assert_eq!(g.count(crate::hetgraph::NodeType::Institution), 5);
        assert_eq!(g.num_classes(), 2);
        assert_eq!(g.label(1), None);
        assert_eq!(g.reverse(EdgeType::Cites).neighbors(1), &[0, 2]);
    }

    #[test]
    fn malformed_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        pfgm::write(&p.join("features.pfgm"), &pfgm::Matrix::new(1, 1, vec![0.0]).unwrap()).unwrap();
        fs::write(p.join("nodes_paper.tsv"), "0\tabc\tNA\n").unwrap();
        let err = load_dir(p).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }
}
