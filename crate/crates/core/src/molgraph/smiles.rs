use std::collections::{BTreeMap, HashSet};

use super::{element_index, Atom, Bond, Molecule, ELEMENTS};
use crate::error::{Error, Result};

fn perr(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset, message: message.into() }
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    pairs: HashSet<(u32, u32)>,
}

impl Parser<'_> {
    fn add_bond(&mut self, a: u32, b: u32, order: u8, offset: usize) -> Result<()> {
        if a == b {
            return Err(perr(offset, "ring bond from an atom to itself"));
        }
        if !self.pairs.insert((a.min(b), a.max(b))) {
            return Err(perr(offset, format!("atoms {a} and {b} are already bonded")));
        }
        self.bonds.push(Bond { a, b, order, ring: false });
        Ok(())
    }

    fn bracket_atom(&mut self) -> Result<Atom> {
        let start = self.i;
        self.i += 1;
        let close = self.s[self.i..].iter().position(|&c| c == b']').ok_or_else(|| perr(start, "unterminated bracket atom"))? + self.i;
        let body = &self.s[self.i..close];
        let mut j = 0;
        let sym_len = if body.len() >= 2 && body[1].is_ascii_lowercase() { 2 } else { 1 };
        let sym = std::str::from_utf8(body.get(..sym_len).unwrap_or(&[])).unwrap_or("");
        let element = element_index(sym).ok_or_else(|| perr(self.i, format!("unsupported element '{sym}' in bracket atom")))?;
        j += sym_len;
        if body.get(j) == Some(&b'H') {
            j += 1;
            while body.get(j).is_some_and(u8::is_ascii_digit) {
                j += 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(&sign) = body.get(j).filter(|c| **c == b'+' || **c == b'-') {
            let unit = if sign == b'+' { 1 } else { -1 };
            j += 1;
            let digits_start = j;
            while body.get(j).is_some_and(u8::is_ascii_digit) {
                j += 1;
            }
            if j > digits_start {
                let mag: i32 = std::str::from_utf8(&body[digits_start..j]).unwrap().parse().map_err(|_| perr(self.i + digits_start, "bad charge"))?;
                charge = unit * mag;
            } else {
                charge = unit;
                while body.get(j) == Some(&sign) {
                    charge += unit;
                    j += 1;
                }
            }
        }
        if j != body.len() {
            return Err(perr(self.i + j, format!("unsupported token '{}' in bracket atom", body[j] as char)));
        }
        let charge = i8::try_from(charge).map_err(|_| perr(start, "charge out of range"))?;
        self.i = close + 1;
        Ok(Atom { element, charge, ring: false })
    }
}

/// Parses the supported SMILES subset: organic-subset atoms
/// `B C N O P S F Cl Br I`, bracket atoms with optional hydrogen count and
/// charge, bonds `- = #`, branches, and ring closures `0-9` / `%nn`.
/// Aromatic (lowercase) atoms, stereo marks and `.` are rejected.
pub fn parse_smiles(text: &str) -> Result<Molecule> {
    let mut p = Parser { s: text.as_bytes(), i: 0, atoms: Vec::new(), bonds: Vec::new(), pairs: HashSet::new() };
    let mut prev: Option<u32> = None;
    let mut pending: Option<(u8, usize)> = None;
    let mut branches: Vec<(u32, usize)> = Vec::new();
    // ring number -> (atom, explicit order, offset)
    let mut open: BTreeMap<u32, (u32, Option<u8>, usize)> = BTreeMap::new();
    while p.i < p.s.len() {
        let at = p.i;
        let c = p.s[at];
        match c {
            b'A'..=b'Z' | b'[' => {
                let atom = if c == b'[' {
                    p.bracket_atom()?
                } else {
                    let two = p.s.get(at..at + 2).and_then(|t| std::str::from_utf8(t).ok()).and_then(element_index).filter(|_| p.s[at + 1].is_ascii_lowercase());
                    let (element, len) = match two {
                        Some(e) => (e, 2),
                        None => (element_index(&(c as char).to_string()).ok_or_else(|| perr(at, format!("unsupported atom '{}'", c as char)))?, 1),
                    };
                    p.i += len;
                    Atom { element, charge: 0, ring: false }
                };
                let idx = p.atoms.len() as u32;
                p.atoms.push(atom);
                if let Some(q) = prev {
                    let order = pending.take().map_or(0, |(o, _)| o);
                    p.add_bond(q, idx, order, at)?;
                } else if let Some((_, off)) = pending {
                    return Err(perr(off, "bond with no preceding atom"));
                }
                prev = Some(idx);
            }
            b'-' | b'=' | b'#' => {
                if pending.is_some() {
                    return Err(perr(at, "consecutive bond symbols"));
                }
                if prev.is_none() {
                    return Err(perr(at, "bond with no preceding atom"));
                }
                pending = Some((match c { b'-' => 0, b'=' => 1, _ => 2 }, at));
                p.i += 1;
            }
            b'(' => {
                let q = prev.ok_or_else(|| perr(at, "branch with no preceding atom"))?;
                if pending.is_some() {
                    return Err(perr(at, "bond symbol before branch"));
                }
                branches.push((q, at));
                p.i += 1;
            }
            b')' => {
                let (q, _) = branches.pop().ok_or_else(|| perr(at, "unmatched ')'"))?;
                if let Some((_, off)) = pending {
                    return Err(perr(off, "dangling bond at end of branch"));
                }
                if prev == Some(q) {
                    return Err(perr(at, "empty branch"));
                }
                prev = Some(q);
                p.i += 1;
            }
            b'0'..=b'9' | b'%' => {
                let q = prev.ok_or_else(|| perr(at, "ring bond with no preceding atom"))?;
                let num = if c == b'%' {
                    let d = p.s.get(at + 1..at + 3).filter(|d| d.iter().all(u8::is_ascii_digit)).ok_or_else(|| perr(at, "'%' must be followed by two digits"))?;
                    p.i += 3;
                    (d[0] - b'0') as u32 * 10 + (d[1] - b'0') as u32
                } else {
                    p.i += 1;
                    (c - b'0') as u32
                };
                let order = pending.take().map(|(o, _)| o);
                match open.remove(&num) {
                    Some((other, o2, _)) => {
                        let order = match (order, o2) {
                            (Some(a), Some(b)) if a != b => return Err(perr(at, format!("conflicting bond orders for ring bond {num}"))),
                            (a, b) => a.or(b).unwrap_or(0),
                        };
                        p.add_bond(other, q, order, at)?;
                    }
                    None => {
                        open.insert(num, (q, order, at));
                    }
                }
            }
            _ if c.is_ascii_lowercase() => return Err(perr(at, format!("aromatic atom '{}' is not supported; kekulize the input", c as char))),
            _ => {
                let ch = text[at..].chars().next().unwrap_or('?');
                return Err(perr(at, format!("unsupported token '{ch}'")));
            }
        }
    }
    if let Some((_, off)) = pending {
        return Err(perr(off, "dangling bond at end of input"));
    }
    if let Some(&(_, off)) = branches.last() {
        return Err(perr(off, "unmatched '('"));
    }
    if let Some((num, &(_, _, off))) = open.iter().next() {
        return Err(perr(off, format!("ring bond {num} is never closed")));
    }
    if p.atoms.is_empty() {
        return Err(perr(0, "empty SMILES"));
    }
    Molecule::new(p.atoms, p.bonds, None, None)
}

fn bond_symbol(order: u8) -> &'static str {
    match order {
        0 => "",
        1 => "=",
        _ => "#",
    }
}

/// Writes a connected molecule in the parser's subset, depth-first from atom
/// 0 with lower-indexed neighbours first. Returns the text and the original
/// index of each written atom, in output order.
pub fn to_smiles(m: &Molecule) -> Result<(String, Vec<u32>)> {
    let n = m.atoms.len();
    if n == 0 {
        return Err(Error::input("cannot write an empty molecule"));
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, b) in m.bonds.iter().enumerate() {
        adj[b.a as usize].push((b.b as usize, k));
        adj[b.b as usize].push((b.a as usize, k));
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    // Spanning tree by iterative DFS in emission order.
    let mut visited = vec![usize::MAX; n];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut tree_bond = vec![false; m.bonds.len()];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![(0usize, usize::MAX)];
    while let Some((u, via)) = stack.pop() {
        if visited[u] != usize::MAX {
            continue;
        }
        visited[u] = order.len();
        order.push(u as u32);
        if via != usize::MAX {
            tree_bond[via] = true;
            let b = &m.bonds[via];
            let parent = if b.a as usize == u { b.b } else { b.a } as usize;
            children[parent].push((u, via));
        }
        for &(v, k) in adj[u].iter().rev() {
            if visited[v] == usize::MAX {
                stack.push((v, k));
            }
        }
    }
    if order.len() != n {
        return Err(Error::input("cannot write a disconnected molecule"));
    }
    // Ring closures at each atom, in bond order.
    let mut closures: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, b) in m.bonds.iter().enumerate() {
        if !tree_bond[k] {
            closures[b.a as usize].push(k);
            closures[b.b as usize].push(k);
        }
    }
    let mut out = String::new();
    let mut ring_ids: Vec<Option<u32>> = vec![None; m.bonds.len()];
    let mut free: std::collections::BTreeSet<u32> = (1..100).collect();
    enum Task {
        Atom(usize),
        Text(&'static str),
    }
    let mut tasks = vec![Task::Atom(0)];
    while let Some(t) = tasks.pop() {
        let u = match t {
            Task::Text(s) => {
                out.push_str(s);
                continue;
            }
            Task::Atom(u) => u,
        };
        let a = &m.atoms[u];
        let sym = ELEMENTS[a.element as usize];
        if a.charge == 0 {
            out.push_str(sym);
        } else {
            let sign = if a.charge > 0 { '+' } else { '-' };
            let mag = a.charge.unsigned_abs();
            if mag == 1 {
                out.push_str(&format!("[{sym}{sign}]"));
            } else {
                out.push_str(&format!("[{sym}{sign}{mag}]"));
            }
        }
        let mut cl = closures[u].clone();
        cl.sort_by_key(|&k| {
            let b = &m.bonds[k];
            let other = if b.a as usize == u { b.b } else { b.a } as usize;
            visited[other]
        });
        for k in cl {
            let id = match ring_ids[k].take() {
                Some(id) => {
                    free.insert(id);
                    id
                }
                None => {
                    let id = free.pop_first().ok_or_else(|| Error::input("more than 99 open ring bonds"))?;
                    ring_ids[k] = Some(id);
                    id
                }
            };
            out.push_str(bond_symbol(m.bonds[k].order));
            if id < 10 {
                out.push_str(&id.to_string());
            } else {
                out.push_str(&format!("%{id}"));
            }
        }
        let ch = &children[u];
        for (j, &(v, k)) in ch.iter().enumerate().rev() {
            let last = j + 1 == ch.len();
            if !last {
                tasks.push(Task::Text(")"));
            }
            tasks.push(Task::Atom(v));
            tasks.push(Task::Text(bond_symbol(m.bonds[k].order)));
            if !last {
                tasks.push(Task::Text("("));
            }
        }
    }
    Ok((out, order))
}
