//! Symmetry reduction over interchangeable carrier atoms.
//!
//! Atoms of a carrier set are anonymous, so states that differ only by a
//! permutation of atoms within each carrier are equivalent. `canonical`
//! picks one representative per orbit: atoms are first ranked by a
//! permutation-invariant colour (iterated refinement over the relations they
//! occur in), then remaining ties are broken by individualising one atom
//! and refining again. The result is always a member of the orbit; when a
//! tie is not an automorphism the representative may differ between orbit
//! members, which only weakens the reduction.

use super::scope::Universe;
use super::value::{Atom, Value};

#[derive(Clone, Debug)]
pub struct Symmetry {
    permutable: Vec<bool>,
    bounds: Vec<u16>,
    /// First dense atom index of each carrier.
    offset: Vec<usize>,
}

/// 64-bit finaliser (splitmix); colours are combined with it so that sums
/// over multisets stay order-independent.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn mix2(a: u64, b: u64) -> u64 {
    mix(a.rotate_left(17) ^ mix(b))
}

/// Atoms of one element of a variable's value, with their positions.
fn flatten(v: &Value, pos: &mut u32, out: &mut Vec<(u32, Atom)>) {
    match v {
        Value::Bool(_) => *pos += 1,
        Value::Atom(a) => {
            out.push((*pos, *a));
            *pos += 1;
        }
        Value::Pair(p) => {
            flatten(&p.0, pos, out);
            flatten(&p.1, pos, out);
        }
        Value::Set(items) => {
            // Nested sets: member positions are not ordered, share one slot.
            let slot = *pos;
            for it in items.iter() {
                let mut p = slot;
                flatten(it, &mut p, out);
            }
            *pos += 1;
        }
    }
}

impl Symmetry {
    pub fn new(u: &Universe) -> Symmetry {
        let mut offset = Vec::with_capacity(u.bounds.len());
        let mut n = 0;
        for &b in &u.bounds {
            offset.push(n);
            n += b as usize;
        }
        Symmetry {
            permutable: u.pinned.iter().map(|p| !p).collect(),
            bounds: u.bounds.clone(),
            offset,
        }
    }

    fn dense(&self, a: Atom) -> usize {
        self.offset[a.set as usize] + a.index as usize
    }

    pub fn canonical(&self, s: &[Value]) -> Vec<Value> {
        // Flat list of facts: (variable, range into `atoms`), atoms dense.
        let mut atoms: Vec<(u32, u32)> = Vec::new();
        let mut facts: Vec<(u32, u32, u32)> = Vec::new();
        let mut scratch: Vec<(u32, Atom)> = Vec::new();
        let mut any_permutable = false;
        for (vi, v) in s.iter().enumerate() {
            let mut push = |it: &Value| {
                scratch.clear();
                let mut pos = 0;
                flatten(it, &mut pos, &mut scratch);
                let start = atoms.len() as u32;
                for (p, a) in &scratch {
                    any_permutable |= self.permutable[a.set as usize];
                    atoms.push((*p, self.dense(*a) as u32));
                }
                facts.push((vi as u32, start, atoms.len() as u32));
            };
            match v {
                Value::Set(items) => items.iter().for_each(&mut push),
                other => push(other),
            }
        }
        if !any_permutable {
            return s.to_vec();
        }
        let total = self.offset.last().copied().unwrap_or(0) + self.bounds.last().copied().unwrap_or(0) as usize;
        let mut used = vec![false; total];
        for (_, d) in &atoms {
            used[*d as usize] = true;
        }
        let used_list: Vec<usize> = (0..total).filter(|&d| used[d]).collect();
        let mut color = vec![0u64; total];
        for (c, &b) in self.bounds.iter().enumerate() {
            for i in 0..b as usize {
                color[self.offset[c] + i] = if self.permutable[c] {
                    mix2(1, c as u64)
                } else {
                    mix2(2, (self.offset[c] + i) as u64)
                };
            }
        }
        let mut sig = vec![0u64; total];
        let mut buf: Vec<u64> = Vec::with_capacity(used_list.len());
        let mut distinct = |color: &[u64]| {
            buf.clear();
            buf.extend(used_list.iter().map(|&d| color[d]));
            buf.sort_unstable();
            buf.dedup();
            buf.len()
        };
        let mut classes = distinct(&color);
        // Refine until the partition is stable.
        let mut refine = |color: &mut Vec<u64>, classes: &mut usize| loop {
            for &d in &used_list {
                sig[d] = 0;
            }
            for &(vi, start, end) in &facts {
                let fact = &atoms[start as usize..end as usize];
                let whole: u64 = fact
                    .iter()
                    .fold(0u64, |acc, &(q, b)| acc.wrapping_add(mix2(q as u64, color[b as usize])));
                for &(p, d) in fact {
                    let d = d as usize;
                    let ctx = whole.wrapping_sub(mix2(p as u64, color[d]));
                    sig[d] = sig[d].wrapping_add(mix2(mix2(vi as u64, p as u64), ctx));
                }
            }
            for &d in &used_list {
                color[d] = mix2(color[d], sig[d]);
            }
            let n = distinct(color);
            if n == *classes {
                break;
            }
            *classes = n;
        };
        refine(&mut color, &mut classes);

        // Individualise-and-refine, branching over every atom of the first
        // tied colour cell; the least relabelled state over all leaves is
        // the orbit's representative. Past the leaf budget only the first
        // branch is followed, which keeps a member of the orbit but may
        // split it.
        let mut search = Search {
            sym: self,
            state: s,
            used: &used,
            best: None,
            leaves: 0,
        };
        search.descend(color, classes, &mut refine);
        search.best.expect("at least one leaf")
    }

    /// Atoms of each permutable carrier in colour order.
    fn order(&self, color: &[u64], used: &[bool]) -> Vec<Vec<Atom>> {
        let mut order: Vec<Vec<Atom>> = vec![Vec::new(); self.bounds.len()];
        for (c, &b) in self.bounds.iter().enumerate() {
            if self.permutable[c] {
                for i in 0..b {
                    if used[self.offset[c] + i as usize] {
                        order[c].push(Atom { set: c as u16, index: i });
                    }
                }
                order[c].sort_by_key(|a| (color[self.dense(*a)], a.index));
            }
        }
        order
    }

    fn relabel(&self, s: &[Value], order: &[Vec<Atom>], used: &[bool]) -> Vec<Value> {
        let mut map: Vec<Vec<u16>> = self.bounds.iter().map(|&b| (0..b).collect()).collect();
        let mut identity = true;
        for (c, list) in order.iter().enumerate() {
            if !self.permutable[c] {
                continue;
            }
            let mut taken = vec![false; self.bounds[c] as usize];
            for (rank, a) in list.iter().enumerate() {
                map[c][a.index as usize] = rank as u16;
                taken[rank] = true;
            }
            // Unused atoms fill the remaining indices in order.
            let mut free = (0..self.bounds[c]).filter(|&i| !taken[i as usize]);
            for i in 0..self.bounds[c] {
                if !used[self.offset[c] + i as usize] {
                    map[c][i as usize] = free.next().unwrap_or(i);
                }
                identity &= map[c][i as usize] == i;
            }
        }
        if identity {
            return s.to_vec();
        }
        let f = |a: Atom| Atom {
            set: a.set,
            index: map[a.set as usize][a.index as usize],
        };
        s.iter().map(|v| v.map_atoms(&f)).collect()
    }
}

const LEAF_BUDGET: usize = 720;

struct Search<'a> {
    sym: &'a Symmetry,
    state: &'a [Value],
    used: &'a [bool],
    best: Option<Vec<Value>>,
    leaves: usize,
}

impl Search<'_> {
    fn descend(&mut self, color: Vec<u64>, classes: usize, refine: &mut impl FnMut(&mut Vec<u64>, &mut usize)) {
        let sym = self.sym;
        let order = sym.order(&color, self.used);
        let tie = order.iter().find_map(|list| {
            list.windows(2)
                .find(|w| color[sym.dense(w[0])] == color[sym.dense(w[1])])
                .map(|w| color[sym.dense(w[0])])
                .map(|c| (list, c))
        });
        let Some((list, cell)) = tie else {
            self.leaves += 1;
            let cand = sym.relabel(self.state, &order, self.used);
            if self.best.as_ref().is_none_or(|b| cand < *b) {
                self.best = Some(cand);
            }
            return;
        };
        let members: Vec<Atom> = list.iter().copied().filter(|a| color[sym.dense(*a)] == cell).collect();
        for (i, a) in members.into_iter().enumerate() {
            if i > 0 && self.leaves >= LEAF_BUDGET {
                break;
            }
            let mut c = color.clone();
            let d = sym.dense(a);
            c[d] = mix2(c[d], 0x5eed);
            let mut n = classes + 1;
            refine(&mut c, &mut n);
            self.descend(c, n, refine);
        }
    }
}

/// Atoms of permutable carriers that a state does not mention. Any two of
/// them are interchangeable in that state, so bindings need only draw them
/// in a fixed order.
pub struct FreshAtoms {
    unused: Vec<Vec<u16>>,
}

impl Symmetry {
    pub fn fresh(&self, s: &[Value]) -> FreshAtoms {
        let mut used: Vec<Vec<bool>> = self.bounds.iter().map(|&b| vec![false; b as usize]).collect();
        for v in s {
            v.for_each_atom(&mut |a| used[a.set as usize][a.index as usize] = true);
        }
        let unused = used
            .iter()
            .enumerate()
            .map(|(c, u)| {
                if self.permutable[c] {
                    (0..u.len() as u16).filter(|&i| !u[i as usize]).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        FreshAtoms { unused }
    }
}

impl FreshAtoms {
    fn is_unused(&self, a: Atom) -> bool {
        self.unused[a.set as usize].binary_search(&a.index).is_ok()
    }

    /// Whether `b` is the representative of its class of bindings under
    /// permutations of unused atoms: unused atoms bound directly to
    /// parameters must appear as the first, second, ... unused atom of
    /// their carrier, in parameter order. Bindings with unused atoms nested
    /// inside sets or pairs are always kept.
    pub fn keep(&self, b: &[Value]) -> bool {
        let mut nested = false;
        for v in b {
            if !matches!(v, Value::Atom(_)) {
                v.for_each_atom(&mut |a| nested |= self.is_unused(a));
            }
        }
        if nested {
            return true;
        }
        let mut next = vec![0usize; self.unused.len()];
        let mut seen: Vec<Atom> = Vec::new();
        for v in b {
            let Value::Atom(a) = v else { continue };
            if !self.is_unused(*a) || seen.contains(a) {
                continue;
            }
            let c = a.set as usize;
            if self.unused[c].get(next[c]) != Some(&a.index) {
                return false;
            }
            next[c] += 1;
            seen.push(*a);
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(bounds: Vec<u16>) -> Symmetry {
        let offset = bounds.iter().scan(0, |n, &b| {
            let o = *n;
            *n += b as usize;
            Some(o)
        });
        Symmetry {
            permutable: vec![true; bounds.len()],
            offset: offset.collect(),
            bounds,
        }
    }

    fn set(items: Vec<Value>) -> Value {
        Value::set_from(items)
    }

    #[test]
    fn swapped_atoms_share_a_representative() {
        let s = sym(vec![2, 2]);
        let a = |i| Value::atom(0, i);
        let b = |i| Value::atom(1, i);
        let s1 = vec![set(vec![a(0)]), set(vec![Value::pair(a(0), b(1))])];
        let s2 = vec![set(vec![a(1)]), set(vec![Value::pair(a(1), b(0))])];
        assert_eq!(s.canonical(&s1), s.canonical(&s2));
    }

    #[test]
    fn fresh_atoms_are_drawn_in_order() {
        let s = sym(vec![3]);
        let a = |i| Value::atom(0, i);
        let f = s.fresh(&[set(vec![a(1)])]);
        assert!(f.keep(&[a(0)]));
        assert!(!f.keep(&[a(2)]));
        assert!(f.keep(&[a(1)]));
        assert!(f.keep(&[a(0), a(2)]));
        assert!(!f.keep(&[a(2), a(0)]));
        assert!(f.keep(&[a(0), a(0)]));
    }

    #[test]
    fn distinct_orbits_stay_distinct() {
        let s = sym(vec![2]);
        let a = |i| Value::atom(0, i);
        let one = vec![set(vec![a(0)]), set(vec![])];
        let other = vec![set(vec![]), set(vec![a(0)])];
        assert_ne!(s.canonical(&one), s.canonical(&other));
    }
}
