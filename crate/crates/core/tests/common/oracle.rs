//! Random small models with an independent brute-force semantics.
//!
//! Each generated model exists twice: as DSL text for the checker, and as a
//! plain description interpreted here over bitmasks. The interpreter shares
//! no code with the engine.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Relation,
    Total,
    Partial,
}

#[derive(Clone, Debug)]
pub struct Rel {
    pub name: String,
    pub src: usize,
    pub dst: usize,
    pub kind: Kind,
}

#[derive(Clone, Debug)]
pub enum Ev {
    /// Constructor; also sets every total function out of the class.
    Add(usize),
    /// Destructor with domain subtraction on the relations out of the class.
    Remove(usize),
    /// Add a pair; `fresh_source` guards `a /: dom(r)`.
    Link { rel: usize, fresh_source: bool },
    Unlink(usize),
    Update(usize),
}

#[derive(Clone, Debug)]
pub struct Model {
    pub classes: Vec<String>,
    pub rels: Vec<Rel>,
    pub events: Vec<Ev>,
}

const CLASS_NAMES: [&str; 2] = ["A", "B"];

impl Model {
    pub fn random(rng: &mut impl Rng) -> Model {
        let n_classes = rng.gen_range(1..=2);
        let classes: Vec<String> = CLASS_NAMES[..n_classes].iter().map(|s| s.to_string()).collect();
        let n_rels = rng.gen_range(0..=2);
        let rels: Vec<Rel> = (0..n_rels)
            .map(|i| Rel {
                name: format!("r{i}"),
                src: rng.gen_range(0..n_classes),
                dst: rng.gen_range(0..n_classes),
                kind: *[Kind::Relation, Kind::Total, Kind::Partial].choose(rng).unwrap(),
            })
            .collect();
        let n_events = rng.gen_range(1..=4);
        let mut events = vec![Ev::Add(rng.gen_range(0..n_classes))];
        while events.len() < n_events {
            let ev = match rng.gen_range(0..5) {
                0 => Ev::Add(rng.gen_range(0..n_classes)),
                1 => Ev::Remove(rng.gen_range(0..n_classes)),
                k if n_rels > 0 => {
                    let rel = rng.gen_range(0..n_rels);
                    match k {
                        2 => Ev::Link {
                            rel,
                            fresh_source: rng.gen_bool(0.5),
                        },
                        3 => Ev::Unlink(rel),
                        _ => Ev::Update(rel),
                    }
                }
                _ => Ev::Add(rng.gen_range(0..n_classes)),
            };
            events.push(ev);
        }
        Model { classes, rels, events }
    }

    fn carrier(&self, c: usize) -> String {
        format!("S{}", self.classes[c])
    }

    pub fn to_dsl(&self) -> String {
        let mut s = String::new();
        let carriers: Vec<String> = (0..self.classes.len()).map(|c| self.carrier(c)).collect();
        s.push_str(&format!("context C0\n  sets {}\nend\n\n", carriers.join(", ")));
        s.push_str("machine M0 sees C0\n");
        for (c, name) in self.classes.iter().enumerate() {
            s.push_str(&format!("  class {name} : {} kind primary\n", self.carrier(c)));
        }
        for r in &self.rels {
            let arrow = match r.kind {
                Kind::Relation => "<->",
                Kind::Total => "-->",
                Kind::Partial => "+->",
            };
            s.push_str(&format!(
                "  association {} : {} {arrow} {}\n",
                r.name, self.classes[r.src], self.classes[r.dst]
            ));
        }
        for (i, ev) in self.events.iter().enumerate() {
            s.push('\n');
            s.push_str(&self.event_dsl(i, ev));
        }
        s.push_str("end\n");
        s
    }

    fn event_dsl(&self, i: usize, ev: &Ev) -> String {
        let mut params = Vec::new();
        let mut guards = Vec::new();
        let mut acts = Vec::new();
        let header;
        match ev {
            Ev::Add(c) => {
                let cls = &self.classes[*c];
                header = format!("event e{i}_add{cls} constructor of {cls}");
                params.push(format!("this_{cls} : {}", self.carrier(*c)));
                guards.push(format!("this_{cls} /: {cls}"));
                acts.push(format!("{cls} := {cls} \\/ {{this_{cls}}}"));
                for r in self.rels.iter().filter(|r| r.src == *c && r.kind == Kind::Total) {
                    params.push(format!("t_{} : {}", r.name, self.carrier(r.dst)));
                    guards.push(format!("t_{} : {}", r.name, self.classes[r.dst]));
                    acts.push(format!("{0} := {0} \\/ {{this_{cls} |-> t_{0}}}", r.name));
                }
            }
            Ev::Remove(c) => {
                let cls = &self.classes[*c];
                header = format!("event e{i}_remove{cls} destructor of {cls}");
                params.push(format!("x : {}", self.carrier(*c)));
                guards.push(format!("x : {cls}"));
                acts.push(format!("{cls} := {cls} \\ {{x}}"));
                for r in self.rels.iter().filter(|r| r.src == *c) {
                    acts.push(format!("{0} := {{x}} <-| {0}", r.name));
                }
            }
            Ev::Link { rel, fresh_source } => {
                let r = &self.rels[*rel];
                header = format!("event e{i}_link{} normal of {}", r.name, self.classes[r.src]);
                params.push(format!("a : {}", self.carrier(r.src)));
                params.push(format!("b : {}", self.carrier(r.dst)));
                guards.push(format!("a : {}", self.classes[r.src]));
                guards.push(format!("b : {}", self.classes[r.dst]));
                if *fresh_source {
                    guards.push(format!("a /: dom({})", r.name));
                }
                acts.push(format!("{0} := {0} \\/ {{a |-> b}}", r.name));
            }
            Ev::Unlink(rel) => {
                let r = &self.rels[*rel];
                header = format!("event e{i}_unlink{} normal of {}", r.name, self.classes[r.src]);
                params.push(format!("a : {}", self.carrier(r.src)));
                params.push(format!("b : {}", self.carrier(r.dst)));
                guards.push(format!("a |-> b : {}", r.name));
                acts.push(format!("{0} := {0} \\ {{a |-> b}}", r.name));
            }
            Ev::Update(rel) => {
                let r = &self.rels[*rel];
                header = format!("event e{i}_update{} normal of {}", r.name, self.classes[r.src]);
                params.push(format!("a : {}", self.carrier(r.src)));
                params.push(format!("b : {}", self.carrier(r.dst)));
                guards.push(format!("a : {}", self.classes[r.src]));
                guards.push(format!("b : {}", self.classes[r.dst]));
                acts.push(format!("{0} := {0} <+ {{a |-> b}}", r.name));
            }
        }
        let mut s = format!("  {header}\n    any {}\n    where\n", params.join(", "));
        for (k, g) in guards.iter().enumerate() {
            s.push_str(&format!("      @grd{} {g}\n", k + 1));
        }
        s.push_str("    then\n");
        for (k, a) in acts.iter().enumerate() {
            s.push_str(&format!("      @act{} {a}\n", k + 1));
        }
        s.push_str("  end\n");
        s
    }
}

/// Class sets as bitmasks over atom indices; relations as bitmasks over
/// `src * k + dst`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BState {
    pub classes: Vec<u32>,
    pub rels: Vec<u32>,
}

fn bit(m: u32, i: usize) -> bool {
    m >> i & 1 == 1
}

pub struct Oracle<'a> {
    pub model: &'a Model,
    pub k: usize,
}

impl Oracle<'_> {
    fn pair(&self, a: usize, b: usize) -> usize {
        a * self.k + b
    }

    /// The typing invariants of every declaration.
    pub fn valid(&self, s: &BState) -> bool {
        self.model.rels.iter().enumerate().all(|(i, r)| {
            let m = s.rels[i];
            let src = s.classes[r.src];
            let dst = s.classes[r.dst];
            (0..self.k).all(|a| {
                let images: Vec<usize> = (0..self.k).filter(|&b| bit(m, self.pair(a, b))).collect();
                let typed = images.iter().all(|&b| bit(src, a) && bit(dst, b));
                let functional = r.kind == Kind::Relation || images.len() <= 1;
                let total = r.kind != Kind::Total || !bit(src, a) || images.len() == 1;
                typed && functional && total
            })
        })
    }

    pub fn successors(&self, s: &BState) -> Vec<BState> {
        let k = self.k;
        let mut out = Vec::new();
        for ev in &self.model.events {
            match ev {
                Ev::Add(c) => {
                    let totals: Vec<usize> = (0..self.model.rels.len())
                        .filter(|&i| self.model.rels[i].src == *c && self.model.rels[i].kind == Kind::Total)
                        .collect();
                    for x in 0..k {
                        if bit(s.classes[*c], x) {
                            continue;
                        }
                        // One target per total function, each in its class.
                        let mut choices: Vec<Vec<usize>> = vec![Vec::new()];
                        for &ri in &totals {
                            let dst = self.model.rels[ri].dst;
                            let mut next = Vec::new();
                            for ch in &choices {
                                for t in (0..k).filter(|&t| bit(s.classes[dst], t)) {
                                    let mut c2 = ch.clone();
                                    c2.push(t);
                                    next.push(c2);
                                }
                            }
                            choices = next;
                        }
                        for ch in choices {
                            let mut n = s.clone();
                            n.classes[*c] |= 1 << x;
                            for (&ri, &t) in totals.iter().zip(&ch) {
                                n.rels[ri] |= 1 << self.pair(x, t);
                            }
                            out.push(n);
                        }
                    }
                }
                Ev::Remove(c) => {
                    for x in (0..k).filter(|&x| bit(s.classes[*c], x)) {
                        let mut n = s.clone();
                        n.classes[*c] &= !(1 << x);
                        for (ri, r) in self.model.rels.iter().enumerate() {
                            if r.src == *c {
                                for b in 0..k {
                                    n.rels[ri] &= !(1 << self.pair(x, b));
                                }
                            }
                        }
                        out.push(n);
                    }
                }
                Ev::Link { rel, fresh_source } => {
                    let r = &self.model.rels[*rel];
                    for a in (0..k).filter(|&a| bit(s.classes[r.src], a)) {
                        if *fresh_source && (0..k).any(|b| bit(s.rels[*rel], self.pair(a, b))) {
                            continue;
                        }
                        for b in (0..k).filter(|&b| bit(s.classes[r.dst], b)) {
                            let mut n = s.clone();
                            n.rels[*rel] |= 1 << self.pair(a, b);
                            out.push(n);
                        }
                    }
                }
                Ev::Unlink(rel) => {
                    for a in 0..k {
                        for b in 0..k {
                            if bit(s.rels[*rel], self.pair(a, b)) {
                                let mut n = s.clone();
                                n.rels[*rel] &= !(1 << self.pair(a, b));
                                out.push(n);
                            }
                        }
                    }
                }
                Ev::Update(rel) => {
                    let r = &self.model.rels[*rel];
                    for a in (0..k).filter(|&a| bit(s.classes[r.src], a)) {
                        for b in (0..k).filter(|&b| bit(s.classes[r.dst], b)) {
                            let mut n = s.clone();
                            for b2 in 0..k {
                                n.rels[*rel] &= !(1 << self.pair(a, b2));
                            }
                            n.rels[*rel] |= 1 << self.pair(a, b);
                            out.push(n);
                        }
                    }
                }
            }
        }
        out
    }

    /// Every reachable state; states breaking a typing invariant are
    /// counted but not expanded (the initial state always is).
    pub fn reachable(&self) -> BTreeSet<BState> {
        let init = BState {
            classes: vec![0; self.model.classes.len()],
            rels: vec![0; self.model.rels.len()],
        };
        let mut seen = BTreeSet::from([init.clone()]);
        let mut queue = VecDeque::from([init]);
        let mut first = true;
        while let Some(s) = queue.pop_front() {
            if !first && !self.valid(&s) {
                continue;
            }
            first = false;
            for n in self.successors(&s) {
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Number of classes of `states` under independent renaming of the
    /// atoms of each carrier.
    pub fn orbits(&self, states: &BTreeSet<BState>) -> usize {
        let perms = permutations(self.k);
        let n_classes = self.model.classes.len();
        // One permutation per carrier.
        let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..n_classes {
            combos = combos
                .into_iter()
                .flat_map(|c| (0..perms.len()).map(move |p| [c.clone(), vec![p]].concat()))
                .collect();
        }
        let canon: BTreeSet<BState> = states
            .iter()
            .map(|s| {
                combos
                    .iter()
                    .map(|combo| {
                        let p = |c: usize| &perms[combo[c]];
                        let classes = (0..n_classes).map(|c| permute_set(s.classes[c], p(c))).collect();
                        let rels = self
                            .model
                            .rels
                            .iter()
                            .enumerate()
                            .map(|(i, r)| {
                                let mut m = 0u32;
                                for a in 0..self.k {
                                    for b in 0..self.k {
                                        if bit(s.rels[i], self.pair(a, b)) {
                                            m |= 1 << self.pair(p(r.src)[a], p(r.dst)[b]);
                                        }
                                    }
                                }
                                m
                            })
                            .collect();
                        BState { classes, rels }
                    })
                    .min()
                    .expect("at least the identity")
            })
            .collect();
        canon.len()
    }
}

fn permute_set(m: u32, p: &[usize]) -> u32 {
    (0..p.len()).filter(|&i| bit(m, i)).fold(0, |acc, i| acc | 1 << p[i])
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}
