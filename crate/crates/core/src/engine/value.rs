//! Finite values: atoms, booleans, pairs and extensional sets.

use std::fmt;
use std::sync::Arc;

/// Carrier-set element: set id (position in the universe) plus 0-based index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub set: u16,
    pub index: u16,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Bool(bool),
    Atom(Atom),
    Pair(Arc<(Value, Value)>),
    /// Sorted, duplicate-free.
    Set(Arc<Vec<Value>>),
}

impl Value {
    pub fn atom(set: u16, index: u16) -> Value {
        Value::Atom(Atom { set, index })
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Arc::new((a, b)))
    }

    pub fn empty() -> Value {
        Value::Set(Arc::new(Vec::new()))
    }

    /// Build a set from arbitrary elements, sorting and deduplicating.
    pub fn set_from(mut items: Vec<Value>) -> Value {
        items.sort();
        items.dedup();
        Value::Set(Arc::new(items))
    }

    /// Build a set from elements already sorted and unique.
    pub fn set_sorted(items: Vec<Value>) -> Value {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        Value::Set(Arc::new(items))
    }

    pub fn as_set(&self) -> Option<&[Value]> {
        match self {
            Value::Set(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&Value, &Value)> {
        match self {
            Value::Pair(p) => Some((&p.0, &p.1)),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        self.as_set().is_some_and(|s| s.binary_search(v).is_ok())
    }

    pub fn len(&self) -> usize {
        self.as_set().map_or(0, |s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Apply `f` to every atom, rebuilding sets in sorted order.
    pub fn map_atoms(&self, f: &impl Fn(Atom) -> Atom) -> Value {
        match self {
            Value::Bool(_) => self.clone(),
            Value::Atom(a) => Value::Atom(f(*a)),
            Value::Pair(p) => Value::pair(p.0.map_atoms(f), p.1.map_atoms(f)),
            Value::Set(s) => Value::set_from(s.iter().map(|v| v.map_atoms(f)).collect()),
        }
    }

    pub fn for_each_atom(&self, f: &mut impl FnMut(Atom)) {
        match self {
            Value::Bool(_) => {}
            Value::Atom(a) => f(*a),
            Value::Pair(p) => {
                p.0.for_each_atom(f);
                p.1.for_each_atom(f);
            }
            Value::Set(s) => s.iter().for_each(|v| v.for_each_atom(f)),
        }
    }
}

// Sorted-merge set algebra. All inputs are sets.

pub fn union(a: &[Value], b: &[Value]) -> Vec<Value> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j].clone());
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i].clone());
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

pub fn minus(a: &[Value], b: &[Value]) -> Vec<Value> {
    a.iter()
        .filter(|x| b.binary_search(x).is_err())
        .cloned()
        .collect()
}

pub fn inter(a: &[Value], b: &[Value]) -> Vec<Value> {
    a.iter()
        .filter(|x| b.binary_search(x).is_ok())
        .cloned()
        .collect()
}

pub fn is_subset(a: &[Value], b: &[Value]) -> bool {
    a.len() <= b.len() && a.iter().all(|x| b.binary_search(x).is_ok())
}

pub fn product(a: &[Value], b: &[Value]) -> Vec<Value> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(Value::pair(x.clone(), y.clone()));
        }
    }
    out
}

fn pairs(r: &[Value]) -> impl Iterator<Item = (&Value, &Value)> {
    r.iter().filter_map(Value::as_pair)
}

pub fn dom(r: &[Value]) -> Vec<Value> {
    let mut out: Vec<Value> = pairs(r).map(|(x, _)| x.clone()).collect();
    out.dedup();
    out
}

pub fn ran(r: &[Value]) -> Vec<Value> {
    let mut out: Vec<Value> = pairs(r).map(|(_, y)| y.clone()).collect();
    out.sort();
    out.dedup();
    out
}

/// `s <-| r`
pub fn dom_sub(s: &[Value], r: &[Value]) -> Vec<Value> {
    r.iter()
        .filter(|p| p.as_pair().is_some_and(|(x, _)| s.binary_search(x).is_err()))
        .cloned()
        .collect()
}

/// `s <| r`
pub fn dom_res(s: &[Value], r: &[Value]) -> Vec<Value> {
    r.iter()
        .filter(|p| p.as_pair().is_some_and(|(x, _)| s.binary_search(x).is_ok()))
        .cloned()
        .collect()
}

/// `f <+ g`: pairs of `f` whose first component is outside `dom(g)`, plus `g`.
pub fn override_(f: &[Value], g: &[Value]) -> Vec<Value> {
    let d = dom(g);
    union(&dom_sub(&d, f), g)
}

pub fn inverse(r: &[Value]) -> Vec<Value> {
    let mut out: Vec<Value> = pairs(r).map(|(x, y)| Value::pair(y.clone(), x.clone())).collect();
    out.sort();
    out
}

/// Forward composition `r ; s`.
pub fn compose(r: &[Value], s: &[Value]) -> Vec<Value> {
    let mut out = Vec::new();
    for (x, y) in pairs(r) {
        // `s` is sorted by first component, so its pairs for `y` are contiguous.
        let start = s.partition_point(|p| p.as_pair().is_some_and(|(a, _)| a < y));
        for (a, z) in pairs(&s[start..]) {
            if a != y {
                break;
            }
            out.push(Value::pair(x.clone(), z.clone()));
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Relational image `r[s]`.
pub fn image(r: &[Value], s: &[Value]) -> Vec<Value> {
    let mut out: Vec<Value> = pairs(r)
        .filter(|(x, _)| s.binary_search(x).is_ok())
        .map(|(_, y)| y.clone())
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Values related to `x` by `r`, in order.
pub fn lookup<'a>(r: &'a [Value], x: &Value) -> impl Iterator<Item = &'a Value> + 'a {
    let start = r.partition_point(|p| p.as_pair().is_some_and(|(a, _)| a < x));
    let x = x.clone();
    pairs(&r[start..])
        .take_while(move |(a, _)| **a == x)
        .map(|(_, y)| y)
}

pub fn is_function(r: &[Value]) -> bool {
    r.windows(2).all(|w| match (w[0].as_pair(), w[1].as_pair()) {
        (Some((a, _)), Some((b, _))) => a != b,
        _ => false,
    })
}

pub fn is_injective(r: &[Value]) -> bool {
    let mut seen: Vec<&Value> = pairs(r).map(|(_, y)| y).collect();
    let n = seen.len();
    seen.sort();
    seen.dedup();
    seen.len() == n
}

/// Renders values with carrier names, e.g. `PROGRAM.1` (1-based index).
pub struct Display<'a> {
    pub value: &'a Value,
    pub carriers: &'a [String],
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |v| Display {
            value: v,
            carriers: self.carriers,
        };
        match self.value {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Atom(a) => match self.carriers.get(a.set as usize) {
                Some(name) => write!(f, "{name}.{}", a.index + 1),
                None => write!(f, "#{}.{}", a.set, a.index + 1),
            },
            Value::Pair(p) => write!(f, "{} |-> {}", sub(&p.0), sub_paren(&p.1, self.carriers)),
            Value::Set(s) => {
                f.write_str("{")?;
                for (i, v) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", sub(v))?;
                }
                f.write_str("}")
            }
        }
    }
}

fn sub_paren<'a>(v: &'a Value, carriers: &'a [String]) -> impl fmt::Display + 'a {
    struct P<'a>(&'a Value, &'a [String]);
    impl fmt::Display for P<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let d = Display {
                value: self.0,
                carriers: self.1,
            };
            if matches!(self.0, Value::Pair(_)) {
                write!(f, "({d})")
            } else {
                write!(f, "{d}")
            }
        }
    }
    P(v, carriers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(i: u16) -> Value {
        Value::atom(0, i)
    }
    fn b(i: u16) -> Value {
        Value::atom(1, i)
    }
    fn rel(ps: &[(Value, Value)]) -> Vec<Value> {
        match Value::set_from(ps.iter().map(|(x, y)| Value::pair(x.clone(), y.clone())).collect()) {
            Value::Set(s) => s.to_vec(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn domain_subtraction_drops_pairs() {
        let r = rel(&[(a(0), b(0)), (a(1), b(1))]);
        assert_eq!(dom_sub(&[a(0)], &r), rel(&[(a(1), b(1))]));
    }

    #[test]
    fn override_replaces_image() {
        let r = rel(&[(a(0), b(0))]);
        assert_eq!(override_(&r, &rel(&[(a(0), b(1))])), rel(&[(a(0), b(1))]));
    }

    #[test]
    fn inverse_then_compose() {
        let c = |i| Value::atom(2, i);
        let r1 = rel(&[(c(0), a(0))]);
        let r2 = rel(&[(c(0), b(0))]);
        assert_eq!(compose(&inverse(&r1), &r2), rel(&[(a(0), b(0))]));
    }

    #[test]
    fn image_of_inverse() {
        let works_in = rel(&[(a(0), b(0)), (a(1), b(1))]);
        assert_eq!(image(&inverse(&works_in), &[b(0)]), vec![a(0)]);
    }

    #[test]
    fn display_is_one_based() {
        let names = vec!["A".to_string(), "B".to_string()];
        let v = Value::set_from(vec![Value::pair(a(0), b(1))]);
        let s = Display { value: &v, carriers: &names }.to_string();
        assert_eq!(s, "{A.1 |-> B.2}");
    }
}
