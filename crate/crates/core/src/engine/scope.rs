use std::collections::{BTreeMap, HashMap};

use super::value::Value;
use super::EngineError;
use crate::ast::ConstantDef;
use crate::resolve::ResolvedChain;

pub const DEFAULT_CLASS_BOUND: usize = 2;
pub const DEFAULT_VALUE_BOUND: usize = 3;

/// Instance count per carrier set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Scope {
    pub bounds: BTreeMap<String, usize>,
}

impl Scope {
    /// 2 for carriers that supply class instances, 3 for value carriers.
    pub fn default_for(chain: &ResolvedChain) -> Scope {
        let classes = chain.class_carriers();
        let bounds = chain
            .carriers()
            .into_iter()
            .map(|c| {
                let n = if classes.contains(&c) {
                    DEFAULT_CLASS_BOUND
                } else {
                    DEFAULT_VALUE_BOUND
                };
                (c, n)
            })
            .collect();
        Scope { bounds }
    }

    pub fn uniform(chain: &ResolvedChain, k: usize) -> Scope {
        Scope {
            bounds: chain.carriers().into_iter().map(|c| (c, k)).collect(),
        }
    }

    pub fn set(&mut self, carrier: &str, n: usize) -> Result<(), EngineError> {
        match self.bounds.get_mut(carrier) {
            Some(b) => {
                *b = n;
                Ok(())
            }
            None => Err(EngineError::UnknownCarrier(carrier.to_string())),
        }
    }

    pub fn with(mut self, carrier: &str, n: usize) -> Result<Scope, EngineError> {
        self.set(carrier, n)?;
        Ok(self)
    }

    pub fn bound(&self, carrier: &str) -> usize {
        self.bounds.get(carrier).copied().unwrap_or(0)
    }
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.bounds.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Carrier sets of a chain instantiated under a scope.
#[derive(Clone, Debug)]
pub struct Universe {
    pub carriers: Vec<String>,
    pub bounds: Vec<u16>,
    /// Carrier contains atoms named by constants, so its atoms are not
    /// interchangeable.
    pub pinned: Vec<bool>,
    pub constants: HashMap<String, Value>,
    ids: HashMap<String, u16>,
}

impl Universe {
    pub fn new(chain: &ResolvedChain, scope: &Scope) -> Result<Universe, EngineError> {
        let carriers = chain.carriers();
        if carriers.len() > u16::MAX as usize {
            return Err(EngineError::Scope("too many carrier sets".into()));
        }
        let mut bounds = Vec::new();
        for c in &carriers {
            let b = scope.bound(c);
            if b > 64 {
                return Err(EngineError::Scope(format!("bound {b} for {c} is too large")));
            }
            bounds.push(b as u16);
        }
        let ids: HashMap<String, u16> = carriers
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i as u16))
            .collect();
        let mut u = Universe {
            pinned: vec![false; carriers.len()],
            carriers,
            bounds,
            constants: HashMap::new(),
            ids,
        };
        // Atom constants take consecutive indices of their carrier, in
        // declaration order; they are distinct by convention.
        let mut next: HashMap<u16, u16> = HashMap::new();
        for k in chain.constants() {
            let v = match &k.def {
                ConstantDef::Atom(set) => {
                    let id = u.id(set).ok_or_else(|| EngineError::UnknownCarrier(set.clone()))?;
                    let n = next.entry(id).or_insert(0);
                    if *n >= u.bounds[id as usize] {
                        return Err(EngineError::Scope(format!(
                            "constant {} needs at least {} atoms in {set}",
                            k.name,
                            *n + 1
                        )));
                    }
                    u.pinned[id as usize] = true;
                    let v = Value::atom(id, *n);
                    *n += 1;
                    v
                }
                ConstantDef::Set(e) => {
                    let compiled = super::compile::compile_static(e, &u)?;
                    let v = super::eval::eval(&compiled, &[], &mut Vec::new())?;
                    let mut pins = Vec::new();
                    v.for_each_atom(&mut |a| pins.push(a.set));
                    for p in pins {
                        u.pinned[p as usize] = true;
                    }
                    v
                }
            };
            u.constants.insert(k.name.clone(), v);
        }
        Ok(u)
    }

    pub fn id(&self, carrier: &str) -> Option<u16> {
        self.ids.get(carrier).copied()
    }

    pub fn carrier_value(&self, id: u16) -> Value {
        Value::set_sorted((0..self.bounds[id as usize]).map(|i| Value::atom(id, i)).collect())
    }

    pub fn display<'a>(&'a self, v: &'a Value) -> super::value::Display<'a> {
        super::value::Display {
            value: v,
            carriers: &self.carriers,
        }
    }

    /// Parse an atom written as `CARRIER.k` (1-based).
    pub fn parse_atom(&self, s: &str) -> Option<Value> {
        let (set, idx) = s.rsplit_once('.')?;
        let id = self.id(set)?;
        let k: u16 = idx.parse().ok()?;
        (k >= 1 && k <= self.bounds[id as usize]).then(|| Value::atom(id, k - 1))
    }
}
