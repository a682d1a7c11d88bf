use std::collections::BTreeMap;

use crate::exec::kind;
use crate::schema::Schema;

use super::plan::{PExpr, Slot};

/// A stored object's type and the columns it lives in.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ObjType {
    pub node: Schema,
    pub prefix: String,
    /// Nickname of the union alternative this object was reached through.
    pub nickname: Option<String>,
}

impl ObjType {
    pub fn describe(&self) -> String {
        format!("{}@{}", self.node.kind_name(), self.prefix)
    }
}

/// What a variable holds. The runtime value (a number or an object index)
/// lives in the variable's slots.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Binding {
    Scalar,
    Object(ObjType),
    Tuple(Vec<Binding>),
    /// Different bindings on different paths; unusable until reassigned.
    Poisoned,
}

impl Binding {
    pub fn leaves(&self) -> usize {
        match self {
            Binding::Tuple(items) => items.iter().map(Binding::leaves).sum(),
            _ => 1,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Binding::Scalar => "a number".into(),
            Binding::Object(t) => format!("a {}", t.node.kind_name()),
            Binding::Tuple(items) => format!("a {}-tuple", items.len()),
            Binding::Poisoned => "an ambiguous value".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Var {
    pub binding: Binding,
    /// False when some path reaching this point never assigned the name.
    pub definite: bool,
    /// Possible `exec::kind` bits of each scalar leaf.
    pub kinds: Vec<u8>,
}

/// Any scalar kind.
pub(crate) const ANY_KIND: u8 = kind::INT | kind::FLOAT | kind::BOOL | kind::NONE;

impl Var {
    pub fn new(binding: Binding, kinds: Vec<u8>) -> Var {
        Var { binding, definite: true, kinds }
    }

    /// A binding whose scalar leaves could hold anything.
    pub fn unknown(binding: Binding) -> Var {
        let kinds = vec![ANY_KIND; binding.leaves()];
        Var::new(binding, kinds)
    }
}

/// A union known to hold one of `allowed` tags, established by an
/// isinstance guard.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Constraint {
    pub prefix: String,
    pub index: PExpr,
    pub allowed: Vec<u8>,
}

/// One alternative symbol table, live when every assumption holds.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Branch {
    pub vars: BTreeMap<String, Var>,
    /// Hidden tag slot must equal this tag.
    pub assumptions: Vec<(Slot, u8)>,
    pub constraints: Vec<Constraint>,
    /// A `return` has been compiled on this path.
    pub terminated: bool,
}

impl Branch {
    pub fn new() -> Branch {
        Branch { vars: BTreeMap::new(), assumptions: Vec::new(), constraints: Vec::new(), terminated: false }
    }

    /// Forgets guard facts whose index depends on `slot`.
    pub fn invalidate(&mut self, slot: Slot) {
        self.constraints.retain(|c| !c.index.mentions_slot(slot));
    }

    /// Merges the states reaching the end of a block back into one branch
    /// with `parent`'s assumptions.
    pub fn collapse(parent: &Branch, children: &[Branch]) -> Branch {
        let live: Vec<&Branch> = children.iter().filter(|c| !c.terminated).collect();
        if live.is_empty() {
            let mut out = parent.clone();
            out.terminated = true;
            return out;
        }
        let mut vars: BTreeMap<String, Var> = BTreeMap::new();
        let names: std::collections::BTreeSet<&String> = live.iter().flat_map(|c| c.vars.keys()).collect();
        for name in names {
            let mut merged: Option<Var> = None;
            let mut definite = true;
            for c in &live {
                match c.vars.get(name) {
                    None => definite = false,
                    Some(v) => {
                        merged = Some(match merged {
                            None => v.clone(),
                            Some(mut m) if m.binding == v.binding => {
                                m.definite &= v.definite;
                                m.kinds.iter_mut().zip(&v.kinds).for_each(|(a, b)| *a |= b);
                                m
                            }
                            Some(m) => Var { binding: Binding::Poisoned, definite: m.definite && v.definite, kinds: vec![ANY_KIND] },
                        });
                    }
                }
            }
            if let Some(mut v) = merged {
                v.definite &= definite;
                vars.insert(name.clone(), v);
            }
        }
        let constraints = parent
            .constraints
            .iter()
            .filter(|c| live.iter().all(|b| b.constraints.contains(c)))
            .cloned()
            .collect();
        Branch { vars, assumptions: parent.assumptions.clone(), constraints, terminated: false }
    }
}

/// Replaces complete sibling sets that ended up identical by their parent,
/// so compilation does not keep multiplying work after a union is no
/// longer relevant.
pub(crate) fn merge_siblings(branches: &mut Vec<Branch>, base: usize) {
    loop {
        let mut merged = false;
        for i in 0..branches.len() {
            let n = branches[i].assumptions.len();
            if n <= base {
                continue;
            }
            let key = &branches[i].assumptions[..n];
            let (prefix, slot) = (&key[..n - 1], key[n - 1].0);
            let group: Vec<usize> = (0..branches.len())
                .filter(|&j| {
                    let a = &branches[j].assumptions;
                    a.len() >= n && &a[..n - 1] == prefix && a[n - 1].0 == slot
                })
                .collect();
            let first = &branches[group[0]];
            let same = group.iter().all(|&j| {
                let b = &branches[j];
                b.assumptions.len() == n
                    && b.vars == first.vars
                    && b.constraints == first.constraints
                    && b.terminated == first.terminated
            });
            if same && group.len() > 1 {
                let mut keep = branches[group[0]].clone();
                keep.assumptions.truncate(n - 1);
                let mut idx = 0;
                branches.retain(|_| {
                    let drop = group.contains(&idx);
                    idx += 1;
                    !drop
                });
                branches.insert(group[0].min(branches.len()), keep);
                merged = true;
                break;
            }
            if same && group.len() == 1 {
                // the other alternatives were excluded by a guard
                branches[group[0]].assumptions.truncate(n - 1);
                merged = true;
                break;
            }
        }
        if !merged {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(assumptions: Vec<(Slot, u8)>, var: Option<Binding>) -> Branch {
        let mut b = Branch::new();
        b.assumptions = assumptions;
        if let Some(binding) = var {
            b.vars.insert("x".into(), Var::unknown(binding));
        }
        b
    }

    #[test]
    fn identical_siblings_merge() {
        let mut bs = vec![with(vec![(3, 0)], None), with(vec![(3, 1)], None)];
        merge_siblings(&mut bs, 0);
        assert_eq!(bs, vec![Branch::new()]);
    }

    #[test]
    fn different_siblings_stay() {
        let mut bs = vec![with(vec![(3, 0)], Some(Binding::Scalar)), with(vec![(3, 1)], None)];
        merge_siblings(&mut bs, 0);
        assert_eq!(bs.len(), 2);
    }

    #[test]
    fn collapse_marks_partial_assignment() {
        let parent = Branch::new();
        let c = Branch::collapse(&parent, &[with(vec![], Some(Binding::Scalar)), parent.clone()]);
        assert_eq!((&c.vars["x"].binding, c.vars["x"].definite), (&Binding::Scalar, false));
        let other = ObjType { node: Schema::float64(), prefix: "p".into(), nickname: None };
        let c = Branch::collapse(
            &parent,
            &[with(vec![], Some(Binding::Scalar)), with(vec![], Some(Binding::Object(other)))],
        );
        assert_eq!((&c.vars["x"].binding, c.vars["x"].definite), (&Binding::Poisoned, true));
    }
}
