use std::fmt;

/// Maximum number of selectors kept on an access path.
pub const K: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Selector {
    Field(String),
    Extra(String),
    /// Extras entry under a key that is not a literal.
    AnyExtra,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Field(x) => write!(f, ".{x}"),
            Selector::Extra(k) => write!(f, ".extras[{k:?}]"),
            Selector::AnyExtra => f.write_str(".extras[*]"),
        }
    }
}

/// A variable plus at most [`K`] selectors. A truncated path stands for
/// itself and every extension of it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccessPath {
    pub base: String,
    pub fields: Vec<Selector>,
    pub truncated: bool,
}

impl AccessPath {
    pub fn var(base: impl Into<String>) -> Self {
        AccessPath {
            base: base.into(),
            fields: Vec::new(),
            truncated: false,
        }
    }

    /// True when the path designates more than the bare variable value.
    pub fn has_selectors(&self) -> bool {
        !self.fields.is_empty() || self.truncated
    }

    /// Same selectors on a different base.
    pub fn rebase(&self, base: &str) -> AccessPath {
        AccessPath {
            base: base.to_owned(),
            fields: self.fields.clone(),
            truncated: self.truncated,
        }
    }

    /// `new_base.sel.<self selectors>`, truncated at K.
    pub fn prepend(&self, new_base: &str, sel: Selector) -> AccessPath {
        let mut fields = Vec::with_capacity(self.fields.len() + 1);
        fields.push(sel);
        fields.extend(self.fields.iter().cloned());
        let mut truncated = self.truncated;
        if fields.len() > K {
            fields.truncate(K);
            truncated = true;
        }
        AccessPath {
            base: new_base.to_owned(),
            fields,
            truncated,
        }
    }

    /// Reads `self.base.<sel>` into `dst`: returns the resulting path if
    /// this fact covers that location. `sel_any` makes any extras key match.
    pub fn project(&self, sel: &Selector, dst: &str) -> Option<AccessPath> {
        match self.fields.first() {
            None => {
                // Whole object tainted: every part of it is.
                Some(AccessPath {
                    base: dst.to_owned(),
                    fields: vec![],
                    truncated: self.truncated,
                })
            }
            Some(first) => {
                let hit = match (first, sel) {
                    (Selector::Field(a), Selector::Field(b)) => a == b,
                    (Selector::Extra(a), Selector::Extra(b)) => a == b,
                    (Selector::Extra(_) | Selector::AnyExtra, Selector::AnyExtra) => true,
                    (Selector::AnyExtra, Selector::Extra(_)) => true,
                    _ => false,
                };
                hit.then(|| AccessPath {
                    base: dst.to_owned(),
                    fields: self.fields[1..].to_vec(),
                    truncated: self.truncated,
                })
            }
        }
    }

    /// True if a strong write to `base.sel` overwrites this path entirely.
    pub fn killed_by_write(&self, base: &str, sel: &Selector) -> bool {
        self.base == base
            && match (self.fields.first(), sel) {
                (Some(Selector::Field(a)), Selector::Field(b)) => a == b,
                (Some(Selector::Extra(a)), Selector::Extra(b)) => a == b,
                _ => false,
            }
    }
}

impl fmt::Display for AccessPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base)?;
        for s in &self.fields {
            write!(f, "{s}")?;
        }
        if self.truncated {
            f.write_str(".*")?;
        }
        Ok(())
    }
}
