use std::fmt;
use std::sync::Arc;

use crate::formula::AtomicProp;

/// A set of identity-tagged propositions, kept sorted and deduplicated.
/// Cloning is cheap: the storage is shared.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelSet(Arc<[AtomicProp]>);

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet(Arc::from([]))
    }
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(ap: AtomicProp) -> Self {
        LabelSet(Arc::from([ap]))
    }

    pub fn contains(&self, ap: &AtomicProp) -> bool {
        self.0.binary_search(ap).is_ok()
    }

    pub fn insert(&mut self, ap: AtomicProp) {
        if let Err(at) = self.0.binary_search(&ap) {
            let mut v = self.0.to_vec();
            v.insert(at, ap);
            self.0 = v.into();
        }
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        if other.is_empty() {
            return self.clone();
        }
        self.iter().chain(other.iter()).cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AtomicProp> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<AtomicProp> for LabelSet {
    fn from_iter<I: IntoIterator<Item = AtomicProp>>(iter: I) -> Self {
        let mut v: Vec<AtomicProp> = iter.into_iter().collect();
        v.sort();
        v.dedup();
        LabelSet(v.into())
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, ap) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{ap}")?;
        }
        f.write_str("}")
    }
}
