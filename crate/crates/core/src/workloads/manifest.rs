//! Web page model: objects with sizes, render-critical flags and the object
//! whose completion makes them discoverable.
//!
//! The file format is CSV with the header
//! `id,size_bytes,render_critical,discovered_by`. `discovered_by` is empty for
//! the single root object and otherwise names another object's id.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_MANIFEST: &str = include_str!("../../data/default_manifest.csv");

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed manifest: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest has no objects")]
    Empty,
    #[error("manifest needs exactly one root object, found {0}")]
    RootCount(usize),
    #[error("object id {0} appears more than once")]
    DuplicateId(u32),
    #[error("object {id} is discovered by unknown object {parent}")]
    UnknownParent { id: u32, parent: u32 },
    #[error("object {0} has zero size")]
    ZeroSize(u32),
    #[error("object {0} is unreachable from the root (discovery cycle)")]
    Unreachable(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    pub size_bytes: u64,
    pub render_critical: bool,
    pub discovered_by: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageManifest {
    objects: Vec<ObjectSpec>,
}

impl PageManifest {
    pub fn new(objects: Vec<ObjectSpec>) -> Result<Self, ManifestError> {
        if objects.is_empty() {
            return Err(ManifestError::Empty);
        }
        let mut ids = BTreeSet::new();
        for o in &objects {
            if !ids.insert(o.id) {
                return Err(ManifestError::DuplicateId(o.id));
            }
            if o.size_bytes == 0 {
                return Err(ManifestError::ZeroSize(o.id));
            }
        }
        let roots: Vec<_> = objects.iter().filter(|o| o.discovered_by.is_none()).collect();
        if roots.len() != 1 {
            return Err(ManifestError::RootCount(roots.len()));
        }
        let mut children: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for o in &objects {
            if let Some(parent) = o.discovered_by {
                if !ids.contains(&parent) {
                    return Err(ManifestError::UnknownParent { id: o.id, parent });
                }
                children.entry(parent).or_default().push(o.id);
            }
        }
        // every object has one parent, so full reachability from the root
        // rules out cycles
        let mut seen = BTreeSet::from([roots[0].id]);
        let mut stack = vec![roots[0].id];
        while let Some(id) = stack.pop() {
            for &c in children.get(&id).into_iter().flatten() {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        if let Some(o) = objects.iter().find(|o| !seen.contains(&o.id)) {
            return Err(ManifestError::Unreachable(o.id));
        }
        Ok(PageManifest { objects })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ManifestError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let objects = rdr
            .deserialize::<ObjectSpec>()
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(objects)
    }

    pub fn from_path(path: &Path) -> Result<Self, ManifestError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// The committed 75-object, 880,000-byte page.
    pub fn default_manifest() -> Self {
        Self::from_reader(DEFAULT_MANIFEST.as_bytes()).expect("bundled manifest is valid")
    }

    /// A page consisting of the root object alone.
    pub fn single(size_bytes: u64) -> Self {
        Self::new(vec![ObjectSpec {
            id: 0,
            size_bytes,
            render_critical: true,
            discovered_by: None,
        }])
        .expect("single object manifest is valid")
    }

    pub fn objects(&self) -> &[ObjectSpec] {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn root(&self) -> &ObjectSpec {
        self.objects
            .iter()
            .find(|o| o.discovered_by.is_none())
            .expect("validated")
    }

    pub fn get(&self, id: u32) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn total_bytes(&self) -> u64 {
        self.objects.iter().map(|o| o.size_bytes).sum()
    }

    /// Objects discovered by `id`, in manifest order.
    pub fn discovered_by(&self, id: u32) -> impl Iterator<Item = &ObjectSpec> {
        self.objects
            .iter()
            .filter(move |o| o.discovered_by == Some(id))
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), ManifestError> {
        let mut w = csv::Writer::from_writer(writer);
        for o in &self.objects {
            w.serialize(o)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_page_shape() {
        let m = PageManifest::default_manifest();
        assert_eq!(m.len(), 75);
        assert_eq!(m.total_bytes(), 880_000);
        assert_eq!(m.objects().iter().filter(|o| o.render_critical).count(), 3);
        assert_eq!(m.root().size_bytes, 30_000);
        let rest: Vec<u64> = m.objects()[3..].iter().map(|o| o.size_bytes).collect();
        assert!(rest.windows(2).all(|w| w[0] >= w[1]), "sizes descend");
    }

    #[test]
    fn rejects_bad_graphs() {
        let two_roots = "id,size_bytes,render_critical,discovered_by\n0,10,true,\n1,10,false,\n";
        assert!(matches!(
            PageManifest::from_reader(two_roots.as_bytes()),
            Err(ManifestError::RootCount(2))
        ));
        let cycle = "id,size_bytes,render_critical,discovered_by\n0,10,true,\n1,10,false,2\n2,10,false,1\n";
        assert!(matches!(
            PageManifest::from_reader(cycle.as_bytes()),
            Err(ManifestError::Unreachable(1))
        ));
        let dangling = "id,size_bytes,render_critical,discovered_by\n0,10,true,\n1,10,false,9\n";
        assert!(matches!(
            PageManifest::from_reader(dangling.as_bytes()),
            Err(ManifestError::UnknownParent { id: 1, parent: 9 })
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let m = PageManifest::default_manifest();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(PageManifest::from_reader(buf.as_slice()).unwrap(), m);
    }
}
