//! Sparse interaction data for the recommenders: (user, item, count)
//! triples, optional item permission profiles, and (user, item, context,
//! count) quads. External string ids are re-indexed to dense 0-based
//! integers; the id maps travel with the dataset so they can be persisted.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::split::split_indices;
use crate::ingest::table::{read_csv, TableWriter};

/// Interns string ids into dense indices in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    /// Rebuild from an id list whose position is the dense index.
    pub fn from_ids(ids: Vec<String>) -> Self {
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        IdMap { ids, index }
    }

    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// (user, item, count) triples with unique (user, item) keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTriples {
    pub users: IdMap,
    pub items: IdMap,
    pub triples: Vec<(usize, usize, u64)>,
}

impl RatingsTriples {
    pub fn new(users: IdMap, items: IdMap, triples: Vec<(usize, usize, u64)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(u, i, _) in &triples {
            if u >= users.len() || i >= items.len() {
                return Err(Error::Dimension(format!(
                    "triple ({u}, {i}) out of range"
                )));
            }
            if !seen.insert((u, i)) {
                return Err(Error::Invariant(format!(
                    "duplicate rating key (user {:?}, item {:?})",
                    users.name(u),
                    items.name(i)
                )));
            }
        }
        Ok(RatingsTriples {
            users,
            items,
            triples,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Deterministic split over (user, item) keys. Both sides keep the full
    /// id maps so indices stay comparable.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let (a, b) = split_indices(self.triples.len(), fraction, seed)?;
        let take = |idx: &[usize]| RatingsTriples {
            users: self.users.clone(),
            items: self.items.clone(),
            triples: idx.iter().map(|&i| self.triples[i]).collect(),
        };
        Ok((take(&a), take(&b)))
    }
}

/// Load `ratings.csv` (user_id, item_id, count).
pub fn load_ratings(path: &Path) -> Result<RatingsTriples> {
    let file = read_csv(path)?;
    file.expect_header(&["user_id", "item_id", "count"])?;
    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut triples = Vec::with_capacity(file.len());
    for i in 0..file.len() {
        let u = users.intern(&file.identifier(i, 0)?);
        let it = items.intern(&file.identifier(i, 1)?);
        let c = file.count(i, 2)?;
        triples.push((u, it, c));
    }
    RatingsTriples::new(users, items, triples)
}

pub fn write_ratings(r: &RatingsTriples, path: &Path) -> Result<()> {
    let mut w = TableWriter::create(path, &["user_id", "item_id", "count"])?;
    for &(u, i, c) in &r.triples {
        w.write_row([
            r.users.name(u).to_string(),
            r.items.name(i).to_string(),
            c.to_string(),
        ])?;
    }
    w.finish()
}

/// Per-item permission sets; indexed by the item indices of the ratings
/// catalog it was loaded against.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyMap {
    pub permissions: IdMap,
    /// item index -> sorted permission indices
    pub item_permissions: Vec<Vec<usize>>,
}

impl PrivacyMap {
    pub fn empty(n_items: usize) -> Self {
        PrivacyMap {
            permissions: IdMap::default(),
            item_permissions: vec![Vec::new(); n_items],
        }
    }

    pub fn permissions_of(&self, item: usize) -> &[usize] {
        &self.item_permissions[item]
    }
}

/// Load `privacy.csv` (item_id, permission_id) against an existing catalog.
pub fn load_privacy(path: &Path, catalog: &RatingsTriples) -> Result<PrivacyMap> {
    let file = read_csv(path)?;
    file.expect_header(&["item_id", "permission_id"])?;
    let mut permissions = IdMap::default();
    let mut item_permissions = vec![BTreeSet::new(); catalog.n_items()];
    for i in 0..file.len() {
        let item_id = file.identifier(i, 0)?;
        let item = catalog.items.get(&item_id).ok_or_else(|| Error::Cell {
            path: path.to_path_buf(),
            row: i + 1,
            column: "item_id".into(),
            message: format!("item {item_id:?} not in ratings catalog"),
        })?;
        let perm = permissions.intern(&file.identifier(i, 1)?);
        item_permissions[item].insert(perm);
    }
    Ok(PrivacyMap {
        permissions,
        item_permissions: item_permissions
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect(),
    })
}

pub fn write_privacy(p: &PrivacyMap, catalog: &RatingsTriples, path: &Path) -> Result<()> {
    let mut w = TableWriter::create(path, &["item_id", "permission_id"])?;
    for (item, perms) in p.item_permissions.iter().enumerate() {
        for &s in perms {
            w.write_row([
                catalog.items.name(item).to_string(),
                p.permissions.name(s).to_string(),
            ])?;
        }
    }
    w.finish()
}

/// (user, item, context, count) quads with unique keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextQuads {
    pub users: IdMap,
    pub items: IdMap,
    pub contexts: IdMap,
    pub quads: Vec<(usize, usize, usize, u64)>,
}

impl ContextQuads {
    pub fn new(
        users: IdMap,
        items: IdMap,
        contexts: IdMap,
        quads: Vec<(usize, usize, usize, u64)>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(u, i, c, _) in &quads {
            if !seen.insert((u, i, c)) {
                return Err(Error::Invariant(format!(
                    "duplicate rating key (user {:?}, item {:?}, context {:?})",
                    users.name(u),
                    items.name(i),
                    contexts.name(c)
                )));
            }
        }
        Ok(ContextQuads {
            users,
            items,
            contexts,
            quads,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }
}

/// Load `context.csv` (user_id, item_id, context_id, count).
pub fn load_context(path: &Path) -> Result<ContextQuads> {
    let file = read_csv(path)?;
    file.expect_header(&["user_id", "item_id", "context_id", "count"])?;
    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut contexts = IdMap::default();
    let mut quads = Vec::with_capacity(file.len());
    for i in 0..file.len() {
        let u = users.intern(&file.identifier(i, 0)?);
        let it = items.intern(&file.identifier(i, 1)?);
        let c = contexts.intern(&file.identifier(i, 2)?);
        let count = file.count(i, 3)?;
        quads.push((u, it, c, count));
    }
    ContextQuads::new(users, items, contexts, quads)
}

pub fn write_context(q: &ContextQuads, path: &Path) -> Result<()> {
    let mut w = TableWriter::create(path, &["user_id", "item_id", "context_id", "count"])?;
    for &(u, i, c, count) in &q.quads {
        w.write_row([
            q.users.name(u).to_string(),
            q.items.name(i).to_string(),
            q.contexts.name(c).to_string(),
            count.to_string(),
        ])?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triples_of(rows: &[(&str, &str, u64)]) -> RatingsTriples {
        let mut users = IdMap::default();
        let mut items = IdMap::default();
        let triples = rows
            .iter()
            .map(|(u, i, c)| (users.intern(u), items.intern(i), *c))
            .collect();
        RatingsTriples::new(users, items, triples).unwrap()
    }

    #[test]
    fn ids_are_dense_in_first_appearance_order() {
        let r = triples_of(&[("beth", "chess", 3), ("abe", "chess", 1), ("beth", "go", 2)]);
        assert_eq!(r.users.ids(), &["beth".to_string(), "abe".to_string()]);
        assert_eq!(r.items.ids(), &["chess".to_string(), "go".to_string()]);
        assert_eq!(r.triples, vec![(0, 0, 3), (1, 0, 1), (0, 1, 2)]);
    }

    #[test]
    fn duplicate_key_rejected() {
        let mut users = IdMap::default();
        let mut items = IdMap::default();
        let u = users.intern("u");
        let i = items.intern("i");
        let err = RatingsTriples::new(users, items, vec![(u, i, 1), (u, i, 2)]).unwrap_err();
        assert!(err.to_string().contains("duplicate rating key"), "{err}");
    }

    #[test]
    fn split_partitions_keys() {
        let r = triples_of(&[
            ("u1", "a", 1),
            ("u1", "b", 2),
            ("u2", "a", 3),
            ("u2", "c", 4),
            ("u3", "b", 5),
        ]);
        let (train, test) = r.split(0.6, 7).unwrap();
        assert_eq!(train.triples.len() + test.triples.len(), 5);
        for t in &test.triples {
            assert!(!train.triples.contains(t));
        }
        // id maps preserved on both sides
        assert_eq!(train.users, r.users);
        assert_eq!(test.items, r.items);
    }
}
