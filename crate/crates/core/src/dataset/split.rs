use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{DatasetError, ExternalId, Interaction, TitleMap};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub id: ExternalId,
    pub title: Option<String>,
}

/// Dense index spaces for users and items. Indices follow ascending
/// external-id order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Catalog {
    items: Vec<CatalogItem>,
    users: Vec<ExternalId>,
    item_index: HashMap<ExternalId, usize>,
    user_index: HashMap<ExternalId, usize>,
}

impl Catalog {
    pub fn new(users: Vec<ExternalId>, items: Vec<CatalogItem>) -> Self {
        let item_index = items.iter().enumerate().map(|(i, x)| (x.id.clone(), i)).collect();
        let user_index = users.iter().enumerate().map(|(i, x)| (x.clone(), i)).collect();
        Catalog {
            items,
            users,
            item_index,
            user_index,
        }
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn items(&self) -> &[CatalogItem] {
        &self.items
    }

    pub fn users(&self) -> &[ExternalId] {
        &self.users
    }

    pub fn item_index(&self, id: &ExternalId) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    pub fn user_index(&self, id: &ExternalId) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn title(&self, item: usize) -> Option<&str> {
        self.items.get(item).and_then(|x| x.title.as_deref())
    }

    pub fn item_id(&self, item: usize) -> &ExternalId {
        &self.items[item].id
    }

    pub fn user_id(&self, user: usize) -> &ExternalId {
        &self.users[user]
    }
}

/// One user's leave-one-out decomposition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit {
    /// Training items, oldest first.
    pub history: Vec<usize>,
    /// Original ratings, aligned with `history`.
    pub ratings: Vec<u8>,
    /// Third most recent interaction (few-shot exemplar candidate).
    pub val2: usize,
    /// Second most recent interaction (prompt candidate).
    pub val: usize,
    /// Most recent interaction.
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub catalog: Catalog,
    pub users: Vec<UserSplit>,
    /// Shortest training history over all users; prompt windows have this length.
    pub window_len: usize,
}

impl SplitDataset {
    pub fn new(catalog: Catalog, users: Vec<UserSplit>) -> Result<Self, DatasetError> {
        if users.len() != catalog.n_users() {
            return Err(DatasetError::Artifact(format!(
                "{} user splits for {} catalog users",
                users.len(),
                catalog.n_users()
            )));
        }
        let window_len = users.iter().map(|u| u.history.len()).min().unwrap_or(0);
        Ok(SplitDataset {
            catalog,
            users,
            window_len,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.catalog.n_items()
    }

    pub fn user(&self, user: usize) -> &UserSplit {
        &self.users[user]
    }

    /// Training items of `user` as a sorted index set (the binary train row).
    pub fn profile(&self, user: usize) -> Vec<usize> {
        let mut p = self.users[user].history.clone();
        p.sort_unstable();
        p
    }

    /// The `window_len` most recent training items, oldest first.
    pub fn prompt_window(&self, user: usize) -> &[usize] {
        let h = &self.users[user].history;
        &h[h.len() - self.window_len..]
    }

    pub fn title(&self, item: usize) -> Option<&str> {
        self.catalog.title(item)
    }

    pub fn rating(&self, user: usize, item: usize) -> Option<u8> {
        let u = &self.users[user];
        u.history.iter().position(|&i| i == item).map(|p| u.ratings[p])
    }

    /// True when every training rating is 1 (unary feedback source).
    pub fn is_unary(&self) -> bool {
        self.users.iter().all(|u| u.ratings.iter().all(|&r| r == 1))
    }

    /// Training interaction count per item.
    pub fn popularity(&self) -> Vec<u32> {
        let mut pop = vec![0u32; self.n_items()];
        for u in &self.users {
            for &i in &u.history {
                pop[i] += 1;
            }
        }
        pop
    }

    /// Training rows as sorted item-index sets.
    pub fn train_rows(&self) -> Vec<Vec<usize>> {
        (0..self.n_users()).map(|u| self.profile(u)).collect()
    }

    /// Coordinate list of the binary train matrix, row-major.
    pub fn train_coo(&self) -> Vec<(usize, usize)> {
        (0..self.n_users())
            .flat_map(|u| self.profile(u).into_iter().map(move |i| (u, i)))
            .collect()
    }
}

/// Orders each user's interactions by (timestamp, item id) and assigns the
/// most recent to test, the next to validation, the third to the second
/// validation set and the rest to training.
pub fn temporal_split(interactions: &[Interaction], titles: Option<&TitleMap>) -> Result<SplitDataset, DatasetError> {
    let mut per_user: BTreeMap<&ExternalId, Vec<&Interaction>> = BTreeMap::new();
    let mut item_ids: BTreeSet<&ExternalId> = BTreeSet::new();
    for x in interactions {
        per_user.entry(&x.user).or_default().push(x);
        item_ids.insert(&x.item);
    }

    let short: Vec<ExternalId> = per_user
        .iter()
        .filter(|(_, xs)| xs.len() < 4)
        .map(|(u, _)| (*u).clone())
        .collect();
    if !short.is_empty() {
        return Err(DatasetError::TooFewInteractions { users: short });
    }
    if per_user.is_empty() {
        return Err(DatasetError::InvalidArgument("no interactions to split".into()));
    }

    let items: Vec<CatalogItem> = item_ids
        .into_iter()
        .map(|id| CatalogItem {
            id: id.clone(),
            title: titles.and_then(|t| t.get(id).cloned()),
        })
        .collect();
    let users: Vec<ExternalId> = per_user.keys().map(|u| (*u).clone()).collect();
    let catalog = Catalog::new(users, items);

    let splits = per_user
        .into_values()
        .map(|mut xs| {
            xs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.item.cmp(&b.item)));
            let idx = |x: &Interaction| catalog.item_index(&x.item).expect("item interned above");
            let n = xs.len();
            UserSplit {
                history: xs[..n - 3].iter().map(|x| idx(x)).collect(),
                ratings: xs[..n - 3].iter().map(|x| x.rating).collect(),
                val2: idx(xs[n - 3]),
                val: idx(xs[n - 2]),
                test: idx(xs[n - 1]),
            }
        })
        .collect();
    SplitDataset::new(catalog, splits)
}

/// Summary counts for an interaction log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub interactions: usize,
    pub users: usize,
    /// Catalog size: every titled item plus any interacted item without a title.
    pub items: usize,
    pub interacted_items: usize,
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
    /// `1 - interactions / (users * items)`, in percent.
    pub sparsity_pct: f64,
}

impl DatasetStats {
    pub fn compute(interactions: &[Interaction], titles: Option<&TitleMap>) -> Self {
        let mut users: HashMap<&ExternalId, usize> = HashMap::new();
        let mut items: HashMap<&ExternalId, usize> = HashMap::new();
        for x in interactions {
            *users.entry(&x.user).or_default() += 1;
            *items.entry(&x.item).or_default() += 1;
        }
        let catalog = match titles {
            Some(t) => t.len() + items.keys().filter(|id| !t.contains_key(**id)).count(),
            None => items.len(),
        };
        let cells = (users.len() * catalog) as f64;
        DatasetStats {
            interactions: interactions.len(),
            users: users.len(),
            items: catalog,
            interacted_items: items.len(),
            min_user_interactions: users.values().copied().min().unwrap_or(0),
            min_item_interactions: items.values().copied().min().unwrap_or(0),
            sparsity_pct: if cells > 0.0 {
                100.0 * (1.0 - interactions.len() as f64 / cells)
            } else {
                0.0
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(u: &str, i: &str, t: u64) -> Interaction {
        Interaction {
            user: u.into(),
            item: i.into(),
            rating: 3,
            timestamp: t,
        }
    }

    #[test]
    fn direct_ordering() {
        let xs = vec![x("u", "e", 5), x("u", "a", 1), x("u", "c", 3), x("u", "b", 2), x("u", "d", 4)];
        let s = temporal_split(&xs, None).unwrap();
        let id = |i: usize| s.catalog.item_id(i).as_str().to_string();
        let u = s.user(0);
        assert_eq!(u.history.iter().map(|&i| id(i)).collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(id(u.val2), "c");
        assert_eq!(id(u.val), "d");
        assert_eq!(id(u.test), "e");
        assert_eq!(s.window_len, 2);
    }

    #[test]
    fn window_len_is_min_history() {
        let mut xs = Vec::new();
        for t in 0..20 {
            xs.push(x("long", &t.to_string(), t));
        }
        for t in 0..8 {
            xs.push(x("short", &(100 + t).to_string(), t));
        }
        let s = temporal_split(&xs, None).unwrap();
        assert_eq!(s.window_len, 5);
        let long = s.catalog.user_index(&"long".into()).unwrap();
        assert_eq!(s.prompt_window(long), &s.user(long).history[12..]);
    }

    #[test]
    fn timestamp_ties_break_on_item_id() {
        let xs = vec![x("u", "1", 1), x("u", "2", 2), x("u", "3", 3), x("u", "20", 9), x("u", "9", 9)];
        // oracle: stable sort on (timestamp, numeric id)
        let mut oracle = xs.clone();
        oracle.sort_by_key(|r| (r.timestamp, r.item.as_str().parse::<u32>().unwrap()));
        let s = temporal_split(&xs, None).unwrap();
        assert_eq!(s.catalog.item_id(s.user(0).test), &oracle[4].item);
        assert_eq!(s.catalog.item_id(s.user(0).test).as_str(), "20");
        assert_eq!(s.catalog.item_id(s.user(0).val).as_str(), "9");
    }

    #[test]
    fn short_users_listed() {
        let xs = vec![x("a", "1", 1), x("a", "2", 2), x("a", "3", 3)];
        match temporal_split(&xs, None) {
            Err(DatasetError::TooFewInteractions { users }) => assert_eq!(users, vec![ExternalId::from("a")]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stats_counts_titles() {
        let xs = vec![x("a", "1", 1), x("b", "1", 2), x("b", "2", 2)];
        let mut titles = TitleMap::new();
        titles.insert("1".into(), "One".into());
        titles.insert("5".into(), "Five".into());
        let st = DatasetStats::compute(&xs, Some(&titles));
        assert_eq!(st.items, 3);
        assert_eq!(st.interacted_items, 2);
        assert!((st.sparsity_pct - 100.0 * (1.0 - 3.0 / 6.0)).abs() < 1e-12);
    }
}
