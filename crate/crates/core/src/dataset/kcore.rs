use std::collections::HashMap;

use super::{DatasetError, ExternalId, Interaction};

/// Peels users with fewer than `user_min` interactions and items with fewer
/// than `item_min` until nothing changes. The fixpoint is the maximal
/// sub-log satisfying both bounds, so the peeling order does not matter.
/// Surviving rows keep their input order.
pub fn kcore_filter(
    interactions: &[Interaction],
    user_min: usize,
    item_min: usize,
) -> Result<Vec<Interaction>, DatasetError> {
    if user_min == 0 || item_min == 0 {
        return Err(DatasetError::InvalidArgument(format!(
            "k-core thresholds must be >= 1 (got user_min={user_min}, item_min={item_min})"
        )));
    }

    fn intern<'a>(ids: &mut HashMap<&'a ExternalId, usize>, id: &'a ExternalId) -> usize {
        let next = ids.len();
        *ids.entry(id).or_insert(next)
    }

    let mut user_ids = HashMap::new();
    let mut item_ids = HashMap::new();
    let edges: Vec<(usize, usize)> = interactions
        .iter()
        .map(|x| (intern(&mut user_ids, &x.user), intern(&mut item_ids, &x.item)))
        .collect();

    let mut user_edges = vec![Vec::new(); user_ids.len()];
    let mut item_edges = vec![Vec::new(); item_ids.len()];
    for (e, &(u, i)) in edges.iter().enumerate() {
        user_edges[u].push(e);
        item_edges[i].push(e);
    }
    let mut user_deg: Vec<usize> = user_edges.iter().map(Vec::len).collect();
    let mut item_deg: Vec<usize> = item_edges.iter().map(Vec::len).collect();
    let mut alive = vec![true; edges.len()];
    let mut user_gone = vec![false; user_deg.len()];
    let mut item_gone = vec![false; item_deg.len()];

    // Node ids: users are `u`, items are `n_users + i`.
    let n_users = user_deg.len();
    let mut queue: Vec<usize> = (0..n_users)
        .filter(|&u| user_deg[u] < user_min)
        .chain((0..item_deg.len()).filter(|&i| item_deg[i] < item_min).map(|i| n_users + i))
        .collect();

    while let Some(node) = queue.pop() {
        let incident = if node < n_users {
            if user_gone[node] {
                continue;
            }
            user_gone[node] = true;
            &user_edges[node]
        } else {
            let i = node - n_users;
            if item_gone[i] {
                continue;
            }
            item_gone[i] = true;
            &item_edges[i]
        };
        for &e in incident {
            if !alive[e] {
                continue;
            }
            alive[e] = false;
            let (u, i) = edges[e];
            user_deg[u] -= 1;
            item_deg[i] -= 1;
            if !user_gone[u] && user_deg[u] < user_min {
                queue.push(u);
            }
            if !item_gone[i] && item_deg[i] < item_min {
                queue.push(n_users + i);
            }
        }
    }

    let kept: Vec<Interaction> = interactions
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(x, _)| x.clone())
        .collect();
    if kept.is_empty() {
        return Err(DatasetError::EmptyAfterKcore { user_min, item_min });
    }
    Ok(kept)
}
