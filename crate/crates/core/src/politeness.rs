//! Request ordering and per-host concurrency limits.

use std::collections::{HashMap, HashSet};
use std::sync::{Condvar, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::url_norm::host_key;

/// Shuffles `urls` with `seed`, then repairs the order so that no two
/// neighbours share a host whenever such an order exists.
///
/// The repair walks left to right. At each position it keeps the current
/// element if it is admissible, otherwise swaps in the nearest later element
/// that is. An element is admissible when its host differs from the previous
/// one and the remaining multiset can still be arranged without adjacent
/// repeats. When no valid arrangement exists at all, the shuffled order is
/// returned untouched.
pub fn politeness_order(urls: &[String], seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = urls.to_vec();
    out.shuffle(&mut rng);

    let hosts: Vec<String> = out.iter().map(|u| host_key(u)).collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for h in &hosts {
        *counts.entry(h.as_str()).or_default() += 1;
    }
    if !feasible(&counts, None, out.len()) {
        return out;
    }

    let mut order: Vec<usize> = (0..out.len()).collect();
    let mut prev: Option<&str> = None;
    for pos in 0..order.len() {
        let remaining = order.len() - pos;
        let pick = (pos..order.len()).find(|&j| {
            let host = hosts[order[j]].as_str();
            if prev == Some(host) {
                return false;
            }
            let mut rest = counts.clone();
            *rest.get_mut(host).unwrap() -= 1;
            feasible(&rest, Some(host), remaining - 1)
        });
        // Feasibility holds inductively, so a pick always exists.
        let pick = pick.unwrap_or(pos);
        order.swap(pos, pick);
        let host = hosts[order[pos]].as_str();
        *counts.get_mut(host).unwrap() -= 1;
        prev = Some(host);
    }
    order.into_iter().map(|i| out[i].clone()).collect()
}

/// Whether `total` items with per-host `counts` can be laid out with no two
/// neighbours sharing a host, given that the item before them had host
/// `prev`.
fn feasible(counts: &HashMap<&str, usize>, prev: Option<&str>, total: usize) -> bool {
    counts.iter().all(|(host, &c)| {
        if Some(*host) == prev {
            // cannot take the first slot
            c <= total / 2
        } else {
            c <= total.div_ceil(2)
        }
    })
}

/// Whether any two neighbours in `urls` share a host.
pub fn has_adjacent_same_host(urls: &[String]) -> bool {
    urls.windows(2).any(|w| host_key(&w[0]) == host_key(&w[1]))
}

/// Runs `task` over `items` on up to `max_concurrency` threads, never running
/// two items with the same host key at once.
///
/// Items are started in input order, skipping over items whose host is busy.
/// Results come back in input order regardless of completion order.
pub fn polite_map<T, R, H, F>(items: &[T], max_concurrency: usize, host_of: H, task: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    H: Fn(&T) -> String + Sync,
    F: Fn(&T) -> R + Sync,
{
    let workers = max_concurrency.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(&task).collect();
    }
    let hosts: Vec<String> = items.iter().map(&host_of).collect();
    let scheduler = Scheduler {
        state: Mutex::new(SchedulerState {
            pending: (0..items.len()).collect(),
            busy: HashSet::new(),
        }),
        ready: Condvar::new(),
    };
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                while let Some(idx) = scheduler.acquire(&hosts) {
                    let result = task(&items[idx]);
                    results.lock().unwrap()[idx] = Some(result);
                    scheduler.release(&hosts[idx]);
                }
            });
        }
    });

    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every item is processed exactly once"))
        .collect()
}

struct SchedulerState {
    pending: Vec<usize>,
    busy: HashSet<String>,
}

struct Scheduler {
    state: Mutex<SchedulerState>,
    ready: Condvar,
}

impl Scheduler {
    fn acquire(&self, hosts: &[String]) -> Option<usize> {
        let mut state = self.state.lock().unwrap();
        loop {
            if state.pending.is_empty() {
                return None;
            }
            if let Some(pos) = state.pending.iter().position(|&i| !state.busy.contains(&hosts[i])) {
                let idx = state.pending.remove(pos);
                state.busy.insert(hosts[idx].clone());
                return Some(idx);
            }
            state = self.ready.wait(state).unwrap();
        }
    }

    fn release(&self, host: &str) {
        self.state.lock().unwrap().busy.remove(host);
        self.ready.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    fn urls(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn separates_same_host() {
        let input = urls(&["https://a.org/1", "https://a.org/2", "https://b.org/1"]);
        for seed in 0..50 {
            let out = politeness_order(&input, seed);
            assert_eq!(out[1], "https://b.org/1", "seed {seed}: {out:?}");
        }
    }

    #[test]
    fn single_host_is_just_shuffled() {
        let input = urls(&["https://a.org/1", "https://a.org/2", "https://a.org/3"]);
        let out = politeness_order(&input, 7);
        let mut sorted = out.clone();
        sorted.sort();
        assert_eq!(sorted, input);
    }

    #[test]
    fn trivial_inputs() {
        assert!(politeness_order(&[], 1).is_empty());
        assert_eq!(politeness_order(&urls(&["https://a.org"]), 1), urls(&["https://a.org"]));
    }

    #[test]
    fn deterministic_per_seed() {
        let input: Vec<String> = (0..20).map(|i| format!("https://h{}.org/{i}", i % 4)).collect();
        assert_eq!(politeness_order(&input, 42), politeness_order(&input, 42));
    }

    #[test]
    fn polite_map_preserves_order_and_host_exclusivity() {
        let items: Vec<(String, usize)> = (0..24).map(|i| (format!("h{}", i % 3), i)).collect();
        let in_flight: Vec<AtomicUsize> = (0..3).map(|_| AtomicUsize::new(0)).collect();
        let max_seen = AtomicUsize::new(0);
        let out = polite_map(
            &items,
            8,
            |(h, _)| h.clone(),
            |(h, i)| {
                let slot = &in_flight[h[1..].parse::<usize>().unwrap()];
                let now = slot.fetch_add(1, Ordering::SeqCst) + 1;
                max_seen.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(2));
                slot.fetch_sub(1, Ordering::SeqCst);
                i * 10
            },
        );
        assert_eq!(out, (0..24).map(|i| i * 10).collect::<Vec<_>>());
        assert_eq!(max_seen.load(Ordering::SeqCst), 1);
    }
}
