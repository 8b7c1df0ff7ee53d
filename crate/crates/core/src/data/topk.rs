//! Bounded top-k selection ordered by score descending, then external id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::Scalar;

/// A scored row of some index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit<S> {
    pub index: usize,
    pub score: S,
}

/// `Less` when `a` ranks before `b`: higher score first, ties by ascending id.
#[inline]
pub fn rank_order<S: PartialOrd>(a_score: S, a_id: &str, b_score: S, b_id: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_id.cmp(b_id))
}

struct Entry<'a, S> {
    score: S,
    id: &'a str,
    index: usize,
}

impl<S: PartialOrd> PartialEq for Entry<'_, S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<S: PartialOrd> Eq for Entry<'_, S> {}
impl<S: PartialOrd> PartialOrd for Entry<'_, S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
// Greater = ranks later, so the heap top is the current worst entry.
impl<S: PartialOrd> Ord for Entry<'_, S> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&self.score, self.id, &other.score, other.id)
    }
}

/// Collects the best `k` hits seen so far.
pub struct TopK<'a, S> {
    k: usize,
    ids: &'a [String],
    heap: BinaryHeap<Entry<'a, S>>,
}

impl<'a, S: Scalar> TopK<'a, S> {
    pub fn new(k: usize, ids: &'a [String]) -> Self {
        Self {
            k,
            ids,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, index: usize, score: S) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push(Entry {
                score,
                id: &self.ids[index],
                index,
            });
            return;
        }
        let worst = self.heap.peek().expect("heap is full");
        // Fast reject without touching the id.
        if score < worst.score {
            return;
        }
        let id = &self.ids[index];
        if rank_order(score, id, worst.score, worst.id) == Ordering::Less {
            self.heap.pop();
            self.heap.push(Entry { score, id, index });
        }
    }

    pub fn into_sorted(self) -> Vec<Hit<S>> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| Hit {
                index: e.index,
                score: e.score,
            })
            .collect()
    }
}

/// Sorts hits into rank order.
pub fn sort_hits<S: Scalar>(hits: &mut [Hit<S>], ids: &[String]) {
    hits.sort_by(|a, b| rank_order(a.score, &ids[a.index], b.score, &ids[b.index]));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::matrix::sequential_ids;

    #[test]
    fn keeps_best_with_id_ties() {
        let ids = vec!["b".to_string(), "a".into(), "c".into(), "d".into()];
        let mut t = TopK::new(2, &ids);
        for (i, s) in [1.0f32, 1.0, 0.5, 2.0].into_iter().enumerate() {
            t.push(i, s);
        }
        let got: Vec<usize> = t.into_sorted().iter().map(|h| h.index).collect();
        assert_eq!(got, [3, 1]);
    }

    #[test]
    fn matches_full_sort() {
        let ids = sequential_ids("x", 500);
        let scores: Vec<f64> = (0..500).map(|i| ((i * 7919) % 37) as f64).collect();
        let mut t = TopK::new(25, &ids);
        for (i, s) in scores.iter().enumerate() {
            t.push(i, *s);
        }
        let mut all: Vec<Hit<f64>> = scores.iter().enumerate().map(|(i, &s)| Hit { index: i, score: s }).collect();
        sort_hits(&mut all, &ids);
        assert_eq!(t.into_sorted(), all[..25].to_vec());
    }
}
