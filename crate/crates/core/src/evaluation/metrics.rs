use crate::error::{CoxError, Result};

fn check_lengths(time: &[f64], event: &[bool], score: &[f64]) -> Result<()> {
    if time.len() != event.len() || time.len() != score.len() {
        return Err(CoxError::Dimension(format!(
            "time/event/score lengths {}/{}/{}",
            time.len(),
            event.len(),
            score.len()
        )));
    }
    if score.iter().chain(time).any(|v| !v.is_finite()) {
        return Err(CoxError::NonFinite("times or scores"));
    }
    Ok(())
}

/// Binary indexed tree over score ranks.
struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks strictly below `rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut total = 0;
        while i > 0 {
            total += self.0[i];
            i -= i & i.wrapping_neg();
        }
        total
    }
}

/// Harrell's concordance index; higher score means higher predicted risk.
///
/// A pair `(i, j)` is comparable when `i` has an observed event and
/// `time_i < time_j`; tied times are never comparable. Comparable pairs score
/// 1 when `score_i > score_j` and 0.5 when the scores tie. No censoring
/// weights are applied. Runs in `O(n log n)`.
pub fn harrell_c_index(time: &[f64], event: &[bool], score: &[f64]) -> Result<f64> {
    check_lengths(time, event, score)?;
    let n = time.len();

    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let mut rank = vec![0usize; n];
    let mut distinct = 0;
    for (pos, &i) in by_score.iter().enumerate() {
        if pos > 0 && score[i] != score[by_score[pos - 1]] {
            distinct += 1;
        }
        rank[i] = distinct;
    }

    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| time[b].total_cmp(&time[a]));

    // Walk times from latest to earliest; the tree holds subjects with strictly later times.
    let mut tree = Fenwick::new(distinct + 1);
    let mut later = 0u64;
    let mut concordant = 0u64;
    let mut tied = 0u64;
    let mut comparable = 0u64;
    let mut start = 0;
    while start < n {
        let t = time[by_time[start]];
        let mut end = start;
        while end < n && time[by_time[end]] == t {
            end += 1;
        }
        for &i in &by_time[start..end] {
            if event[i] {
                let lower = tree.below(rank[i]);
                let lower_or_equal = tree.below(rank[i] + 1);
                concordant += lower;
                tied += lower_or_equal - lower;
                comparable += later;
            }
        }
        for &i in &by_time[start..end] {
            tree.add(rank[i]);
        }
        later += (end - start) as u64;
        start = end;
    }

    if comparable == 0 {
        return Err(CoxError::NoComparablePairs);
    }
    Ok((2 * concordant + tied) as f64 / (2 * comparable) as f64)
}

/// Number of subjects in the top `fraction` of `n`: `ceil(fraction·n)`,
/// ignoring floating-point excess such as `0.15·100 = 15.000000000000002`.
pub fn top_count(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    let rounded = raw.round();
    let m = if (raw - rounded).abs() < 1e-9 { rounded } else { raw.ceil() };
    (m as usize).clamp(1, n)
}

/// Event proportion among the highest-scoring `ceil(fraction·n)` subjects
/// divided by the event proportion over all subjects. Ties in score are
/// broken by subject index (earlier first). `time` only fixes the length
/// contract; the event indicator is used without a horizon.
pub fn top_k_lift(time: &[f64], event: &[bool], score: &[f64], fraction: f64) -> Result<f64> {
    check_lengths(time, event, score)?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CoxError::InvalidArgument(format!("lift fraction {fraction} not in (0, 1)")));
    }
    let n = event.len();
    let total_events = event.iter().filter(|e| **e).count();
    if total_events == 0 {
        return Err(CoxError::InvalidData("no events in the evaluation set".into()));
    }
    let m = top_count(n, fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let top_events = order[..m].iter().filter(|&&i| event[i]).count();
    Ok((top_events as f64 / m as f64) / (total_events as f64 / n as f64))
}
