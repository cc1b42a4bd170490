//! Levenshtein distance and the windowed partial ratio used for seed
//! matching. Both operate on Unicode scalar values.

/// Edit distance with unit insert/delete/substitute costs.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut cur = vec![0; a.len() + 1];
    for (j, &cb) in b.iter().enumerate() {
        cur[0] = j + 1;
        for (i, &ca) in a.iter().enumerate() {
            let sub = prev[i] + usize::from(ca != cb);
            cur[i + 1] = sub.min(prev[i + 1] + 1).min(cur[i] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[a.len()]
}

/// Best window similarity of the shorter string against every equally long
/// window of the longer one, as an integer percentage.
///
/// A window scores `1 - lev/len`; the best score is scaled to 0–100 and
/// rounded half-up. 100 is reserved for an exact substring (or an empty
/// shorter string), so near-misses on very long strings report 99.
pub fn partial_ratio(a: &str, b: &str) -> u8 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let n = short.len();
    if n == 0 {
        return 100;
    }
    let mut best = usize::MAX;
    for window in long.windows(n) {
        let d = levenshtein(&short, window);
        best = best.min(d);
        if d == 0 {
            return 100;
        }
    }
    let (num, den) = (200 * (n - best) + n, 2 * n);
    ((num / den) as u8).min(99)
}
