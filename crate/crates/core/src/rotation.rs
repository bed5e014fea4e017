//! Least-rotation canonicalization (Booth's algorithm).

/// Index `k` such that the rotation of `s` starting at `k` is lexicographically
/// least among all rotations. Runs in O(n) time and O(n) space (Booth's
/// algorithm over the doubled word's failure function). Returns 0 for the
/// empty slice.
pub fn least_rotation_index<T: Ord>(s: &[T]) -> usize {
    let n = s.len();
    if n <= 1 {
        return 0;
    }
    let at = |i: usize| &s[i % n];
    // f[j] = failure-function value for position j of the doubled word,
    // relative to the current candidate start k; -1 means "no border".
    let mut f = vec![-1isize; 2 * n];
    let mut k = 0usize;
    for j in 1..2 * n {
        let sj = at(j);
        let mut i = f[j - k - 1];
        while i != -1 && sj != at(k + i as usize + 1) {
            if sj < at(k + i as usize + 1) {
                k = j - i as usize - 1;
            }
            i = f[i as usize];
        }
        if i == -1 && sj != at(k) {
            if sj < at(k) {
                k = j;
            }
            f[j - k] = -1;
        } else if i == -1 {
            f[j - k] = 0;
        } else {
            f[j - k] = i + 1;
        }
    }
    k
}

/// Reference implementation: compare all rotations directly. O(n^2); used by
/// tests as an oracle for [`least_rotation_index`].
#[cfg(test)]
fn least_rotation_index_naive<T: Ord>(s: &[T]) -> usize {
    let n = s.len();
    if n <= 1 {
        return 0;
    }
    let rotation = |k: usize| (0..n).map(move |i| &s[(k + i) % n]);
    (1..n).fold(0, |best, k| {
        if rotation(k).lt(rotation(best)) {
            k
        } else {
            best
        }
    })
}
