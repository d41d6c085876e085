use crate::error::{invalid, Result};

/// Classic false-positive bound `(1 - (1 - 1/m)^(a u))^a`.
pub fn bloom_fpr_bound(m: u64, a: u32, u: u64) -> Result<f64> {
    if m == 0 || a == 0 {
        return Err(invalid("bloom filter needs m >= 1 and a >= 1"));
    }
    let empty = if m == 1 {
        if u == 0 { 1.0 } else { 0.0 }
    } else {
        (a as f64 * u as f64 * (-1.0 / m as f64).ln_1p()).exp()
    };
    Ok((1.0 - empty).powi(a as i32))
}

/// Smallest filter width whose bound is at most `target_fpr`, found by
/// doubling and then bisecting.
pub fn choose_bloom_m(a: u32, u: u64, target_fpr: f64) -> Result<u64> {
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(invalid("target false positive rate must lie in (0, 1)"));
    }
    let ok = |m: u64| bloom_fpr_bound(m, a, u).map(|b| b <= target_fpr);
    let mut hi = 1u64;
    while !ok(hi)? {
        hi = hi.checked_mul(2).ok_or_else(|| invalid("no feasible filter width"))?;
    }
    let mut lo = hi / 2 + 1;
    if hi == 1 {
        return Ok(1);
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_filter_width() {
        let b = bloom_fpr_bound(201_000, 20, 10_000).unwrap();
        assert!((0.9e-4..=1.1e-4).contains(&b), "{b}");
        let m = choose_bloom_m(20, 10_000, 1e-4).unwrap();
        assert!((m as f64 - 201_000.0).abs() / 201_000.0 < 0.01, "{m}");
    }

    #[test]
    fn degenerate_cases() {
        assert_eq!(bloom_fpr_bound(1000, 3, 0).unwrap(), 0.0);
        assert_eq!(bloom_fpr_bound(1, 1, 1).unwrap(), 1.0);
        assert!(bloom_fpr_bound(0, 1, 1).is_err());
        assert!(choose_bloom_m(1, 1, 1.0).is_err());
        assert_eq!(choose_bloom_m(1, 1, 0.999).unwrap(), 2);
    }

    #[test]
    fn search_matches_linear_scan() {
        for (a, u, target) in [(1, 1, 0.5), (2, 3, 0.2), (3, 10, 0.05), (5, 40, 0.01)] {
            let scanned = (1..100_000).find(|&m| bloom_fpr_bound(m, a, u).unwrap() <= target).unwrap();
            assert_eq!(choose_bloom_m(a, u, target).unwrap(), scanned);
            if scanned > 1 {
                assert!(bloom_fpr_bound(scanned - 1, a, u).unwrap() > target);
            }
        }
    }

    #[test]
    fn monotone_in_users_and_width() {
        let mut prev = 0.0;
        for u in (0..20_000).step_by(1000) {
            let b = bloom_fpr_bound(201_000, 20, u).unwrap();
            assert!(b >= prev);
            prev = b;
        }
        let mut prev = 1.0;
        for m in (10_000..400_000).step_by(10_000) {
            let b = bloom_fpr_bound(m, 20, 10_000).unwrap();
            assert!(b <= prev);
            prev = b;
        }
    }
}
