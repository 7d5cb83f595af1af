//! Round-robin arbitration over request bit-sets.

/// Grant the first requester at or after `pointer`, wrapping around.
///
/// `requests` holds one bit per requester, `n <= 64` of them. Returns the
/// grantee and the pointer one past it, or `None` when nobody requests (the
/// caller keeps its pointer).
pub fn rr_arbiter(requests: u64, n: usize, pointer: usize) -> Option<(usize, usize)> {
    debug_assert!((1..=64).contains(&n) && pointer < n);
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let requests = requests & mask;
    if requests == 0 {
        return None;
    }
    let at_or_after = requests & !((1u64 << pointer) - 1);
    let grant = if at_or_after != 0 {
        at_or_after.trailing_zeros()
    } else {
        requests.trailing_zeros()
    } as usize;
    Some((grant, (grant + 1) % n))
}
