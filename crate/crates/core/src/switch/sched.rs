//! Round-robin matching for virtual-output-queued crossbars.
//!
//! RRM and iSLIP share one grant/accept loop and differ only in when the
//! pointers move:
//! * RRM: every grant moves the output's grant pointer one past the granted
//!   input, accepted or not; every accept moves the input's accept pointer.
//! * iSLIP: pointers move only for grants accepted in the first iteration.

use crate::arbiter::rr_arbiter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointerRule {
    Rrm,
    Islip,
}

/// Scheduler state: one grant pointer per output, one accept pointer per input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matcher {
    pub rule: PointerRule,
    pub iterations: u32,
    pub grant_ptr: Vec<usize>,
    pub accept_ptr: Vec<usize>,
}

impl Matcher {
    pub fn new(n: usize, rule: PointerRule, iterations: u32) -> Self {
        assert!(iterations >= 1, "at least one iteration");
        Matcher {
            rule,
            iterations: if rule == PointerRule::Rrm { 1 } else { iterations },
            grant_ptr: vec![0; n],
            accept_ptr: vec![0; n],
        }
    }

    /// `requests[i]` has bit `j` set when VOQ (i, j) can send this cycle.
    pub fn schedule(&mut self, requests: &[u64], matching: &mut Vec<(usize, usize)>) {
        round_robin_match(
            requests,
            &mut self.grant_ptr,
            &mut self.accept_ptr,
            self.iterations,
            self.rule,
            matching,
        );
    }
}

/// One iteration of RRM.
pub fn rrm_schedule(requests: &[u64], grant_ptr: &mut [usize], accept_ptr: &mut [usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    round_robin_match(requests, grant_ptr, accept_ptr, 1, PointerRule::Rrm, &mut out);
    out
}

/// `iterations` rounds of iSLIP.
pub fn islip_schedule(
    requests: &[u64],
    grant_ptr: &mut [usize],
    accept_ptr: &mut [usize],
    iterations: u32,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    round_robin_match(requests, grant_ptr, accept_ptr, iterations, PointerRule::Islip, &mut out);
    out
}

fn round_robin_match(
    requests: &[u64],
    grant_ptr: &mut [usize],
    accept_ptr: &mut [usize],
    iterations: u32,
    rule: PointerRule,
    matching: &mut Vec<(usize, usize)>,
) {
    let n = requests.len();
    assert!(n <= 64 && grant_ptr.len() == n && accept_ptr.len() == n);
    matching.clear();
    if n == 0 {
        return;
    }
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut free_in = all;
    let mut free_out = all;
    let mut columns = [0u64; 64];
    for (i, &row) in requests.iter().enumerate() {
        let mut bits = row & all;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            columns[j] |= 1 << i;
            bits &= bits - 1;
        }
    }
    let mut grants = [0u64; 64];
    for iter in 0..iterations {
        grants[..n].fill(0);
        let mut outs = free_out;
        while outs != 0 {
            let j = outs.trailing_zeros() as usize;
            outs &= outs - 1;
            if let Some((i, next)) = rr_arbiter(columns[j] & free_in, n, grant_ptr[j]) {
                grants[i] |= 1 << j;
                if rule == PointerRule::Rrm {
                    grant_ptr[j] = next;
                }
            }
        }
        let mut progressed = false;
        for i in 0..n {
            if grants[i] == 0 {
                continue;
            }
            let (j, next) = rr_arbiter(grants[i], n, accept_ptr[i]).expect("nonempty grants");
            matching.push((i, j));
            free_in &= !(1 << i);
            free_out &= !(1 << j);
            progressed = true;
            match rule {
                PointerRule::Rrm => accept_ptr[i] = next,
                PointerRule::Islip if iter == 0 => {
                    accept_ptr[i] = next;
                    grant_ptr[j] = (i + 1) % n;
                }
                PointerRule::Islip => {}
            }
        }
        if !progressed {
            break;
        }
    }
}
