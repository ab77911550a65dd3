//! Integer machinery for QoPrime: gcd, extended Euclid, CRT and the search
//! for odd pairwise-coprime moduli.
//!
//! All modular arithmetic is exact in 128-bit integers.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Returns `(g, x, y)` with `a x + b y = g = gcd(a, b)`.
pub fn extended_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut r0, mut r1) = (a, b);
    let (mut s0, mut s1) = (1i128, 0i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

/// Inverse of `a` modulo `n`, if it exists.
pub fn mod_inverse(a: u128, n: u128) -> Option<u128> {
    if n == 1 {
        return Some(0);
    }
    let (g, x, _) = extended_gcd((a % n) as i128, n as i128);
    (g == 1).then(|| x.rem_euclid(n as i128) as u128)
}

fn mul_mod(a: u128, b: u128, n: u128) -> u128 {
    let (a, mut b) = (a % n, b % n);
    if let Some(p) = a.checked_mul(b) {
        return p % n;
    }
    let mut acc = 0u128;
    let mut x = a;
    while b > 0 {
        if b & 1 == 1 {
            acc = add_mod(acc, x, n);
        }
        x = add_mod(x, x, n);
        b >>= 1;
    }
    acc
}

fn add_mod(a: u128, b: u128, n: u128) -> u128 {
    let (s, overflow) = a.overflowing_add(b);
    if overflow || s >= n {
        s.wrapping_sub(n)
    } else {
        s
    }
}

/// Unique `M ∈ [0, Π N_i)` with `M ≡ b_i (mod N_i)` for pairwise-coprime
/// moduli, built by folding congruences pairwise.
pub fn crt_reconstruct(residues: &[(u128, u128)]) -> Result<u128> {
    if residues.is_empty() {
        return invalid("CRT needs at least one congruence");
    }
    for &(b, n) in residues {
        if n == 0 {
            return invalid("CRT modulus must be positive");
        }
        if b >= n {
            return invalid(format!("residue {b} is not reduced modulo {n}"));
        }
    }
    for (i, &(_, a)) in residues.iter().enumerate() {
        for &(_, b) in &residues[i + 1..] {
            let g = gcd(a, b);
            if g != 1 {
                return Err(Error::NotCoprime { a, b, gcd: g });
            }
        }
    }
    let (mut m, mut modulus) = residues[0];
    for &(b, n) in &residues[1..] {
        let inv = mod_inverse(modulus % n, n).expect("coprimality checked");
        // m + modulus * ((b - m) * inv mod n)
        let diff = (b + n - m % n) % n;
        let t = mul_mod(diff, inv, n);
        modulus = modulus
            .checked_mul(n)
            .ok_or_else(|| Error::InvalidArgument("product of moduli overflows 128 bits".into()))?;
        m += (modulus / n) * t;
    }
    Ok(m)
}

/// Odd pairwise-coprime moduli `n_1 < … < n_k`, all at least 3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoprimeSet {
    moduli: Vec<u64>,
    product: u128,
}

impl CoprimeSet {
    pub fn new(mut moduli: Vec<u64>) -> Result<Self> {
        if moduli.is_empty() {
            return invalid("coprime set must be nonempty");
        }
        moduli.sort_unstable();
        if let Some(&n) = moduli.iter().find(|&&n| n < 3 || n % 2 == 0) {
            return invalid(format!("modulus {n} is not an odd integer >= 3"));
        }
        for (i, &a) in moduli.iter().enumerate() {
            for &b in &moduli[i + 1..] {
                let g = gcd(a as u128, b as u128);
                if g != 1 {
                    return Err(Error::NotCoprime { a: a as u128, b: b as u128, gcd: g });
                }
            }
        }
        let mut product: u128 = 1;
        for &n in &moduli {
            product = product
                .checked_mul(n as u128)
                .ok_or_else(|| Error::InvalidArgument("product of moduli overflows 128 bits".into()))?;
        }
        Ok(Self { moduli, product })
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn product(&self) -> u128 {
        self.product
    }

    pub fn k(&self) -> usize {
        self.moduli.len()
    }
}

/// Greedy run of `k` odd integers starting at `start`, each coprime to all
/// earlier picks.
pub fn adjacent_coprimes(start: u64, k: usize) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(k);
    let mut n = if start % 2 == 0 { start + 1 } else { start };
    while out.len() < k {
        if out.iter().all(|&m| gcd(m as u128, n as u128) == 1) {
            out.push(n);
        }
        n += 2;
    }
    out
}

/// Whether `k` moduli of at least 3 are sensible for precision `ε`:
/// `(π/ε)^{1/k} >= 3`. Two moduli are always allowed.
pub fn coprimes_feasible(epsilon: f64, k: usize) -> bool {
    k == 2 || (PI / epsilon).powf(1.0 / k as f64) >= 3.0
}

type CoprimeCache = Mutex<HashMap<(u64, usize), CoprimeSet>>;

fn cache() -> &'static CoprimeCache {
    static CACHE: OnceLock<CoprimeCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Adjacent odd coprimes with the smallest product `N >= π/ε`.
///
/// Starting points are scanned upward from 3 until `start^k` exceeds the best
/// product found, so the result is minimal over all greedy runs.
pub fn find_coprimes(epsilon: f64, k: usize) -> Result<CoprimeSet> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return invalid(format!("epsilon must lie in (0, 1), got {epsilon}"));
    }
    if k < 2 {
        return invalid(format!("need at least 2 moduli, got {k}"));
    }
    let target = PI / epsilon;
    let root = target.powf(1.0 / k as f64);
    if !coprimes_feasible(epsilon, k) {
        return Err(Error::InfeasibleModuli { k, epsilon, root });
    }
    let key = (epsilon.to_bits(), k);
    if let Some(hit) = cache().lock().expect("coprime cache poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let threshold = target * (1.0 - 1e-12);
    let mut best: Option<(u128, Vec<u64>)> = None;
    let mut start: u64 = 3;
    loop {
        if let Some((n, _)) = &best {
            let lower = (start as f64).powi(k as i32);
            if lower > *n as f64 {
                break;
            }
        }
        let run = adjacent_coprimes(start, k);
        let product = run.iter().try_fold(1u128, |acc, &n| acc.checked_mul(n as u128));
        if let Some(p) = product {
            if p as f64 >= threshold && best.as_ref().is_none_or(|(b, _)| p < *b) {
                best = Some((p, run));
            }
        }
        start += 2;
    }
    let (_, moduli) = best.expect("scan terminates only after a hit");
    let set = CoprimeSet::new(moduli)?;
    cache().lock().expect("coprime cache poisoned").insert(key, set.clone());
    Ok(set)
}

/// Contiguous partition of the sorted moduli into `ceil(k/q)` groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub moduli: Vec<u64>,
    pub groups: Vec<Vec<usize>>,
    pub group_products: Vec<u128>,
    pub product: u128,
}

impl GroupPlan {
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Circuit depth `(N - N_i) / (2 N_i)` for group `i`.
    pub fn depth(&self, i: usize) -> u64 {
        let ni = self.group_products[i];
        ((self.product - ni) / (2 * ni)) as u64
    }

    pub fn max_depth(&self) -> u64 {
        (0..self.num_groups()).map(|i| self.depth(i)).max().unwrap_or(0)
    }
}

pub fn make_group_plan(cs: &CoprimeSet, q: usize) -> Result<GroupPlan> {
    let k = cs.k();
    if q < 1 || q + 1 > k {
        return invalid(format!("group size q must lie in [1, {}], got {q}", k.saturating_sub(1)));
    }
    let groups: Vec<Vec<usize>> = (0..k).collect::<Vec<_>>().chunks(q).map(<[usize]>::to_vec).collect();
    let group_products = groups
        .iter()
        .map(|g| g.iter().map(|&j| cs.moduli()[j] as u128).product())
        .collect();
    Ok(GroupPlan { moduli: cs.moduli().to_vec(), groups, group_products, product: cs.product() })
}
