// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest n with F(n) < 2^64.
pub const FIB_MAX_N: u64 = 93;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("F({n}) does not fit in 64 bits")]
    OverflowDomain { n: u64 },
    #[error("sieve for n = {n} needs more than {limit} bytes")]
    DomainTooLarge { n: u64, limit: u64 },
    #[error("prime counting needs n >= 2, got {n}")]
    DomainTooSmall { n: u64 },
    #[error("multifactorial step must be at least 1")]
    ZeroStep,
    #[error("result overflows 64 bits")]
    Overflow,
    #[error("oracle `{id}` expects {expected} arguments, got {got}")]
    Arity {
        id: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleId {
    Dummy,
    Fib,
    Sum,
    PrimeCount,
    Multifact,
}

impl OracleId {
    pub fn name(self) -> &'static str {
        match self {
            OracleId::Dummy => "dummy",
            OracleId::Fib => "fib",
            OracleId::Sum => "sum",
            OracleId::PrimeCount => "prime_count",
            OracleId::Multifact => "multifact",
        }
    }

    /// `memory` bounds the sieve of the prime counter.
    pub fn evaluate(self, args: &[u64], memory: u64) -> Result<u64, OracleError> {
        let expected = match self {
            OracleId::Dummy => 0,
            OracleId::Fib | OracleId::Sum | OracleId::PrimeCount => 1,
            OracleId::Multifact => 2,
        };
        if args.len() != expected {
            return Err(OracleError::Arity {
                id: self.name(),
                expected,
                got: args.len(),
            });
        }
        match self {
            OracleId::Dummy => Ok(oracle_dummy()),
            OracleId::Fib => oracle_fib(args[0]),
            OracleId::Sum => oracle_sum(args[0]),
            OracleId::PrimeCount => oracle_prime_count(args[0], memory),
            OracleId::Multifact => oracle_multifact(args[0], args[1]),
        }
    }
}

pub fn oracle_dummy() -> u64 {
    1
}

/// F(0) = 0, F(1) = 1.
pub fn oracle_fib(n: u64) -> Result<u64, OracleError> {
    if n > FIB_MAX_N {
        return Err(OracleError::OverflowDomain { n });
    }
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..n {
        let next = a.checked_add(b);
        a = b;
        // b is only needed for further rounds, so its overflow at n = 93 is harmless
        b = next.unwrap_or(0);
    }
    Ok(a)
}

/// 1 + 2 + ... + n.
pub fn oracle_sum(n: u64) -> Result<u64, OracleError> {
    let (half, other) = if n % 2 == 0 { (n / 2, n + 1) } else { (n / 2 + 1, n) };
    half.checked_mul(other).ok_or(OracleError::Overflow)
}

/// Number of primes <= n, by a byte sieve of n + 1 bytes that must fit in
/// `memory`.
pub fn oracle_prime_count(n: u64, memory: u64) -> Result<u64, OracleError> {
    if n < 2 {
        return Err(OracleError::DomainTooSmall { n });
    }
    if n >= memory {
        return Err(OracleError::DomainTooLarge { n, limit: memory });
    }
    let n = n as usize;
    let mut composite = vec![false; n + 1];
    let mut i = 2;
    while i * i <= n {
        if !composite[i] {
            for j in (i * i..=n).step_by(i) {
                composite[j] = true;
            }
        }
        i += 1;
    }
    Ok(composite[2..].iter().filter(|c| !**c).count() as u64)
}

/// n * (n - k) * (n - 2k) * ... down to the smallest positive term; 1 for
/// n = 0.
pub fn oracle_multifact(n: u64, k: u64) -> Result<u64, OracleError> {
    if k == 0 {
        return Err(OracleError::ZeroStep);
    }
    let mut acc = 1u64;
    let mut term = n;
    while term > 0 {
        acc = acc.checked_mul(term).ok_or(OracleError::Overflow)?;
        if term <= k {
            break;
        }
        term -= k;
    }
    Ok(acc)
}
