use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::MpcError;
use crate::field::{Fe, Field};
use crate::policy::{Action, Decision};
use crate::shamir::{reconstruct, share, Share};

/// How a shared integer is held.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Repr {
    IntOnly,
    BitsOnly,
    Dual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValueId(pub u64);

/// Global handle to a shared datum: one share per node for every component.
/// Bits are least significant first; `bit_shares[i][j]` is node `j + 1`'s
/// share of bit `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedValue {
    pub id: ValueId,
    pub repr: Repr,
    pub k: usize,
    pub int_shares: Option<Vec<Share>>,
    pub bit_shares: Vec<Vec<Share>>,
    pub width: u8,
    /// `None` marks a designated-public aggregate.
    pub policy_ref: Option<String>,
}

/// What a single node holds of a [`SharedValue`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeShares {
    pub int: Option<Fe>,
    pub bits: Vec<Fe>,
}

#[derive(Clone, Copy, Debug)]
pub enum Operand<'a> {
    Shared(&'a SharedValue),
    Public(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoolOp {
    And,
    Or,
    Xor,
    Not,
}

/// Why an opening is allowed.
#[derive(Clone, Copy, Debug)]
pub enum Authorization<'a> {
    Decision(&'a Decision),
    PublicAggregate,
    Unauthorized,
}

impl Authorization<'_> {
    pub fn permits(&self, value: &SharedValue) -> bool {
        match (self, &value.policy_ref) {
            (Authorization::Decision(d), Some(target)) => {
                d.approved && matches!(d.action, Action::Reveal | Action::Compute) && &d.target == target
            }
            (Authorization::PublicAggregate, None) => true,
            _ => false,
        }
    }
}

/// Widest bit encoding usable in `field`: at most 16 bits and `2^w < p`.
pub fn max_width(field: Field) -> u8 {
    (1..=16u8).rev().find(|w| (1u64 << w) < field.modulus()).unwrap_or(0)
}

pub(crate) fn check_width(field: Field, width: u8) -> Result<(), MpcError> {
    if width == 0 || width > max_width(field) {
        return Err(MpcError::WidthOverflow { width });
    }
    Ok(())
}

impl SharedValue {
    /// Client-side input: shares each representation component separately so
    /// that every node receives exactly one share per component.
    #[allow(clippy::too_many_arguments)]
    pub fn input<R: Rng + ?Sized>(
        field: Field,
        secret: u64,
        repr: Repr,
        width: u8,
        k: usize,
        n: usize,
        policy: Option<String>,
        rng: &mut R,
    ) -> Result<Self, MpcError> {
        let id = ValueId(rng.next_u64());
        let int_shares = match repr {
            Repr::IntOnly | Repr::Dual => Some(share(field.elem(secret), k, n, rng)?.shares),
            Repr::BitsOnly => None,
        };
        let bit_shares = match repr {
            Repr::IntOnly => Vec::new(),
            Repr::BitsOnly | Repr::Dual => {
                check_width(field, width)?;
                if secret >> width != 0 {
                    return Err(MpcError::WidthOverflow { width });
                }
                (0..width)
                    .map(|i| Ok(share(field.elem((secret >> i) & 1), k, n, rng)?.shares))
                    .collect::<Result<_, MpcError>>()?
            }
        };
        if repr == Repr::IntOnly && secret >= field.modulus() {
            return Err(MpcError::WidthOverflow { width: 64 });
        }
        Ok(Self {
            id,
            repr,
            k,
            int_shares,
            bit_shares,
            width: if repr == Repr::IntOnly { 0 } else { width },
            policy_ref: policy,
        })
    }

    pub fn input_bit<R: Rng + ?Sized>(
        field: Field,
        bit: bool,
        k: usize,
        n: usize,
        policy: Option<String>,
        rng: &mut R,
    ) -> Result<Self, MpcError> {
        Self::input(field, bit as u64, Repr::BitsOnly, 1, k, n, policy, rng)
    }

    pub fn from_int_shares(id: ValueId, shares: Vec<Share>, k: usize, policy: Option<String>) -> Self {
        Self {
            id,
            repr: Repr::IntOnly,
            k,
            int_shares: Some(shares),
            bit_shares: Vec::new(),
            width: 0,
            policy_ref: policy,
        }
    }

    pub fn n(&self) -> usize {
        self.int_shares
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.bit_shares.first().map(Vec::len))
            .unwrap_or(0)
    }

    pub fn is_single_bit(&self) -> bool {
        self.repr == Repr::BitsOnly && self.width == 1
    }

    pub fn node_shares(&self, node: u32) -> NodeShares {
        let pick = |row: &Vec<Share>| {
            row.iter()
                .find(|s| s.index == node)
                .map(|s| s.value)
                .expect("node holds a share of every component")
        };
        NodeShares {
            int: self.int_shares.as_ref().map(pick),
            bits: self.bit_shares.iter().map(pick).collect(),
        }
    }

    /// Authorized reconstruction from the shares sent by `from`. Dual values
    /// open their integer component.
    pub fn open(&self, auth: &Authorization, from: &[u32]) -> Result<Fe, MpcError> {
        if !auth.permits(self) {
            return Err(MpcError::NotAuthorized);
        }
        let collect = |row: &Vec<Share>| -> Result<Fe, MpcError> {
            let picked: Vec<Share> = from
                .iter()
                .filter_map(|i| row.iter().find(|s| s.index == *i).copied())
                .collect();
            reconstruct(&picked, self.k).map_err(|_| MpcError::OpenFailed)
        };
        if let Some(int) = &self.int_shares {
            return collect(int);
        }
        let mut acc: Option<Fe> = None;
        for (i, row) in self.bit_shares.iter().enumerate() {
            let b = collect(row)?;
            if b.value() > 1 {
                return Err(MpcError::NotABit);
            }
            let field = b.field();
            let term = b * field.elem(1u64 << i);
            acc = Some(acc.map_or(term, |a| a + term));
        }
        acc.ok_or(MpcError::OpenFailed)
    }
}
