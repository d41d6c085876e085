//! Smuggling a 30-bit uid out of an auction through values the reporting
//! hooks are allowed to see: the bid and score (15 bits each, encoded so
//! that precision limiting leaves them untouched), or the creative URL.

use crate::browser::{MAX_EXPONENT, MIN_EXPONENT};
use crate::error::{Error, Result};
use crate::model::{Ad, InterestGroup, Uid};

const SIGNIFICAND_BITS: i32 = 8;

/// Packs 15 bits as `(128 + low7) * 2^(e - 8)` with `e = high8 - 128`.
/// Every such value has an 8-bit significand and an in-range exponent.
fn encode15(bits: u16) -> f64 {
    debug_assert!(bits <= 0x7fff);
    let significand = 128 + (bits & 0x7f) as i32;
    let exponent = (bits >> 7) as i32 + MIN_EXPONENT;
    significand as f64 * 2f64.powi(exponent - SIGNIFICAND_BITS)
}

fn decode15(x: f64) -> Result<u16> {
    let corrupted = || Error::ChannelCorrupted(format!("{x:e} is not a channel value"));
    if !(x > 0.0 && x.is_finite()) {
        return Err(corrupted());
    }
    let (m, e) = crate::browser::frexp(x);
    let s = m * 2f64.powi(SIGNIFICAND_BITS);
    if s.fract() != 0.0 || !(MIN_EXPONENT..=MAX_EXPONENT).contains(&e) {
        return Err(corrupted());
    }
    let low7 = s as u16 - 128;
    let high8 = (e - MIN_EXPONENT) as u16;
    Ok((high8 << 7) | low7)
}

/// Bid carrying the high 15 bits, plus an ad description carrying the whole
/// uid for the colluding seller.
pub fn covert_encode_bid(uid: Uid) -> (f64, String) {
    (encode15(uid.high()), uid.label())
}

/// Score carrying the low 15 bits.
pub fn covert_encode_score(uid: Uid) -> f64 {
    encode15(uid.low())
}

pub fn covert_decode(bid: f64, score: f64) -> Result<Uid> {
    Uid::from_halves(decode15(bid)?, decode15(score)?)
}

/// Ad for `uid` from a segment inventory whose creative URLs embed uids.
pub fn covert_ad_select(group: &InterestGroup, uid: Uid) -> Result<Ad> {
    group
        .ads
        .iter()
        .find(|ad| Uid::find_in(&ad.creative_url) == Some(uid))
        .cloned()
        .ok_or(Error::InventoryMismatch(uid.value()))
}
