//! Run-length coding of binary masks for the wire.
//!
//! Runs alternate unset/set over row-major pixels, always starting with the
//! unset run (which may be zero). Run lengths sum to `width * height`.

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::mask::Mask;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub rle: Vec<u64>,
}

pub fn encode(mask: &Mask) -> RleMask {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u64;
    for i in 0..mask.len() {
        let bit = mask.get_index(i);
        if bit != current {
            runs.push(len);
            current = bit;
            len = 0;
        }
        len += 1;
    }
    runs.push(len);
    RleMask {
        width: mask.width(),
        height: mask.height(),
        rle: runs,
    }
}

pub fn decode(rle: &RleMask) -> Result<Mask, BackendError> {
    let total = rle.width as u64 * rle.height as u64;
    let sum = rle
        .rle
        .iter()
        .try_fold(0u64, |acc, r| acc.checked_add(*r))
        .ok_or_else(|| BackendError::MalformedResponse("rle run lengths overflow".into()))?;
    if sum != total {
        return Err(BackendError::MalformedResponse(format!(
            "rle runs cover {sum} pixels, mask has {total}"
        )));
    }
    let mut mask = Mask::empty(rle.width, rle.height);
    let mut pos = 0usize;
    for (k, run) in rle.rle.iter().enumerate() {
        let run = *run as usize;
        if k % 2 == 1 {
            for i in pos..pos + run {
                mask.set_index(i, true);
            }
        }
        pos += run;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BBox;
    use proptest::prelude::*;

    #[test]
    fn leading_set_pixel_gets_zero_run() {
        let m = Mask::from_bools(2, 2, &[true, true, false, true]).unwrap();
        assert_eq!(encode(&m).rle, vec![0, 2, 1, 1]);
    }

    #[test]
    fn empty_mask_is_one_run() {
        assert_eq!(encode(&Mask::empty(3, 4)).rle, vec![12]);
    }

    #[test]
    fn short_runs_are_rejected() {
        let bad = RleMask {
            width: 4,
            height: 4,
            rle: vec![3, 2],
        };
        assert!(matches!(decode(&bad), Err(BackendError::MalformedResponse(_))));
    }

    #[test]
    fn rect_roundtrip() {
        let m = Mask::rect(30, 20, BBox::new(4, 3, 17, 19));
        assert_eq!(decode(&encode(&m)).unwrap(), m);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(w in 1u32..40, h in 1u32..40, seed in any::<u64>()) {
            let m = Mask::from_fn(w, h, |x, y| {
                let v = ((u64::from(x) * 0x9E37_79B9) ^ (u64::from(y) * 0x85EB_CA6B)) ^ seed;
                v.rotate_left((x + y) % 63) & 3 == 0
            });
            let encoded = encode(&m);
            prop_assert_eq!(encoded.rle.iter().sum::<u64>(), u64::from(w * h));
            prop_assert_eq!(decode(&encoded).unwrap(), m);
        }
    }
}
