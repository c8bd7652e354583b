//! 8-bit mu-law companding (mu = 255).
//!
//! Encoding compresses `x` to `y = sign(x) ln(1 + 255|x|) / ln 256` and
//! quantizes `y` onto 256 uniform bins over [-1, 1]. Decoding expands the bin
//! center, so `encode(decode(c)) == c` for every code.

use super::{AudioClip, QuantizedClip};
use crate::error::{Error, Result};

const MU: f64 = 255.0;

/// Code of a zero sample.
pub const MULAW_MID_CODE: u8 = 128;

pub fn mulaw_encode_sample(x: f64) -> u8 {
    let y = x.signum() * (MU * x.abs()).ln_1p() / (MU + 1.0).ln();
    ((y + 1.0) * 128.0).floor().clamp(0.0, 255.0) as u8
}

pub fn mulaw_decode_code(code: u8) -> f64 {
    let y = (code as f64 + 0.5) / 128.0 - 1.0;
    y.signum() * ((MU + 1.0).powf(y.abs()) - 1.0) / MU
}

pub fn mulaw_encode(clip: &AudioClip) -> Result<QuantizedClip> {
    if let Some((i, x)) = clip
        .samples
        .iter()
        .enumerate()
        .find(|(_, x)| !(x.abs() <= 1.0))
    {
        return Err(Error::data(format!(
            "sample {i} = {x} outside [-1, 1]; normalize before encoding"
        )));
    }
    Ok(QuantizedClip {
        codes: clip.samples.iter().map(|&x| mulaw_encode_sample(x)).collect(),
        sample_rate: clip.sample_rate,
    })
}

pub fn mulaw_decode(q: &QuantizedClip) -> AudioClip {
    AudioClip {
        samples: q.codes.iter().map(|&c| mulaw_decode_code(c)).collect(),
        sample_rate: q.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_zero() {
        assert_eq!(mulaw_encode_sample(0.0), 128);
        assert_eq!(mulaw_encode_sample(1.0), 255);
        assert_eq!(mulaw_encode_sample(-1.0), 0);
    }

    #[test]
    fn decode_values() {
        // (256^(255.5/128 - 1) - 1) / 255
        assert!((mulaw_decode_code(255) - 0.978_488_030_958_632_2).abs() < 1e-12);
        assert!((mulaw_decode_code(0) + 0.978_488_030_958_632_2).abs() < 1e-12);
        let mid = mulaw_decode_code(128);
        assert!(mid > 0.0 && mid < 1e-4, "{mid}");
    }

    #[test]
    fn encode_decode_is_idempotent_on_codes() {
        for c in 0..=255u8 {
            assert_eq!(mulaw_encode_sample(mulaw_decode_code(c)), c);
        }
    }

    #[test]
    fn round_trip_error_bound_on_grid() {
        let n = 10_000;
        let worst = (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .map(|x| (mulaw_decode_code(mulaw_encode_sample(x)) - x).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.025, "{worst}");
    }

    #[test]
    fn rejects_out_of_range_and_nan() {
        let clip = AudioClip::new(vec![0.0, 1.2], 8000);
        assert!(matches!(mulaw_encode(&clip), Err(Error::Data(_))));
        let clip = AudioClip::new(vec![f64::NAN], 8000);
        assert!(mulaw_encode(&clip).is_err());
    }

    proptest! {
        #[test]
        fn monotone(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(mulaw_encode_sample(lo) <= mulaw_encode_sample(hi));
        }

        #[test]
        fn odd_symmetry_off_bin_edges(x in -1.0f64..1.0) {
            let y = x.abs().mul_add(MU, 0.0).ln_1p() / (MU + 1.0).ln() * 128.0;
            prop_assume!(x != 0.0 && y.fract() != 0.0 && x.abs() < 1.0);
            prop_assert_eq!(mulaw_encode_sample(-x), 255 - mulaw_encode_sample(x));
        }
    }
}
