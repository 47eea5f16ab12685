//! Bit-exact text encoding of `f64` as hexadecimal floating-point literals,
//! e.g. `0x1.8000000000000p+1` for 3.

use std::fmt::Write;

const MANT_BITS: u32 = 52;
const MANT_MASK: u64 = (1 << MANT_BITS) - 1;

pub fn encode(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> MANT_BITS) & 0x7ff) as i32;
    let mant = bits & MANT_MASK;
    let mut s = String::with_capacity(24);
    if exp == 0 && mant == 0 {
        let _ = write!(s, "{sign}0x0p+0");
    } else if exp == 0 {
        let _ = write!(s, "{sign}0x0.{mant:013x}p-1022");
    } else {
        let e = exp - 1023;
        let _ = write!(s, "{sign}0x1.{mant:013x}p{e:+}");
    }
    s
}

pub fn decode(s: &str) -> Option<f64> {
    match s {
        "nan" => return Some(f64::NAN),
        "inf" => return Some(f64::INFINITY),
        "-inf" => return Some(f64::NEG_INFINITY),
        _ => {}
    }
    let (neg, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let rest = rest.strip_prefix("0x")?;
    let (mantissa, exp) = rest.split_once('p')?;
    let exp: i32 = exp.parse().ok()?;
    let (lead, frac) = match mantissa.split_once('.') {
        Some((l, f)) => (l, f),
        None => (mantissa, ""),
    };
    if frac.len() > 13 {
        return None;
    }
    let frac_bits = if frac.is_empty() { 0 } else { u64::from_str_radix(frac, 16).ok()? << (4 * (13 - frac.len())) };
    let bits = match lead {
        "0" if frac_bits == 0 => 0,
        "0" if exp == -1022 => frac_bits,
        "1" if (-1022..=1023).contains(&exp) => (((exp + 1023) as u64) << MANT_BITS) | frac_bits,
        _ => return None,
    };
    let sign = if neg { 1u64 << 63 } else { 0 };
    Some(f64::from_bits(sign | bits))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn known_encodings() {
        assert_eq!(encode(1.0), "0x1.0000000000000p+0");
        assert_eq!(encode(3.0), "0x1.8000000000000p+1");
        assert_eq!(encode(-0.5), "-0x1.0000000000000p-1");
        assert_eq!(encode(0.0), "0x0p+0");
        assert_eq!(encode(-0.0), "-0x0p+0");
        assert_eq!(encode(f64::MIN_POSITIVE / 2.0), "0x0.8000000000000p-1022");
        assert_eq!(decode("0x1.8p+1"), Some(3.0));
        assert_eq!(decode("0x1p-2"), Some(0.25));
        assert_eq!(decode("1.5"), None);
        assert_eq!(decode("0x2.0p+0"), None);
    }

    #[test]
    fn specials() {
        assert!(decode(&encode(f64::NAN)).unwrap().is_nan());
        assert_eq!(decode(&encode(f64::INFINITY)), Some(f64::INFINITY));
        assert_eq!(decode(&encode(f64::NEG_INFINITY)), Some(f64::NEG_INFINITY));
        assert_eq!(decode(&encode(-0.0)).unwrap().to_bits(), (-0.0f64).to_bits());
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(!v.is_nan());
            prop_assert_eq!(decode(&encode(v)).unwrap().to_bits(), bits);
        }
    }
}
