//! 2D Hilbert curve over a `2^n × 2^n` grid.
//!
//! The curve starts at cell `(0, 0)` and, at order 1, visits
//! `(0,0) → (0,1) → (1,1) → (1,0)`. Each level of recursion contributes one
//! base-4 digit `b_i`, coarsest level most significant, and the code is
//! `e = Σ b_i · 4^i`.

use super::GeometryError;

pub const MAX_ORDER: u32 = 31;

fn check_order(order: u32) -> Result<(), GeometryError> {
    if order == 0 || order > MAX_ORDER {
        return Err(GeometryError::Order(order));
    }
    Ok(())
}

/// Rotate/reflect a sub-square so the next level sees the canonical layout.
#[inline]
fn rotate(side: u64, x: &mut u64, y: &mut u64, rx: u64, ry: u64) {
    if ry == 0 {
        if rx == 1 {
            *x = side - 1 - *x;
            *y = side - 1 - *y;
        }
        std::mem::swap(x, y);
    }
}

/// Base-4 digits `[b_0, …, b_{n-1}]` of cell `(u, v)`; `b_{n-1}` is the
/// quadrant at the coarsest subdivision.
pub fn hilbert_digits(u: u64, v: u64, order: u32) -> Result<Vec<u8>, GeometryError> {
    check_order(order)?;
    let side = 1u64 << order;
    if u >= side || v >= side {
        return Err(GeometryError::CellOutOfRange { u, v, order });
    }
    let (mut x, mut y) = (u, v);
    let mut digits = vec![0u8; order as usize];
    let mut s = side >> 1;
    let mut level = order as usize;
    while s > 0 {
        level -= 1;
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        digits[level] = ((3 * rx) ^ ry) as u8;
        rotate(side, &mut x, &mut y, rx, ry);
        s >>= 1;
    }
    Ok(digits)
}

/// `e = Σ b_i · 4^i`.
pub fn code_from_digits(digits: &[u8]) -> u64 {
    digits.iter().enumerate().map(|(i, &b)| u64::from(b) << (2 * i)).sum()
}

pub fn hilbert_index(u: u64, v: u64, order: u32) -> Result<u64, GeometryError> {
    Ok(code_from_digits(&hilbert_digits(u, v, order)?))
}

pub fn hilbert_inverse(code: u64, order: u32) -> Result<(u64, u64), GeometryError> {
    check_order(order)?;
    let side = 1u64 << order;
    if order < 32 && code >= side * side {
        return Err(GeometryError::CodeOutOfRange { code, order });
    }
    let (mut x, mut y) = (0u64, 0u64);
    let mut t = code;
    let mut s = 1u64;
    while s < side {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        rotate(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t /= 4;
        s <<= 1;
    }
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Order-n curve built by explicit recursive subdivision, independent of
    /// the bit-twiddling above: each quadrant holds a transformed copy of the
    /// order-(n-1) curve.
    fn recursive_curve(order: u32) -> Vec<(u64, u64)> {
        if order == 0 {
            return vec![(0, 0)];
        }
        let prev = recursive_curve(order - 1);
        let h = 1u64 << (order - 1);
        let mut out = Vec::with_capacity(prev.len() * 4);
        // lower-left: transpose
        out.extend(prev.iter().map(|&(x, y)| (y, x)));
        // upper-left
        out.extend(prev.iter().map(|&(x, y)| (x, y + h)));
        // upper-right
        out.extend(prev.iter().map(|&(x, y)| (x + h, y + h)));
        // lower-right: anti-transpose
        out.extend(prev.iter().map(|&(x, y)| (2 * h - 1 - y, h - 1 - x)));
        out
    }

    #[test]
    fn order_one_enumeration() {
        assert_eq!(hilbert_index(0, 0, 1).unwrap(), 0);
        assert_eq!(hilbert_index(0, 1, 1).unwrap(), 1);
        assert_eq!(hilbert_index(1, 1, 1).unwrap(), 2);
        assert_eq!(hilbert_index(1, 0, 1).unwrap(), 3);
        assert_eq!(hilbert_inverse(0, 1).unwrap(), (0, 0));
        assert_eq!(hilbert_inverse(3, 1).unwrap(), (1, 0));
    }

    #[test]
    fn matches_recursive_construction() {
        for order in 1..=5 {
            for (e, &(x, y)) in recursive_curve(order).iter().enumerate() {
                assert_eq!(hilbert_index(x, y, order).unwrap(), e as u64, "order {order} cell ({x},{y})");
            }
        }
    }

    #[test]
    fn digit_weighting() {
        assert_eq!(code_from_digits(&[1, 2]), 9);
        let d = hilbert_digits(3, 0, 2).unwrap();
        assert_eq!(code_from_digits(&d), hilbert_index(3, 0, 2).unwrap());
        assert_eq!(d[1], 3, "cell (3,0) lies in the last coarse quadrant");
    }

    #[test]
    fn round_trip_order_three() {
        for e in 0..64 {
            let (u, v) = hilbert_inverse(e, 3).unwrap();
            assert_eq!(hilbert_index(u, v, 3).unwrap(), e);
        }
    }

    #[test]
    fn range_errors() {
        assert!(hilbert_index(2, 0, 1).is_err());
        assert!(hilbert_inverse(4, 1).is_err());
        assert!(hilbert_index(0, 0, 0).is_err());
        assert!(hilbert_index(0, 0, 32).is_err());
        let top = (1u64 << 31) - 1;
        let e = hilbert_index(top, 0, 31).unwrap();
        assert_eq!(hilbert_inverse(e, 31).unwrap(), (top, 0));
    }
}
