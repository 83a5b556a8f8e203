//! Lane-group primitives. A lane group is a `[T; L]` array; every operation
//! is an element-wise loop over `L` that the compiler lowers to vector
//! instructions when the target supports them.

use std::ptr;

use super::Fold;
use crate::image::Pixel;

#[inline(always)]
pub(crate) unsafe fn load<T: Pixel, const L: usize>(p: *const T) -> [T; L] {
    ptr::read_unaligned(p as *const [T; L])
}

/// Store the first `valid` lanes of `v`.
#[inline(always)]
pub(crate) unsafe fn store<T: Pixel, const L: usize>(p: *mut T, v: [T; L], valid: usize) {
    if valid == L {
        ptr::write_unaligned(p as *mut [T; L], v);
    } else {
        for (k, &x) in v.iter().enumerate().take(valid) {
            p.add(k).write(x);
        }
    }
}

#[inline(always)]
pub(crate) fn splat<T: Pixel, const L: usize>(v: T) -> [T; L] {
    [v; L]
}

#[inline(always)]
pub(crate) fn fold2<T: Pixel, F: Fold, const L: usize>(a: [T; L], b: [T; L]) -> [T; L] {
    let mut out = a;
    for k in 0..L {
        out[k] = F::fold(a[k], b[k]);
    }
    out
}

#[inline(always)]
pub(crate) fn fold3<T: Pixel, F: Fold, const L: usize>(a: [T; L], b: [T; L], c: [T; L]) -> [T; L] {
    fold2::<T, F, L>(fold2::<T, F, L>(a, b), c)
}

/// Horizontal 3-tap fold of the lane group starting at column `col` of the
/// row at `row`. Neighbours outside `0..width` are replaced by the fold's
/// neutral element; lanes at or beyond `width` hold unspecified values.
///
/// # Safety
/// `row.offset(-1)` through `row.add(col + L)` must be readable.
#[inline(always)]
pub(crate) unsafe fn hpass<T: Pixel, F: Fold, const L: usize>(
    row: *const T,
    col: usize,
    width: usize,
) -> [T; L] {
    let p = row.add(col);
    let mut left = load::<T, L>(p.sub(1));
    let mid = load::<T, L>(p);
    let mut right = load::<T, L>(p.add(1));
    if col == 0 {
        left[0] = F::neutral();
    }
    if col + L >= width {
        for (k, r) in right.iter_mut().enumerate() {
            if col + k + 1 >= width {
                *r = F::neutral();
            }
        }
    }
    fold3::<T, F, L>(left, mid, right)
}
