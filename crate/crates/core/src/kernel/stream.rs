//! Single-pass, in-place 3x3 kernels.
//!
//! Two row caches hold the horizontal pass of the previous and the current
//! input row; the horizontal pass of the next input row is computed on the
//! fly. After row `y` is written, the cache that held row `y - 1` receives
//! row `y + 1` and the two swap roles.

use super::lanes::{fold3, hpass, load, splat, store};
use super::{Aborted, Fold, RowCache, RowSync};
use crate::image::Pixel;

/// Raw view of an image's pixel grid.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Plane<T> {
    pub ptr: *mut T,
    pub width: usize,
    pub height: usize,
    pub stride: usize,
}

/// Per-group output step applied to the 3x3 fold `e` of the pixels at
/// linear offset `off`.
pub(crate) trait Epilogue<T: Pixel> {
    /// # Safety
    /// `off` addresses a lane group of row-padded planes of the same width.
    unsafe fn apply<F: Fold, const L: usize>(
        &mut self,
        f: *mut T,
        off: usize,
        e: [T; L],
        valid: usize,
    );
}

pub(crate) struct Plain;

impl<T: Pixel> Epilogue<T> for Plain {
    #[inline(always)]
    unsafe fn apply<F: Fold, const L: usize>(&mut self, f: *mut T, off: usize, e: [T; L], valid: usize) {
        store(f.add(off), e, valid);
    }
}

/// Clamp against a mask: `max(e, m)` for erosion, `min(e, m)` for dilation.
pub(crate) struct Geodesic<T> {
    pub mask: *const T,
}

impl<T: Pixel> Epilogue<T> for Geodesic<T> {
    #[inline(always)]
    unsafe fn apply<F: Fold, const L: usize>(&mut self, f: *mut T, off: usize, e: [T; L], valid: usize) {
        let m = load::<T, L>(self.mask.add(off));
        let mut out = e;
        for k in 0..L {
            out[k] = F::clamp(e[k], m[k]);
        }
        store(f.add(off), out, valid);
    }
}

/// Geodesic step that only writes groups that changed and records whether
/// any pixel changed.
pub(crate) struct GeodesicConvergent<T> {
    pub mask: *const T,
    pub changed: bool,
}

impl<T: Pixel> Epilogue<T> for GeodesicConvergent<T> {
    #[inline(always)]
    unsafe fn apply<F: Fold, const L: usize>(&mut self, f: *mut T, off: usize, e: [T; L], valid: usize) {
        let m = load::<T, L>(self.mask.add(off));
        let old = load::<T, L>(f.add(off));
        let mut out = e;
        let mut diff = false;
        for k in 0..L {
            out[k] = F::clamp(e[k], m[k]);
            diff |= (k < valid) & (out[k] != old[k]);
        }
        if diff {
            store(f.add(off), out, valid);
            self.changed = true;
        }
    }
}

/// Erosion step of the quasi-distance transform: residuals that strictly
/// exceed the best residual so far replace it, and the stage index is
/// recorded as the distance.
pub(crate) struct QdtStep<T> {
    pub residual: *mut T,
    pub distance: *mut u16,
    pub index: u16,
    pub changed: bool,
}

impl<T: Pixel> Epilogue<T> for QdtStep<T> {
    #[inline(always)]
    unsafe fn apply<F: Fold, const L: usize>(&mut self, f: *mut T, off: usize, e: [T; L], valid: usize) {
        let old = load::<T, L>(f.add(off));
        let mut gap = e;
        for k in 0..L {
            gap[k] = F::gap(old[k], e[k]);
        }
        store(f.add(off), e, valid);
        let best = load::<T, L>(self.residual.add(off));
        let mut mask = [false; L];
        let mut any = false;
        for k in 0..L {
            mask[k] = (k < valid) & (gap[k] > best[k]);
            any |= mask[k];
        }
        if any {
            self.changed = true;
            for k in 0..L {
                if mask[k] {
                    self.residual.add(off + k).write(gap[k]);
                    self.distance.add(off + k).write(self.index);
                }
            }
        }
    }
}

/// Lipschitz correction: where the pixel exceeds its 3x3 fold by more than
/// one, pull it to one step from the fold.
pub(crate) struct Eta {
    pub changed: bool,
}

impl<T: Pixel> Epilogue<T> for Eta {
    #[inline(always)]
    unsafe fn apply<F: Fold, const L: usize>(&mut self, f: *mut T, off: usize, e: [T; L], valid: usize) {
        let old = load::<T, L>(f.add(off));
        let mut out = old;
        let mut diff = false;
        for k in 0..L {
            if F::gap(old[k], e[k]) > T::ONE {
                out[k] = F::relax(e[k]);
                diff |= k < valid;
            }
        }
        if diff {
            store(f.add(off), out, valid);
            self.changed = true;
        }
    }
}

/// Stream the 3x3 fold over `f` top to bottom, in place.
///
/// Before reading input row `r` (and `r + 1`) the kernel waits on
/// `sync.wait_for(r)`; after writing output row `r` it publishes `r + 1`.
///
/// # Safety
/// `f` must describe a live, row-padded image; concurrent access to it must
/// follow the row protocol implemented by `sync`.
#[inline(always)]
pub(crate) unsafe fn stream<T, F, E, S, const L: usize>(
    f: Plane<T>,
    epi: &mut E,
    cache: &mut RowCache<T>,
    sync: &S,
) -> Result<(), Aborted>
where
    T: Pixel,
    F: Fold,
    E: Epilogue<T>,
    S: RowSync + ?Sized,
{
    let Plane {
        ptr,
        width,
        height,
        stride,
    } = f;
    let n = cache.len();
    debug_assert!(n >= width && n.is_multiple_of(L));

    sync.wait_for(0)?;
    let (mut c1, mut c2) = cache.buffers_mut();
    c1.fill(F::neutral());
    let mut col = 0;
    while col < width {
        store(c2.as_mut_ptr().add(col), hpass::<T, F, L>(ptr, col, width), L);
        col += L;
    }

    for row in 0..height {
        sync.wait_for(row)?;
        let base = row * stride;
        let next = ptr.add(base + stride);
        let has_next = row + 1 < height;
        let mut col = 0;
        while col < width {
            let a = load::<T, L>(c1.as_ptr().add(col));
            let b = load::<T, L>(c2.as_ptr().add(col));
            let c = if has_next {
                hpass::<T, F, L>(next, col, width)
            } else {
                splat(F::neutral())
            };
            store(c1.as_mut_ptr().add(col), c, L);
            let e = fold3::<T, F, L>(a, b, c);
            epi.apply::<F, L>(ptr, base + col, e, L.min(width - col));
            col += L;
        }
        sync.publish(row + 1);
        std::mem::swap(&mut c1, &mut c2);
    }
    Ok(())
}
