//! The separable halves of the 3x3 kernel, each computed in place.

use super::lanes::{fold2, fold3, hpass, load, splat, store};
use super::{with_lanes, Fold, LaneConfig};
use crate::image::{Image, Pixel};

/// One lane group of the horizontal pass at pixel `(x, y)`: element `k` is
/// the fold of `f(x+k-1, y)`, `f(x+k, y)` and `f(x+k+1, y)`. Only lanes that
/// fall inside the row are returned.
pub fn horizontal_pass_stride<T: Pixel, F: Fold>(
    f: &Image<T>,
    x: usize,
    y: usize,
    lanes: LaneConfig,
) -> Vec<T> {
    assert!(x < f.width() && y < f.height(), "({x}, {y}) outside image");
    let valid = lanes.get().min(f.width() - x);
    with_lanes!(lanes.get(), L => {
        // SAFETY: rows are padded for a full lane group either side.
        let group = unsafe {
            hpass::<T, F, L>(f.as_ptr().add(y * f.stride()), x, f.width())
        };
        group[..valid].to_vec()
    })
}

/// Replace row `y` by its horizontal 3-tap fold, in place.
///
/// The left neighbour group is loaded before each store so that the value
/// shared by two consecutive groups is read before it is overwritten.
pub fn inplace_row<T: Pixel, F: Fold>(f: &mut Image<T>, y: usize, lanes: LaneConfig) {
    assert!(y < f.height(), "row {y} outside image");
    let width = f.width();
    let row = unsafe { f.as_mut_ptr().add(y * f.stride()) };
    with_lanes!(lanes.get(), L => unsafe { row_kernel::<T, F, L>(row, width) })
}

#[inline(always)]
unsafe fn row_kernel<T: Pixel, F: Fold, const L: usize>(row: *mut T, width: usize) {
    let mut a = load::<T, L>(row.sub(1));
    a[0] = F::neutral();
    let mut col = 0;
    while col < width {
        let p = row.add(col);
        let b = load::<T, L>(p);
        let mut c = load::<T, L>(p.add(1));
        if col + L >= width {
            for (k, v) in c.iter_mut().enumerate() {
                if col + k + 1 >= width {
                    *v = F::neutral();
                }
            }
        }
        let out = fold3::<T, F, L>(a, b, c);
        // preload the next left neighbours before the store clobbers them
        a = load::<T, L>(p.add(L - 1));
        store(p, out, L.min(width - col));
        col += L;
    }
}

pub fn inplace_row_erode<T: Pixel>(f: &mut Image<T>, y: usize, lanes: LaneConfig) {
    inplace_row::<T, super::Erode>(f, y, lanes)
}

pub fn inplace_row_dilate<T: Pixel>(f: &mut Image<T>, y: usize, lanes: LaneConfig) {
    inplace_row::<T, super::Dilate>(f, y, lanes)
}

/// Replace the whole image by its vertical 3-tap fold, in place, using a
/// single row buffer for the pre-overwrite previous row.
pub fn inplace_vertical<T: Pixel, F: Fold>(f: &mut Image<T>, lanes: LaneConfig) {
    let (width, height, stride) = (f.width(), f.height(), f.stride());
    let base = f.as_mut_ptr();
    with_lanes!(lanes.get(), L => unsafe {
        vertical_kernel::<T, F, L>(base, width, height, stride)
    })
}

#[inline(always)]
unsafe fn vertical_kernel<T: Pixel, F: Fold, const L: usize>(
    base: *mut T,
    width: usize,
    height: usize,
    stride: usize,
) {
    let mut cache = vec![F::neutral::<T>(); width.div_ceil(L) * L];
    for y in 0..height {
        let row = base.add(y * stride);
        let mut col = 0;
        while col < width {
            let a = load::<T, L>(cache.as_ptr().add(col));
            let b = load::<T, L>(row.add(col));
            let c = if y + 1 < height {
                load::<T, L>(row.add(stride + col))
            } else {
                splat(F::neutral())
            };
            store(row.add(col), fold2::<T, F, L>(fold2::<T, F, L>(a, b), c), L.min(width - col));
            store(cache.as_mut_ptr().add(col), b, L);
            col += L;
        }
    }
}

pub fn inplace_vertical_erode<T: Pixel>(f: &mut Image<T>, lanes: LaneConfig) {
    inplace_vertical::<T, super::Erode>(f, lanes)
}

pub fn inplace_vertical_dilate<T: Pixel>(f: &mut Image<T>, lanes: LaneConfig) {
    inplace_vertical::<T, super::Dilate>(f, lanes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Dilate, Erode};

    fn row<T: Pixel>(v: &[T]) -> Image<T> {
        Image::from_rows(&[v]).unwrap()
    }

    #[test]
    fn stride_min_examples() {
        let f = row(&[5u8, 3, 7, 1]);
        let g = horizontal_pass_stride::<_, Erode>(&f, 0, 0, LaneConfig::new(4).unwrap());
        assert_eq!(g, vec![3, 3, 1, 1]);

        let c = row(&[6u16; 9]);
        for l in LaneConfig::ALL {
            let g = horizontal_pass_stride::<_, Erode>(&c, 0, 0, l);
            assert!(g.iter().all(|&v| v == 6));
        }
    }

    #[test]
    fn stride_is_lane_independent() {
        let vals: Vec<u8> = (0..1024u32).map(|i| ((i * 7919) % 251) as u8).collect();
        let f = row(&vals);
        let scalar: Vec<u8> = (0..1024)
            .map(|x| horizontal_pass_stride::<_, Erode>(&f, x, 0, LaneConfig::SCALAR)[0])
            .collect();
        let eight = LaneConfig::new(8).unwrap();
        let mut grouped = Vec::new();
        for x in (0..1024).step_by(8) {
            grouped.extend(horizontal_pass_stride::<_, Erode>(&f, x, 0, eight));
        }
        assert_eq!(scalar, grouped);
        // naive 3-tap
        for (x, &v) in scalar.iter().enumerate() {
            let lo = x.saturating_sub(1);
            let hi = (x + 1).min(1023);
            assert_eq!(v, *vals[lo..=hi].iter().min().unwrap());
        }
    }

    #[test]
    fn row_erode_examples() {
        for l in LaneConfig::ALL {
            let mut f = row(&[5u8, 3, 7, 1]);
            inplace_row_erode(&mut f, 0, l);
            assert_eq!(f.to_vec(), vec![3, 3, 1, 1], "L={l:?}");

            let mut f = row(&[1u8, 2, 3, 4]);
            inplace_row_erode(&mut f, 0, l);
            assert_eq!(f.to_vec(), vec![1, 1, 2, 3]);

            let mut f = row(&[1u8, 2, 3, 4]);
            inplace_row_dilate(&mut f, 0, l);
            assert_eq!(f.to_vec(), vec![2, 3, 4, 4]);
        }
    }

    #[test]
    fn row_erode_matches_out_of_place() {
        let vals: Vec<f32> = (0..133).map(|i| ((i * 37) % 101) as f32 - 50.0).collect();
        let expected: Vec<f32> = (0..vals.len())
            .map(|x| {
                let lo = x.saturating_sub(1);
                let hi = (x + 1).min(vals.len() - 1);
                vals[lo..=hi].iter().copied().fold(f32::MAX, f32::min)
            })
            .collect();
        for l in LaneConfig::ALL {
            let mut f = row(&vals);
            inplace_row::<_, Erode>(&mut f, 0, l);
            assert_eq!(f.to_vec(), expected, "L={l:?}");
        }
    }

    #[test]
    fn vertical_examples() {
        for l in LaneConfig::ALL {
            let mut f = Image::<u8>::from_rows(&[[4u8], [2], [6]]).unwrap();
            inplace_vertical_erode(&mut f, l);
            assert_eq!(f.to_vec(), vec![2, 2, 2]);

            let mut c = Image::<u16>::new_filled(5, 4, 9).unwrap();
            inplace_vertical_erode(&mut c, l);
            assert!(c.pixels().all(|v| v == 9));

            let mut f = Image::<u8>::from_rows(&[[4u8], [2], [6]]).unwrap();
            inplace_vertical::<_, Dilate>(&mut f, l);
            assert_eq!(f.to_vec(), vec![4, 6, 6]);
        }
    }
}
