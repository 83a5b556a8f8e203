//! Naive reference implementations.
//!
//! Everything here works pixel by pixel on clipped windows, out of place and
//! single threaded. The functions are meant to be obviously correct, not
//! fast; they back the equivalence tests and the CLI's `--oracle` check.

use crate::image::{Image, Pixel};
use crate::kernel::Direction;

fn window_fold<T: Pixel>(f: &Image<T>, x: usize, y: usize, s: usize, dir: Direction) -> T {
    let x0 = x.saturating_sub(s);
    let x1 = (x + s).min(f.width() - 1);
    let y0 = y.saturating_sub(s);
    let y1 = (y + s).min(f.height() - 1);
    let mut acc = f.get(x, y);
    for qy in y0..=y1 {
        for qx in x0..=x1 {
            let v = f.get(qx, qy);
            acc = match dir {
                Direction::Erode => acc.min_of(v),
                Direction::Dilate => acc.max_of(v),
            };
        }
    }
    acc
}

/// Erosion by the `(2s+1)²` square, window clipped to the image.
pub fn naive_erode<T: Pixel>(f: &Image<T>, s: usize) -> Image<T> {
    Image::from_fn(f.width(), f.height(), |x, y| window_fold(f, x, y, s, Direction::Erode))
        .expect("same shape")
}

/// Dilation by the `(2s+1)²` square (symmetric, so equal to its reflection).
pub fn naive_dilate<T: Pixel>(f: &Image<T>, s: usize) -> Image<T> {
    Image::from_fn(f.width(), f.height(), |x, y| window_fold(f, x, y, s, Direction::Dilate))
        .expect("same shape")
}

pub fn naive_morph<T: Pixel>(f: &Image<T>, s: usize, dir: Direction) -> Image<T> {
    match dir {
        Direction::Erode => naive_erode(f, s),
        Direction::Dilate => naive_dilate(f, s),
    }
}

/// `max(ε1(f), m)` for erosion, `min(δ1(f), m)` for dilation.
pub fn naive_geodesic_step<T: Pixel>(f: &Image<T>, m: &Image<T>, dir: Direction) -> Image<T> {
    assert!(f.same_shape(m), "marker and mask must have the same shape");
    let e = naive_morph(f, 1, dir);
    Image::from_fn(f.width(), f.height(), |x, y| match dir {
        Direction::Erode => e.get(x, y).max_of(m.get(x, y)),
        Direction::Dilate => e.get(x, y).min_of(m.get(x, y)),
    })
    .expect("same shape")
}

/// Iterate the geodesic step until nothing changes.
pub fn naive_reconstruct<T: Pixel>(marker: &Image<T>, mask: &Image<T>, dir: Direction) -> Image<T> {
    let mut cur = marker.clone();
    loop {
        let next = naive_geodesic_step(&cur, mask, dir);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Discontinuous quasi-distance before Lipschitz correction: for every pixel
/// the (1-based) index of the first strictly largest residual between
/// successive erosions, and that residual. Zero where no residual is positive.
pub fn naive_qdt_raw<T: Pixel>(f: &Image<T>) -> (Image<u16>, Image<T>) {
    let (w, h) = f.dims();
    let mut d = Image::<u16>::new_filled(w, h, 0).unwrap();
    let mut r = Image::<T>::new_filled(w, h, T::ZERO).unwrap();
    let mut prev = f.clone();
    for s in 1..=w.max(h) {
        let next = naive_erode(&prev, 1);
        for y in 0..h {
            for x in 0..w {
                let res = prev.get(x, y).sub(next.get(x, y));
                if res > r.get(x, y) {
                    r.set(x, y, res);
                    d.set(x, y, s as u16);
                }
            }
        }
        prev = next;
    }
    (d, r)
}

/// One Lipschitz correction sweep: pixels exceeding their 3x3 minimum by
/// more than one are lowered to that minimum plus one.
pub fn naive_eta<T: Pixel>(d: &Image<T>) -> Image<T> {
    let e = naive_erode(d, 1);
    Image::from_fn(d.width(), d.height(), |x, y| {
        let v = d.get(x, y);
        let m = e.get(x, y);
        if v.sub(m) > T::ONE {
            m.add(T::ONE)
        } else {
            v
        }
    })
    .unwrap()
}

/// Quasi-distance transform: returns the corrected distance and the
/// residual image.
pub fn naive_qdt<T: Pixel>(f: &Image<T>) -> (Image<u16>, Image<T>) {
    let (mut d, r) = naive_qdt_raw(f);
    loop {
        let next = naive_eta(&d);
        if next == d {
            return (d, r);
        }
        d = next;
    }
}

fn on_border<T: Pixel>(f: &Image<T>, x: usize, y: usize) -> bool {
    x == 0 || y == 0 || x + 1 == f.width() || y + 1 == f.height()
}

fn border_marker<T: Pixel>(f: &Image<T>, interior: T) -> Image<T> {
    Image::from_fn(f.width(), f.height(), |x, y| {
        if on_border(f, x, y) {
            f.get(x, y)
        } else {
            interior
        }
    })
    .unwrap()
}

fn global<T: Pixel>(f: &Image<T>, dir: Direction) -> T {
    let mut acc = f.get(0, 0);
    for v in f.pixels() {
        acc = match dir {
            Direction::Erode => acc.min_of(v),
            Direction::Dilate => acc.max_of(v),
        };
    }
    acc
}

fn sub_images<T: Pixel>(a: &Image<T>, b: &Image<T>) -> Image<T> {
    Image::from_fn(a.width(), a.height(), |x, y| a.get(x, y).sub(b.get(x, y))).unwrap()
}

pub fn naive_hmax<T: Pixel>(f: &Image<T>, h: T) -> Image<T> {
    let marker = f.map(|v| v.sub(h));
    naive_reconstruct(&marker, f, Direction::Dilate)
}

pub fn naive_dome<T: Pixel>(f: &Image<T>, h: T) -> Image<T> {
    sub_images(f, &naive_hmax(f, h))
}

pub fn naive_hfill<T: Pixel>(f: &Image<T>) -> Image<T> {
    let marker = border_marker(f, global(f, Direction::Dilate));
    naive_reconstruct(&marker, f, Direction::Erode)
}

pub fn naive_raobj<T: Pixel>(f: &Image<T>) -> Image<T> {
    let marker = border_marker(f, global(f, Direction::Erode));
    sub_images(f, &naive_reconstruct(&marker, f, Direction::Dilate))
}

pub fn naive_open_by_reconstruction<T: Pixel>(f: &Image<T>, s: usize) -> Image<T> {
    naive_reconstruct(&naive_erode(f, s), f, Direction::Dilate)
}

pub fn naive_opening<T: Pixel>(f: &Image<T>, s: usize) -> Image<T> {
    naive_dilate(&naive_erode(f, s), s)
}

pub fn naive_closing<T: Pixel>(f: &Image<T>, s: usize) -> Image<T> {
    naive_erode(&naive_dilate(f, s), s)
}

/// Granulometric sums `G_0..=G_S` of openings of increasing size.
pub fn naive_granulometry<T: Pixel>(f: &Image<T>, max_size: usize) -> Vec<T::Acc> {
    (0..=max_size)
        .map(|s| naive_opening(f, s).pixel_sum())
        .collect()
}

/// Alternating sequential filter starting with an opening.
pub fn naive_asf<T: Pixel>(f: &Image<T>, max_size: usize) -> Image<T> {
    let mut cur = f.clone();
    for s in 1..=max_size {
        cur = naive_closing(&naive_opening(&cur, s), s);
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_zero_erodes_everything() {
        let mut f = Image::<u8>::new_filled(3, 3, 9).unwrap();
        f.set(1, 1, 0);
        assert!(naive_erode(&f, 1).pixels().all(|v| v == 0));
        assert_eq!(naive_erode(&f, 0), f);
        assert_eq!(naive_dilate(&f, 0), f);
    }

    #[test]
    fn geodesic_step_fixpoints() {
        let f = Image::<u8>::from_rows(&[[3u8, 8, 1], [4, 4, 9]]).unwrap();
        assert_eq!(naive_geodesic_step(&f, &f, Direction::Erode), f);
        let zero = Image::<u8>::new_filled(3, 2, 0).unwrap();
        assert_eq!(naive_geodesic_step(&f, &zero, Direction::Erode), naive_erode(&f, 1));
    }

    #[test]
    fn reconstruct_examples() {
        let marker = Image::<u8>::from_rows(&[[0u8, 2, 0, 4, 0]]).unwrap();
        let mask = Image::<u8>::from_rows(&[[1u8, 3, 1, 5, 1]]).unwrap();
        let r = naive_reconstruct(&marker, &mask, Direction::Dilate);
        assert_eq!(r.to_vec(), vec![1, 2, 1, 4, 1]);
        assert_eq!(naive_geodesic_step(&r, &mask, Direction::Dilate), r);
        assert_eq!(naive_reconstruct(&mask, &mask, Direction::Dilate), mask);
    }

    #[test]
    fn qdt_plateau() {
        let f = Image::<u8>::from_rows(&[[9u8, 9, 9, 0]]).unwrap();
        let (raw, r) = naive_qdt_raw(&f);
        assert_eq!(raw.to_vec(), vec![3, 2, 1, 0]);
        assert_eq!(r.to_vec(), vec![9, 9, 9, 0]);
        let (d, _) = naive_qdt(&f);
        assert_eq!(d.to_vec(), vec![3, 2, 1, 0]);

        let c = Image::<f32>::new_filled(5, 5, 3.0).unwrap();
        assert!(naive_qdt(&c).0.pixels().all(|v| v == 0));
    }

    #[test]
    fn eta_examples() {
        let d = Image::<u16>::from_rows(&[[0u16, 5, 0]]).unwrap();
        let once = naive_eta(&d);
        assert_eq!(once.to_vec(), vec![0, 1, 0]);
        assert_eq!(naive_eta(&once), once);
        let d = Image::<u16>::from_rows(&[[0u16, 2]]).unwrap();
        assert_eq!(naive_eta(&d).to_vec(), vec![0, 1]);
    }

    #[test]
    fn operator_examples() {
        let f = Image::<u8>::from_rows(&[[1u8, 3, 1, 5, 1]]).unwrap();
        assert_eq!(naive_hmax(&f, 1).to_vec(), vec![1, 2, 1, 4, 1]);
        assert_eq!(naive_dome(&f, 1).to_vec(), vec![0, 1, 0, 1, 0]);

        let f = Image::<u8>::from_rows(&[[5u8, 0, 5]]).unwrap();
        // every pixel of a single row is on the border
        assert_eq!(naive_hfill(&f), f);
        let f = Image::<u8>::from_rows(&[[5u8, 5, 5], [5, 0, 5], [5, 5, 5]]).unwrap();
        assert!(naive_hfill(&f).pixels().all(|v| v == 5));

        let f = Image::<u8>::from_rows(&[[9u8, 9, 0, 7, 0]]).unwrap();
        assert!(naive_raobj(&f).pixels().all(|v| v == 0));
    }
}
