//! Pixel buffers, element types and pointwise arithmetic.
//!
//! Every [`Image`] stores its rows with a fixed stride that leaves room for a
//! full lane group past the last column, plus one slot in front of the first
//! row. Kernels may therefore load `L` consecutive elements starting anywhere
//! from column `-1` up to column `width - 1` without leaving the allocation.
//! Those padding slots never influence a result: kernels substitute the
//! neutral element of their fold for every out-of-image neighbour.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest lane group any kernel uses, in elements.
pub const MAX_LANES: usize = 32;

/// Runtime tag for the four supported sample types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElemType {
    U8,
    U16,
    F32,
    F64,
}

impl ElemType {
    pub const ALL: [ElemType; 4] = [ElemType::U8, ElemType::U16, ElemType::F32, ElemType::F64];

    pub fn size_bytes(self) -> usize {
        match self {
            ElemType::U8 => 1,
            ElemType::U16 => 2,
            ElemType::F32 => 4,
            ElemType::F64 => 8,
        }
    }

    /// Code used by the GMS1 container.
    pub fn code(self) -> u8 {
        match self {
            ElemType::U8 => 0,
            ElemType::U16 => 1,
            ElemType::F32 => 2,
            ElemType::F64 => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ElemType::U8),
            1 => Ok(ElemType::U16),
            2 => Ok(ElemType::F32),
            3 => Ok(ElemType::F64),
            other => Err(Error::UnknownElemCode(other)),
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, ElemType::F32 | ElemType::F64)
    }
}

impl fmt::Display for ElemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ElemType::U8 => "u8",
            ElemType::U16 => "u16",
            ElemType::F32 => "f32",
            ElemType::F64 => "f64",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for ElemType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u8" => Ok(ElemType::U8),
            "u16" => Ok(ElemType::U16),
            "f32" => Ok(ElemType::F32),
            "f64" => Ok(ElemType::F64),
            _ => Err(Error::InvalidParameter(format!("unknown element type `{s}`"))),
        }
    }
}

/// Accumulator used for exact image sums.
pub trait Accumulator:
    Copy + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const ZERO: Self;
    fn add(self, other: Self) -> Self;
    fn sub(self, other: Self) -> Self;
    fn as_f64(self) -> f64;
}

impl Accumulator for u64 {
    const ZERO: Self = 0;
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Accumulator for f64 {
    const ZERO: Self = 0.0;
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// A sample type the kernels can fold over.
///
/// `LOWEST`/`HIGHEST` are finite for floats; they are the identities of the
/// `max` and `min` folds respectively.
pub trait Pixel:
    Copy + PartialOrd + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const ELEM: ElemType;
    const LOWEST: Self;
    const HIGHEST: Self;
    const ZERO: Self;
    const ONE: Self;

    type Acc: Accumulator;

    #[inline(always)]
    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    #[inline(always)]
    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Subtraction as used by top-hats: saturates at zero for unsigned types,
    /// exact for floats.
    fn sub(self, other: Self) -> Self;

    fn add(self, other: Self) -> Self;

    fn to_f64(self) -> f64;

    /// Exact conversion, `None` if `v` is not representable.
    fn from_f64(v: f64) -> Option<Self>;

    fn to_acc(self) -> Self::Acc;

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    /// Raw bit pattern, widened.
    fn bits(self) -> u64;

    /// Sum of all samples. Integers are summed exactly in 64 bits, floats in
    /// double precision with pairwise summation.
    fn sum_slice(values: &[Self]) -> Self::Acc;
}

macro_rules! impl_unsigned {
    ($t:ty, $elem:expr) => {
        impl Pixel for $t {
            const ELEM: ElemType = $elem;
            const LOWEST: Self = <$t>::MIN;
            const HIGHEST: Self = <$t>::MAX;
            const ZERO: Self = 0;
            const ONE: Self = 1;
            type Acc = u64;

            #[inline(always)]
            fn sub(self, other: Self) -> Self {
                self.saturating_sub(other)
            }
            #[inline(always)]
            fn add(self, other: Self) -> Self {
                self.saturating_add(other)
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn from_f64(v: f64) -> Option<Self> {
                if v.fract() == 0.0 && v >= 0.0 && v <= <$t>::MAX as f64 {
                    Some(v as $t)
                } else {
                    None
                }
            }
            fn to_acc(self) -> u64 {
                self as u64
            }
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("sample width"))
            }
            fn bits(self) -> u64 {
                self as u64
            }
            fn sum_slice(values: &[Self]) -> u64 {
                values.iter().map(|&v| v as u64).sum()
            }
        }
    };
}

macro_rules! impl_float {
    ($t:ty, $elem:expr) => {
        impl Pixel for $t {
            const ELEM: ElemType = $elem;
            const LOWEST: Self = <$t>::MIN;
            const HIGHEST: Self = <$t>::MAX;
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            type Acc = f64;

            #[inline(always)]
            fn sub(self, other: Self) -> Self {
                self - other
            }
            #[inline(always)]
            fn add(self, other: Self) -> Self {
                self + other
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn from_f64(v: f64) -> Option<Self> {
                let c = v as $t;
                if v.is_finite() && c as f64 == v {
                    Some(c)
                } else {
                    None
                }
            }
            fn to_acc(self) -> f64 {
                self as f64
            }
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("sample width"))
            }
            fn bits(self) -> u64 {
                self.to_bits() as u64
            }
            fn sum_slice(values: &[Self]) -> f64 {
                pairwise_sum(values)
            }
        }
    };
}

impl_unsigned!(u8, ElemType::U8);
impl_unsigned!(u16, ElemType::U16);
impl_float!(f32, ElemType::F32);
impl_float!(f64, ElemType::F64);

fn pairwise_sum<T: Pixel>(values: &[T]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        return values.iter().fold(0.0, |acc, v| acc + v.to_f64());
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// A row-major 2-D image with padded rows.
#[derive(Clone)]
pub struct Image<T> {
    width: usize,
    height: usize,
    stride: usize,
    // data[0] is the slot left of pixel (0, 0); pixel (x, y) is at
    // ORIGIN + y * stride + x.
    data: Vec<T>,
}

const ORIGIN: usize = 1;

/// Row stride for a given width: room for a full lane group past the last
/// column, rounded to a multiple of the lane group.
pub fn stride_for(width: usize) -> usize {
    (width + MAX_LANES).div_ceil(MAX_LANES) * MAX_LANES
}

impl<T: Pixel> Image<T> {
    pub fn new_filled(width: usize, height: usize, value: T) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension { width, height });
        }
        let stride = stride_for(width);
        let mut data = vec![T::default(); ORIGIN + height * stride];
        for y in 0..height {
            let start = ORIGIN + y * stride;
            data[start..start + width].fill(value);
        }
        Ok(Image {
            width,
            height,
            stride,
            data,
        })
    }

    /// Checked fill from an `f64`, rejecting values the element type cannot
    /// represent.
    pub fn new_filled_f64(width: usize, height: usize, value: f64) -> Result<Self> {
        let v = T::from_f64(value).ok_or(Error::ValueOutOfRange {
            value,
            elem: T::ELEM,
        })?;
        Self::new_filled(width, height, v)
    }

    /// Build from compact row-major samples.
    pub fn from_vec(width: usize, height: usize, samples: Vec<T>) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::Truncated {
                expected: width * height,
                found: samples.len(),
            });
        }
        let mut img = Self::new_filled(width, height, T::ZERO)?;
        for (y, row) in samples.chunks_exact(width).enumerate() {
            img.row_mut(y).copy_from_slice(row);
        }
        Ok(img)
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != width) {
            return Err(Error::InvalidParameter("ragged rows".into()));
        }
        let samples = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_vec(width, height, samples)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut img = Self::new_filled(width, height, T::ZERO)?;
        for y in 0..height {
            for (x, v) in img.row_mut(y).iter_mut().enumerate() {
                *v = f(x, y);
            }
        }
        Ok(img)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn elem(&self) -> ElemType {
        T::ELEM
    }

    pub fn same_shape<U: Pixel>(&self, other: &Image<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape<U: Pixel>(&self, other: &Image<U>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ))
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        assert!(x < self.width && y < self.height);
        self.data[ORIGIN + y * self.stride + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        assert!(x < self.width && y < self.height);
        self.data[ORIGIN + y * self.stride + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        let start = ORIGIN + y * self.stride;
        &self.data[start..start + self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, y: usize) -> &mut [T] {
        let start = ORIGIN + y * self.stride;
        &mut self.data[start..start + self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.height).map(move |y| self.row(y))
    }

    pub fn pixels(&self) -> impl Iterator<Item = T> + '_ {
        self.rows().flat_map(|r| r.iter().copied())
    }

    /// Compact row-major copy of the samples.
    pub fn to_vec(&self) -> Vec<T> {
        self.pixels().collect()
    }

    pub fn map<U: Pixel>(&self, mut f: impl FnMut(T) -> U) -> Image<U> {
        Image::from_fn(self.width, self.height, |x, y| f(self.get(x, y)))
            .expect("non-empty by construction")
    }

    /// Exact fold over all pixels.
    pub fn global_extreme(&self, which: Extreme) -> T {
        let fold = match which {
            Extreme::Min => T::min_of,
            Extreme::Max => T::max_of,
        };
        let mut pixels = self.pixels();
        let first = pixels.next().expect("images are non-empty");
        pixels.fold(first, fold)
    }

    pub fn is_flat(&self) -> bool {
        let first = self.get(0, 0);
        self.rows().all(|r| r.iter().all(|&v| v == first))
    }

    /// Sum of all pixels, see [`Pixel::sum_slice`].
    pub fn pixel_sum(&self) -> T::Acc {
        T::sum_slice(&self.to_vec())
    }

    pub fn pointwise(&self, other: &Image<T>, op: PointwiseOp) -> Result<Image<T>> {
        self.check_shape(other)?;
        let mut out = self.clone();
        out.pointwise_assign(other, op)?;
        Ok(out)
    }

    pub fn pointwise_assign(&mut self, other: &Image<T>, op: PointwiseOp) -> Result<()> {
        self.check_shape(other)?;
        for y in 0..self.height {
            let b = other.row(y);
            for (a, &b) in self.row_mut(y).iter_mut().zip(b) {
                *a = op.apply(*a, b);
            }
        }
        Ok(())
    }

    /// Subtract a scalar from every pixel with [`Pixel::sub`] semantics.
    pub fn sub_scalar(&self, h: T) -> Image<T> {
        self.map(|v| v.sub(h))
    }

    pub(crate) fn as_mut_ptr(&mut self) -> *mut T {
        // SAFETY: ORIGIN < data.len() for every non-empty image.
        unsafe { self.data.as_mut_ptr().add(ORIGIN) }
    }

    pub(crate) fn as_ptr(&self) -> *const T {
        // SAFETY: as above.
        unsafe { self.data.as_ptr().add(ORIGIN) }
    }
}

impl<T: Pixel> PartialEq for Image<T> {
    /// Bit-level comparison of the visible samples; padding is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.same_shape(other)
            && self
                .pixels()
                .zip(other.pixels())
                .all(|(a, b)| a.bits() == b.bits())
    }
}

impl<T: Pixel> fmt::Debug for Image<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Image<{}>({}x{})", T::ELEM, self.width, self.height)?;
        if self.width * self.height <= 64 {
            let rows: Vec<Vec<T>> = self.rows().map(|r| r.to_vec()).collect();
            write!(f, " {rows:?}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extreme {
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointwiseOp {
    Min,
    Max,
    /// `max(a - b, 0)` for every element type.
    SubSaturating,
    /// [`Pixel::sub`]: saturating for unsigned types, exact for floats.
    Sub,
}

impl PointwiseOp {
    #[inline]
    pub fn apply<T: Pixel>(self, a: T, b: T) -> T {
        match self {
            PointwiseOp::Min => a.min_of(b),
            PointwiseOp::Max => a.max_of(b),
            PointwiseOp::SubSaturating => a.sub(b).max_of(T::ZERO),
            PointwiseOp::Sub => a.sub(b),
        }
    }
}

/// An image of any supported element type.
#[derive(Clone, Debug, PartialEq)]
pub enum DynImage {
    U8(Image<u8>),
    U16(Image<u16>),
    F32(Image<f32>),
    F64(Image<f64>),
}

/// Run an expression generically over the concrete image inside a
/// [`DynImage`].
#[macro_export]
macro_rules! with_dyn_image {
    ($dyn:expr, $img:ident => $body:expr) => {
        match $dyn {
            $crate::image::DynImage::U8($img) => $body,
            $crate::image::DynImage::U16($img) => $body,
            $crate::image::DynImage::F32($img) => $body,
            $crate::image::DynImage::F64($img) => $body,
        }
    };
}

impl DynImage {
    pub fn elem(&self) -> ElemType {
        with_dyn_image!(self, img => img.elem())
    }

    pub fn dims(&self) -> (usize, usize) {
        with_dyn_image!(self, img => img.dims())
    }

    /// Convert samples to another element type; every sample must be exactly
    /// representable in the target type.
    pub fn convert(&self, to: ElemType) -> Result<DynImage> {
        fn conv<S: Pixel, D: Pixel>(src: &Image<S>) -> Result<Image<D>> {
            let mut out = Image::<D>::new_filled(src.width(), src.height(), D::ZERO)?;
            for y in 0..src.height() {
                for (d, &s) in out.row_mut(y).iter_mut().zip(src.row(y)) {
                    let v = s.to_f64();
                    *d = D::from_f64(v).ok_or(Error::ValueOutOfRange { value: v, elem: D::ELEM })?;
                }
            }
            Ok(out)
        }
        with_dyn_image!(self, img => Ok(match to {
            ElemType::U8 => DynImage::U8(conv(img)?),
            ElemType::U16 => DynImage::U16(conv(img)?),
            ElemType::F32 => DynImage::F32(conv(img)?),
            ElemType::F64 => DynImage::F64(conv(img)?),
        }))
    }
}

macro_rules! dyn_from {
    ($t:ty, $var:ident) => {
        impl From<Image<$t>> for DynImage {
            fn from(img: Image<$t>) -> Self {
                DynImage::$var(img)
            }
        }
    };
}

dyn_from!(u8, U8);
dyn_from!(u16, U16);
dyn_from!(f32, F32);
dyn_from!(f64, F64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filled_images() {
        let img = Image::<u8>::new_filled(3, 3, 5).unwrap();
        assert!(img.pixels().all(|v| v == 5));
        assert_eq!(img.pixels().count(), 9);

        let img = Image::<f64>::new_filled(1, 1, 0.0).unwrap();
        assert_eq!(img.to_vec(), vec![0.0]);

        let img = Image::<u16>::new_filled(4, 2, 65535).unwrap();
        assert!(img.pixels().all(|v| v == u16::MAX));
    }

    #[test]
    fn filled_rejects_bad_input() {
        assert!(matches!(
            Image::<u8>::new_filled(0, 3, 1),
            Err(Error::ZeroDimension { .. })
        ));
        assert!(matches!(
            Image::<u8>::new_filled_f64(2, 2, 256.0),
            Err(Error::ValueOutOfRange { .. })
        ));
        assert!(Image::<u16>::new_filled_f64(2, 2, -1.0).is_err());
        assert!(Image::<u8>::new_filled_f64(2, 2, 1.5).is_err());
        assert!(Image::<f32>::new_filled_f64(2, 2, 1e300).is_err());
    }

    #[test]
    fn stride_leaves_room_for_lane_groups() {
        for w in [1, 7, 31, 32, 33, 100] {
            let s = stride_for(w);
            assert!(s >= w + MAX_LANES);
            assert_eq!(s % MAX_LANES, 0);
        }
    }

    #[test]
    fn pointwise_ops() {
        let a = Image::<u8>::from_rows(&[[5u8, 3]]).unwrap();
        let b = Image::<u8>::from_rows(&[[4u8, 9]]).unwrap();
        assert_eq!(a.pointwise(&b, PointwiseOp::Min).unwrap().to_vec(), vec![4, 3]);
        assert_eq!(a.pointwise(&b, PointwiseOp::Max).unwrap().to_vec(), vec![5, 9]);

        let a = Image::<u8>::from_rows(&[[2u8, 7]]).unwrap();
        let b = Image::<u8>::from_rows(&[[5u8, 1]]).unwrap();
        assert_eq!(
            a.pointwise(&b, PointwiseOp::SubSaturating).unwrap().to_vec(),
            vec![0, 6]
        );
        assert_eq!(a.pointwise(&b, PointwiseOp::Sub).unwrap().to_vec(), vec![0, 6]);

        let a = Image::<f32>::from_rows(&[[2.0f32, 7.0]]).unwrap();
        let b = Image::<f32>::from_rows(&[[5.0f32, 1.0]]).unwrap();
        assert_eq!(a.pointwise(&b, PointwiseOp::Sub).unwrap().to_vec(), vec![-3.0, 6.0]);
        assert_eq!(
            a.pointwise(&b, PointwiseOp::SubSaturating).unwrap().to_vec(),
            vec![0.0, 6.0]
        );
    }

    #[test]
    fn pointwise_shape_mismatch() {
        let a = Image::<u8>::new_filled(2, 2, 0).unwrap();
        let b = Image::<u8>::new_filled(2, 3, 0).unwrap();
        assert!(matches!(
            a.pointwise(&b, PointwiseOp::Min),
            Err(Error::ShapeMismatch(..))
        ));
    }

    #[test]
    fn extremes() {
        let f = Image::<u8>::from_rows(&[[1u8, 9], [3, 2]]).unwrap();
        assert_eq!(f.global_extreme(Extreme::Max), 9);
        assert_eq!(f.global_extreme(Extreme::Min), 1);
        let c = Image::<f32>::new_filled(5, 4, 2.5).unwrap();
        assert_eq!(c.global_extreme(Extreme::Max), 2.5);
        assert_eq!(c.global_extreme(Extreme::Min), 2.5);
    }

    #[test]
    fn neutral_elements_are_finite() {
        assert_eq!(<f32 as Pixel>::HIGHEST, f32::MAX);
        assert_eq!(<f64 as Pixel>::LOWEST, f64::MIN);
        assert_eq!(<u8 as Pixel>::HIGHEST.min_of(7), 7);
        assert_eq!(<u16 as Pixel>::LOWEST.max_of(7), 7);
    }

    #[test]
    fn convert_checks_range() {
        let f = DynImage::from(Image::<u16>::from_rows(&[[1u16, 300]]).unwrap());
        assert!(f.convert(ElemType::U8).is_err());
        let g = f.convert(ElemType::F32).unwrap();
        assert_eq!(g.elem(), ElemType::F32);
        assert_eq!(g.convert(ElemType::U16).unwrap(), f);
    }
}
