//! Streaming, in-place, lane-parallel 3x3 kernels.
//!
//! The 3x3 square fold is computed as a horizontal 3-tap pass followed by a
//! vertical one. [`rowwise`] exposes each half separately; the `stream_*`
//! functions fuse both into a single top-to-bottom pass that overwrites the
//! image row by row, keeping only two row buffers of horizontal results.
//!
//! Every kernel is generic over a [`Fold`]: [`Erode`] folds with `min`,
//! [`Dilate`] with `max`. Pixels outside the image contribute the fold's
//! neutral element, which is exactly the clipped-window definition of the
//! operators.

mod lanes;
pub mod rowwise;
pub(crate) mod stream;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Pixel};
pub use rowwise::{
    horizontal_pass_stride, inplace_row_dilate, inplace_row_erode, inplace_vertical_dilate,
    inplace_vertical_erode,
};
use stream::{Epilogue, Eta, Geodesic, GeodesicConvergent, Plain, Plane, QdtStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Erode,
    Dilate,
}

/// The fold of an elementary kernel and everything derived from it.
pub trait Fold: Copy + Send + Sync + 'static {
    const DIRECTION: Direction;

    /// Identity of the fold.
    fn neutral<T: Pixel>() -> T;

    fn fold<T: Pixel>(a: T, b: T) -> T;

    /// Geodesic constraint against a mask value.
    fn clamp<T: Pixel>(v: T, mask: T) -> T;

    /// Non-negative distance travelled from `old` to `new`.
    fn gap<T: Pixel>(old: T, new: T) -> T;

    /// One unit step away from a folded value, back towards the original.
    fn relax<T: Pixel>(v: T) -> T;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Erode;

#[derive(Clone, Copy, Debug, Default)]
pub struct Dilate;

impl Fold for Erode {
    const DIRECTION: Direction = Direction::Erode;

    #[inline(always)]
    fn neutral<T: Pixel>() -> T {
        T::HIGHEST
    }
    #[inline(always)]
    fn fold<T: Pixel>(a: T, b: T) -> T {
        a.min_of(b)
    }
    #[inline(always)]
    fn clamp<T: Pixel>(v: T, mask: T) -> T {
        v.max_of(mask)
    }
    #[inline(always)]
    fn gap<T: Pixel>(old: T, new: T) -> T {
        old.sub(new)
    }
    #[inline(always)]
    fn relax<T: Pixel>(v: T) -> T {
        v.add(T::ONE)
    }
}

impl Fold for Dilate {
    const DIRECTION: Direction = Direction::Dilate;

    #[inline(always)]
    fn neutral<T: Pixel>() -> T {
        T::LOWEST
    }
    #[inline(always)]
    fn fold<T: Pixel>(a: T, b: T) -> T {
        a.max_of(b)
    }
    #[inline(always)]
    fn clamp<T: Pixel>(v: T, mask: T) -> T {
        v.min_of(mask)
    }
    #[inline(always)]
    fn gap<T: Pixel>(old: T, new: T) -> T {
        new.sub(old)
    }
    #[inline(always)]
    fn relax<T: Pixel>(v: T) -> T {
        v.sub(T::ONE)
    }
}

/// Number of elements processed per step.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LaneConfig(usize);

impl LaneConfig {
    pub const SCALAR: LaneConfig = LaneConfig(1);
    pub const ALL: [LaneConfig; 6] = [
        LaneConfig(1),
        LaneConfig(2),
        LaneConfig(4),
        LaneConfig(8),
        LaneConfig(16),
        LaneConfig(32),
    ];

    pub fn new(lanes: usize) -> Result<Self> {
        if lanes.is_power_of_two() && lanes <= crate::image::MAX_LANES {
            Ok(LaneConfig(lanes))
        } else {
            Err(Error::InvalidParameter(format!(
                "lane count must be one of 1, 2, 4, 8, 16, 32 (got {lanes})"
            )))
        }
    }

    /// One 256-bit register worth of `T`.
    pub fn widest<T: Pixel>() -> Self {
        LaneConfig(32 / T::ELEM.size_bytes())
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Debug for LaneConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

macro_rules! with_lanes {
    ($lanes:expr, $L:ident => $body:expr) => {
        match $lanes {
            1 => {
                const $L: usize = 1;
                $body
            }
            2 => {
                const $L: usize = 2;
                $body
            }
            4 => {
                const $L: usize = 4;
                $body
            }
            8 => {
                const $L: usize = 8;
                $body
            }
            16 => {
                const $L: usize = 16;
                $body
            }
            32 => {
                const $L: usize = 32;
                $body
            }
            other => unreachable!("unsupported lane count {other}"),
        }
    };
}
pub(crate) use with_lanes;

/// The elementary stages a filter chain is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    Erode3x3,
    Dilate3x3,
    GeodesicErode,
    GeodesicDilate,
    GeodesicErodeConvergent,
    GeodesicDilateConvergent,
    QdtErodeStep,
    EtaStep,
}

impl KernelKind {
    pub fn direction(self) -> Direction {
        match self {
            KernelKind::Dilate3x3 | KernelKind::GeodesicDilate | KernelKind::GeodesicDilateConvergent => {
                Direction::Dilate
            }
            _ => Direction::Erode,
        }
    }

    pub fn needs_mask(self) -> bool {
        matches!(
            self,
            KernelKind::GeodesicErode
                | KernelKind::GeodesicDilate
                | KernelKind::GeodesicErodeConvergent
                | KernelKind::GeodesicDilateConvergent
        )
    }

    pub fn needs_qdt(self) -> bool {
        self == KernelKind::QdtErodeStep
    }

    /// Convergent stages report whether they changed anything and are
    /// re-run by the pipeline until they do not.
    pub fn is_convergent(self) -> bool {
        matches!(
            self,
            KernelKind::GeodesicErodeConvergent
                | KernelKind::GeodesicDilateConvergent
                | KernelKind::EtaStep
        )
    }
}

/// Returned by a [`RowSync`] wait when the surrounding chain was aborted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Aborted;

/// Row-level synchronization between a kernel and its neighbours in a
/// filter chain.
pub trait RowSync {
    /// Block until input rows needed to produce output row `row` are
    /// available.
    fn wait_for(&self, row: usize) -> std::result::Result<(), Aborted>;

    /// Announce that output rows `0..rows_done` are final.
    fn publish(&self, rows_done: usize);
}

/// No-op synchronization for a kernel that owns its image.
#[derive(Clone, Copy, Debug, Default)]
pub struct Unsynchronized;

impl RowSync for Unsynchronized {
    #[inline]
    fn wait_for(&self, _row: usize) -> std::result::Result<(), Aborted> {
        Ok(())
    }
    #[inline]
    fn publish(&self, _rows_done: usize) {}
}

/// The two row buffers of a streaming kernel.
pub struct RowCache<T> {
    c1: Vec<T>,
    c2: Vec<T>,
}

impl<T: Pixel> RowCache<T> {
    /// Buffers for rows of `width` pixels, rounded up to whole lane groups.
    pub fn new(width: usize, lanes: LaneConfig) -> Self {
        let n = width.div_ceil(lanes.get()) * lanes.get();
        RowCache {
            c1: vec![T::default(); n],
            c2: vec![T::default(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.c1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c1.is_empty()
    }

    /// Total auxiliary elements held by this cache.
    pub fn aux_elements(&self) -> usize {
        self.c1.len() + self.c2.len()
    }

    pub(crate) fn buffers_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.c1, &mut self.c2)
    }
}

/// Best residual and its stage index for every pixel of a quasi-distance
/// transform in progress.
#[derive(Clone, Debug, PartialEq)]
pub struct QdtState<T: Pixel> {
    pub residual: Image<T>,
    pub distance: Image<u16>,
}

impl<T: Pixel> QdtState<T> {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Ok(QdtState {
            residual: Image::new_filled(width, height, T::ZERO)?,
            distance: Image::new_filled(width, height, 0)?,
        })
    }
}

/// Outcome of one kernel pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelStats {
    /// Whether any pixel changed. Only tracked by convergent and QDT kernels;
    /// plain kernels always report `true`.
    pub changed: bool,
    /// Elements held in row buffers during the pass.
    pub aux_elements: usize,
}

impl KernelStats {
    pub fn converged(&self) -> bool {
        !self.changed
    }
}

/// Raw pointers to everything a stage touches.
#[derive(Clone, Copy)]
pub(crate) struct StageIo<T> {
    pub f: Plane<T>,
    pub mask: *const T,
    pub residual: *mut T,
    pub distance: *mut u16,
    pub qdt_index: u16,
}

impl<T: Pixel> StageIo<T> {
    pub(crate) fn new(f: &mut Image<T>) -> Self {
        StageIo {
            f: Plane {
                ptr: f.as_mut_ptr(),
                width: f.width(),
                height: f.height(),
                stride: f.stride(),
            },
            mask: std::ptr::null(),
            residual: std::ptr::null_mut(),
            distance: std::ptr::null_mut(),
            qdt_index: 0,
        }
    }
}

fn simd_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn stream_avx2<T, F, E, S, const L: usize>(
    f: Plane<T>,
    epi: &mut E,
    cache: &mut RowCache<T>,
    sync: &S,
) -> std::result::Result<(), Aborted>
where
    T: Pixel,
    F: Fold,
    E: Epilogue<T>,
    S: RowSync + ?Sized,
{
    stream::stream::<T, F, E, S, L>(f, epi, cache, sync)
}

unsafe fn stream_dispatch<T, F, E, S>(
    f: Plane<T>,
    epi: &mut E,
    cache: &mut RowCache<T>,
    lanes: LaneConfig,
    sync: &S,
) -> std::result::Result<(), Aborted>
where
    T: Pixel,
    F: Fold,
    E: Epilogue<T>,
    S: RowSync + ?Sized,
{
    with_lanes!(lanes.get(), L => {
        #[cfg(target_arch = "x86_64")]
        if L > 1 && simd_available() {
            return stream_avx2::<T, F, E, S, L>(f, epi, cache, sync);
        }
        stream::stream::<T, F, E, S, L>(f, epi, cache, sync)
    })
}

/// Run one stage of `kind` over `io`.
///
/// # Safety
/// Every non-null pointer in `io` must address a live image of `io.f`'s
/// width and height; the pointers required by `kind` must be non-null.
/// Concurrent access must follow the row protocol of `sync`.
pub(crate) unsafe fn run_stage<T: Pixel, S: RowSync + ?Sized>(
    kind: KernelKind,
    io: &StageIo<T>,
    cache: &mut RowCache<T>,
    lanes: LaneConfig,
    sync: &S,
) -> std::result::Result<KernelStats, Aborted> {
    assert!(cache.len() >= io.f.width && cache.len().is_multiple_of(lanes.get()));
    let aux_elements = cache.aux_elements();
    let f = io.f;
    let changed = match kind {
        KernelKind::Erode3x3 => {
            stream_dispatch::<T, Erode, _, S>(f, &mut Plain, cache, lanes, sync)?;
            true
        }
        KernelKind::Dilate3x3 => {
            stream_dispatch::<T, Dilate, _, S>(f, &mut Plain, cache, lanes, sync)?;
            true
        }
        KernelKind::GeodesicErode => {
            let mut epi = Geodesic { mask: io.mask };
            stream_dispatch::<T, Erode, _, S>(f, &mut epi, cache, lanes, sync)?;
            true
        }
        KernelKind::GeodesicDilate => {
            let mut epi = Geodesic { mask: io.mask };
            stream_dispatch::<T, Dilate, _, S>(f, &mut epi, cache, lanes, sync)?;
            true
        }
        KernelKind::GeodesicErodeConvergent => {
            let mut epi = GeodesicConvergent {
                mask: io.mask,
                changed: false,
            };
            stream_dispatch::<T, Erode, _, S>(f, &mut epi, cache, lanes, sync)?;
            epi.changed
        }
        KernelKind::GeodesicDilateConvergent => {
            let mut epi = GeodesicConvergent {
                mask: io.mask,
                changed: false,
            };
            stream_dispatch::<T, Dilate, _, S>(f, &mut epi, cache, lanes, sync)?;
            epi.changed
        }
        KernelKind::QdtErodeStep => {
            let mut epi = QdtStep {
                residual: io.residual,
                distance: io.distance,
                index: io.qdt_index,
                changed: false,
            };
            stream_dispatch::<T, Erode, _, S>(f, &mut epi, cache, lanes, sync)?;
            epi.changed
        }
        KernelKind::EtaStep => {
            let mut epi = Eta { changed: false };
            stream_dispatch::<T, Erode, _, S>(f, &mut epi, cache, lanes, sync)?;
            epi.changed
        }
    };
    Ok(KernelStats {
        changed,
        aux_elements,
    })
}

/// Apply one stage of `kind` to `f` in place, synchronizing rows through
/// `sync`. `mask` is required by the geodesic kinds, `qdt` (state and stage
/// index) by [`KernelKind::QdtErodeStep`].
pub fn apply_stage<T: Pixel>(
    kind: KernelKind,
    f: &mut Image<T>,
    mask: Option<&Image<T>>,
    qdt: Option<(&mut QdtState<T>, u16)>,
    lanes: LaneConfig,
    sync: &dyn RowSync,
) -> Result<KernelStats> {
    let mut io = StageIo::new(f);
    if kind.needs_mask() {
        let m = mask.ok_or_else(|| Error::InvalidParameter(format!("{kind:?} needs a mask")))?;
        f.check_shape(m)?;
        io.mask = m.as_ptr();
    }
    if kind.needs_qdt() {
        let (state, j) = qdt.ok_or_else(|| Error::InvalidParameter(format!("{kind:?} needs QDT state")))?;
        f.check_shape(&state.residual)?;
        f.check_shape(&state.distance)?;
        if j == 0 {
            return Err(Error::InvalidParameter("QDT stage index starts at 1".into()));
        }
        io.residual = state.residual.as_mut_ptr();
        io.distance = state.distance.as_mut_ptr();
        io.qdt_index = j;
    }
    // SAFETY: every pointer comes from a borrowed image of f's shape, and the
    // borrows outlive the call.
    let mut cache = RowCache::new(f.width(), lanes);
    unsafe { run_stage(kind, &io, &mut cache, lanes, sync) }.map_err(|_| Error::StageFailed {
        stage: 1,
        message: "aborted by row synchronization".into(),
    })
}

fn apply_local<T: Pixel>(
    kind: KernelKind,
    f: &mut Image<T>,
    mask: Option<&Image<T>>,
    lanes: LaneConfig,
) -> Result<KernelStats> {
    apply_stage(kind, f, mask, None, lanes, &Unsynchronized)
}

/// `f <- ε1(f)` in a single in-place pass.
pub fn stream_erode3x3<T: Pixel>(f: &mut Image<T>, lanes: LaneConfig) -> KernelStats {
    apply_local(KernelKind::Erode3x3, f, None, lanes).expect("plain kernels cannot fail")
}

/// `f <- δ1(f)` in a single in-place pass.
pub fn stream_dilate3x3<T: Pixel>(f: &mut Image<T>, lanes: LaneConfig) -> KernelStats {
    apply_local(KernelKind::Dilate3x3, f, None, lanes).expect("plain kernels cannot fail")
}

/// `f <- max(ε1(f), m)`.
pub fn stream_geodesic_erode<T: Pixel>(
    f: &mut Image<T>,
    m: &Image<T>,
    lanes: LaneConfig,
) -> Result<KernelStats> {
    apply_local(KernelKind::GeodesicErode, f, Some(m), lanes)
}

/// `f <- min(δ1(f), m)`.
pub fn stream_geodesic_dilate<T: Pixel>(
    f: &mut Image<T>,
    m: &Image<T>,
    lanes: LaneConfig,
) -> Result<KernelStats> {
    apply_local(KernelKind::GeodesicDilate, f, Some(m), lanes)
}

/// Geodesic erosion that writes only changed lane groups; the returned
/// stats report convergence.
pub fn stream_geodesic_erode_convergent<T: Pixel>(
    f: &mut Image<T>,
    m: &Image<T>,
    lanes: LaneConfig,
) -> Result<KernelStats> {
    apply_local(KernelKind::GeodesicErodeConvergent, f, Some(m), lanes)
}

pub fn stream_geodesic_dilate_convergent<T: Pixel>(
    f: &mut Image<T>,
    m: &Image<T>,
    lanes: LaneConfig,
) -> Result<KernelStats> {
    apply_local(KernelKind::GeodesicDilateConvergent, f, Some(m), lanes)
}

/// Erode `f` in place and fold the residuals into `qdt` as stage `j`.
pub fn qdt_erode_step<T: Pixel>(
    f: &mut Image<T>,
    qdt: &mut QdtState<T>,
    j: u16,
    lanes: LaneConfig,
) -> Result<KernelStats> {
    apply_stage(KernelKind::QdtErodeStep, f, None, Some((qdt, j)), lanes, &Unsynchronized)
}

/// One Lipschitz-correction sweep over a distance image.
pub fn eta_step<T: Pixel>(f: &mut Image<T>, lanes: LaneConfig) -> KernelStats {
    apply_local(KernelKind::EtaStep, f, None, lanes).expect("eta needs no inputs")
}
