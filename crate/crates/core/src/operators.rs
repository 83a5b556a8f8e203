//! Morphological operators built from kernel chains.
//!
//! Every operator takes the [`Pipeline`] that executes its chains. Outputs
//! do not depend on the pipeline's thread count, pinning or lane width.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{Accumulator, Extreme, Image, Pixel, PointwiseOp};
use crate::kernel::{KernelKind, QdtState};
use crate::pipeline::{Chain, FilterTask, Pipeline};

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorResult<T: Pixel> {
    pub image: Image<T>,
    /// Elementary stages executed, requeues included.
    pub iterations: usize,
    /// Whether the reconstruction reached its fixpoint. True for operators
    /// without one.
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GranulometryResult<A> {
    pub sizes: Vec<usize>,
    /// `G[s]`: sum of the opening of size `s`.
    pub g: Vec<A>,
    /// `PS[s] = G[s] - G[s + 1]`, one shorter than `g`.
    pub ps: Vec<A>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QdtResult<T: Pixel> {
    /// 1-Lipschitz quasi-distance; 0 where no positive residual was seen.
    pub distance: Image<u16>,
    /// Largest residual between successive erosions.
    pub residual: Image<T>,
    pub iterations: usize,
    pub converged: bool,
}

fn run<T: Pixel>(p: &Pipeline, chain: Chain<'_, T>, f: &Image<T>) -> Result<OperatorResult<T>> {
    let mut image = f.clone();
    let report = p.run_chain(chain, &mut image)?;
    Ok(OperatorResult {
        image,
        iterations: report.stages_executed,
        converged: report.converged,
    })
}

/// Erosion by the `(2s+1)²` square as `s` elementary stages.
pub fn erode_s<T: Pixel>(p: &Pipeline, f: &Image<T>, s: usize) -> Result<OperatorResult<T>> {
    run(p, Chain::repeat(KernelKind::Erode3x3, s), f)
}

pub fn dilate_s<T: Pixel>(p: &Pipeline, f: &Image<T>, s: usize) -> Result<OperatorResult<T>> {
    run(p, Chain::repeat(KernelKind::Dilate3x3, s), f)
}

fn reconstruct<T: Pixel>(
    p: &Pipeline,
    marker: &Image<T>,
    mask: &Image<T>,
    kind: KernelKind,
) -> Result<OperatorResult<T>> {
    marker.check_shape(mask)?;
    run(p, Chain::repeat(kind, p.threads()).with_mask(mask), marker)
}

/// Fixpoint of geodesic erosion of `marker` above `mask`.
pub fn reconstruct_erode<T: Pixel>(p: &Pipeline, marker: &Image<T>, mask: &Image<T>) -> Result<OperatorResult<T>> {
    reconstruct(p, marker, mask, KernelKind::GeodesicErodeConvergent)
}

/// Fixpoint of geodesic dilation of `marker` under `mask`.
pub fn reconstruct_dilate<T: Pixel>(p: &Pipeline, marker: &Image<T>, mask: &Image<T>) -> Result<OperatorResult<T>> {
    reconstruct(p, marker, mask, KernelKind::GeodesicDilateConvergent)
}

fn check_h<T: Pixel>(h: T) -> Result<()> {
    if h >= T::ZERO {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("h must be non-negative (got {h})")))
    }
}

/// Suppress maxima of dynamic at most `h`.
pub fn hmax<T: Pixel>(p: &Pipeline, f: &Image<T>, h: T) -> Result<OperatorResult<T>> {
    check_h(h)?;
    reconstruct_dilate(p, &f.sub_scalar(h), f)
}

/// `f - hmax(f, h)`.
pub fn dome<T: Pixel>(p: &Pipeline, f: &Image<T>, h: T) -> Result<OperatorResult<T>> {
    let mut r = hmax(p, f, h)?;
    r.image = f.pointwise(&r.image, PointwiseOp::Sub)?;
    Ok(r)
}

fn border_marker<T: Pixel>(f: &Image<T>, interior: T) -> Image<T> {
    let (w, h) = f.dims();
    let mut m = f.clone();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            m.set(x, y, interior);
        }
    }
    m
}

/// `f` on the border, the global maximum inside.
pub fn marker_hfill<T: Pixel>(f: &Image<T>) -> Image<T> {
    border_marker(f, f.global_extreme(Extreme::Max))
}

/// `f` on the border, the global minimum inside.
pub fn marker_raobj<T: Pixel>(f: &Image<T>) -> Image<T> {
    border_marker(f, f.global_extreme(Extreme::Min))
}

/// Fill the minima not connected to the border.
pub fn hfill<T: Pixel>(p: &Pipeline, f: &Image<T>) -> Result<OperatorResult<T>> {
    reconstruct_erode(p, &marker_hfill(f), f)
}

/// Remove the structures connected to the border.
pub fn raobj<T: Pixel>(p: &Pipeline, f: &Image<T>) -> Result<OperatorResult<T>> {
    let mut r = reconstruct_dilate(p, &marker_raobj(f), f)?;
    r.image = f.pointwise(&r.image, PointwiseOp::Sub)?;
    Ok(r)
}

pub fn open_by_reconstruction<T: Pixel>(p: &Pipeline, f: &Image<T>, s: usize) -> Result<OperatorResult<T>> {
    if s == 0 {
        return Err(Error::InvalidParameter("opening size must be at least 1".into()));
    }
    let eroded = erode_s(p, f, s)?;
    let mut r = reconstruct_dilate(p, &eroded.image, f)?;
    r.iterations += eroded.iterations;
    Ok(r)
}

/// Quasi-distance transform.
///
/// Erosion stages run in blocks until the image is flat, at most
/// `max(width, height)` of them; the distance is then corrected until it is
/// 1-Lipschitz.
pub fn quasi_distance<T: Pixel>(p: &Pipeline, f: &Image<T>) -> Result<QdtResult<T>> {
    let (w, h) = f.dims();
    let max_stages = w.max(h);
    if max_stages > u16::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "quasi-distance supports sides up to {} pixels",
            u16::MAX
        )));
    }
    let block = (4 * p.threads()).max(16);
    let mut state = QdtState::new(w, h)?;
    let mut g = f.clone();
    let mut iterations = 0;
    let mut next = 1;
    while next <= max_stages && !g.is_flat() {
        let len = block.min(max_stages + 1 - next);
        let mut chain = Chain::new();
        for j in next..next + len {
            chain.push_task(FilterTask {
                kind: KernelKind::QdtErodeStep,
                qdt_index: j as u16,
            });
        }
        iterations += p.run_chain(chain.with_qdt(&mut state), &mut g)?.stages_executed;
        next += len;
    }

    let QdtState { residual, mut distance } = state;
    let report = p.run_chain(Chain::repeat(KernelKind::EtaStep, p.threads()), &mut distance)?;
    Ok(QdtResult {
        distance,
        residual,
        iterations: iterations + report.stages_executed,
        converged: report.converged,
    })
}

/// Opening of size `s` as one chain of `s` erosions and `s` dilations.
pub fn opening<T: Pixel>(p: &Pipeline, f: &Image<T>, s: usize) -> Result<OperatorResult<T>> {
    let mut chain = Chain::new();
    chain.push_n(KernelKind::Erode3x3, s).push_n(KernelKind::Dilate3x3, s);
    run(p, chain, f)
}

pub fn closing<T: Pixel>(p: &Pipeline, f: &Image<T>, s: usize) -> Result<OperatorResult<T>> {
    let mut chain = Chain::new();
    chain.push_n(KernelKind::Dilate3x3, s).push_n(KernelKind::Erode3x3, s);
    run(p, chain, f)
}

/// Sums of openings of size `0..=max_size` and their pattern spectrum.
pub fn granulometry<T: Pixel>(p: &Pipeline, f: &Image<T>, max_size: usize) -> Result<GranulometryResult<T::Acc>> {
    if max_size == 0 {
        return Err(Error::InvalidParameter("maximum size must be at least 1".into()));
    }
    let mut g = Vec::with_capacity(max_size + 1);
    let mut iterations = 0;
    for s in 0..=max_size {
        let open = opening(p, f, s)?;
        iterations += open.iterations;
        g.push(open.image.pixel_sum());
    }
    let ps = g.windows(2).map(|w| w[0].sub(w[1])).collect();
    Ok(GranulometryResult {
        sizes: (0..=max_size).collect(),
        g,
        ps,
        iterations,
    })
}

/// Alternating sequential filter: opening then closing of sizes
/// `1..=max_size`, all in one chain.
pub fn asf<T: Pixel>(p: &Pipeline, f: &Image<T>, max_size: usize) -> Result<OperatorResult<T>> {
    if max_size == 0 {
        return Err(Error::InvalidParameter("maximum size must be at least 1".into()));
    }
    let mut chain = Chain::new();
    for s in 1..=max_size {
        chain
            .push_n(KernelKind::Erode3x3, s)
            .push_n(KernelKind::Dilate3x3, s)
            .push_n(KernelKind::Dilate3x3, s)
            .push_n(KernelKind::Erode3x3, s);
    }
    run(p, chain, f)
}
