use crate::error::{Error, Result};
use crate::image::{DynImage, Image, Pixel};
use crate::operators;
use crate::oracle;
use crate::pipeline::Pipeline;
use crate::with_dyn_image;

/// An operator with its parameters, as chosen on the command line.
#[derive(Clone, Debug, PartialEq)]
pub enum Operator {
    Erode { size: usize },
    Dilate { size: usize },
    Hmax { h: f64 },
    Dome { h: f64 },
    Hfill,
    Raobj,
    OpenRec { size: usize },
    Qdt,
    Granulometry { max_size: usize },
    Asf { max_size: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpOutput {
    Image(DynImage),
    /// CSV text.
    Table(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Applied {
    pub output: OpOutput,
    pub iterations: usize,
    pub converged: bool,
}

fn typed_h<T: Pixel>(h: f64) -> Result<T> {
    T::from_f64(h).ok_or(Error::ValueOutOfRange { value: h, elem: T::ELEM })
}

fn granulometry_csv<A: std::fmt::Display>(g: &[A], ps: &[A]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["s", "G", "PS"]).map_err(csv_err)?;
    for (s, gs) in g.iter().enumerate() {
        let ps = ps.get(s).map(|v| v.to_string()).unwrap_or_default();
        w.write_record([s.to_string(), gs.to_string(), ps]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn mismatch(op: &Operator) -> Error {
    Error::InvalidParameter(format!("{op:?}: result differs from the reference implementation"))
}

fn apply_typed<T: Pixel>(p: &Pipeline, op: &Operator, f: &Image<T>, check: bool) -> Result<Applied>
where
    DynImage: From<Image<T>>,
{
    let image = |r: operators::OperatorResult<T>, expected: Option<Image<T>>| -> Result<Applied> {
        if let Some(e) = expected {
            if e != r.image {
                return Err(mismatch(op));
            }
        }
        Ok(Applied {
            output: OpOutput::Image(r.image.into()),
            iterations: r.iterations,
            converged: r.converged,
        })
    };
    let oracle_if = |g: &dyn Fn() -> Image<T>| check.then(g);
    match *op {
        Operator::Erode { size } => image(operators::erode_s(p, f, size)?, oracle_if(&|| oracle::naive_erode(f, size))),
        Operator::Dilate { size } => image(operators::dilate_s(p, f, size)?, oracle_if(&|| oracle::naive_dilate(f, size))),
        Operator::Hmax { h } => {
            let h = typed_h::<T>(h)?;
            image(operators::hmax(p, f, h)?, oracle_if(&|| oracle::naive_hmax(f, h)))
        }
        Operator::Dome { h } => {
            let h = typed_h::<T>(h)?;
            image(operators::dome(p, f, h)?, oracle_if(&|| oracle::naive_dome(f, h)))
        }
        Operator::Hfill => image(operators::hfill(p, f)?, oracle_if(&|| oracle::naive_hfill(f))),
        Operator::Raobj => image(operators::raobj(p, f)?, oracle_if(&|| oracle::naive_raobj(f))),
        Operator::OpenRec { size } => image(
            operators::open_by_reconstruction(p, f, size)?,
            oracle_if(&|| oracle::naive_open_by_reconstruction(f, size)),
        ),
        Operator::Asf { max_size } => image(operators::asf(p, f, max_size)?, oracle_if(&|| oracle::naive_asf(f, max_size))),
        Operator::Qdt => {
            let r = operators::quasi_distance(p, f)?;
            if check {
                let (d, res) = oracle::naive_qdt(f);
                if d != r.distance || res != r.residual {
                    return Err(mismatch(op));
                }
            }
            Ok(Applied {
                output: OpOutput::Image(r.distance.into()),
                iterations: r.iterations,
                converged: r.converged,
            })
        }
        Operator::Granulometry { max_size } => {
            let r = operators::granulometry(p, f, max_size)?;
            if check && oracle::naive_granulometry(f, max_size) != r.g {
                return Err(mismatch(op));
            }
            Ok(Applied {
                output: OpOutput::Table(granulometry_csv(&r.g, &r.ps)?),
                iterations: r.iterations,
                converged: true,
            })
        }
    }
}

/// Run `op` on `img`; with `check`, compare against the oracle as well.
pub fn apply(p: &Pipeline, op: &Operator, img: &DynImage, check: bool) -> Result<Applied> {
    with_dyn_image!(img, f => apply_typed(p, op, f, check))
}
