use geomorph::io::{self, Format};
use geomorph::synth::random_image;
use geomorph::{DynImage, ElemType, Image, Pixel};
use proptest::prelude::*;

fn dyn_image(elem: ElemType, w: usize, h: usize, seed: u64) -> DynImage {
    match elem {
        ElemType::U8 => random_image::<u8>(w, h, seed).into(),
        ElemType::U16 => random_image::<u16>(w, h, seed).into(),
        ElemType::F32 => random_image::<f32>(w, h, seed).into(),
        ElemType::F64 => random_image::<f64>(w, h, seed).into(),
    }
}

fn elem_strategy() -> impl Strategy<Value = ElemType> {
    prop_oneof![Just(ElemType::U8), Just(ElemType::U16), Just(ElemType::F32), Just(ElemType::F64)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raw_roundtrip(elem in elem_strategy(), w in 1usize..70, h in 1usize..20, seed: u64) {
        let img = dyn_image(elem, w, h, seed);
        let bytes = io::encode_raw(&img);
        prop_assert_eq!(bytes.len(), io::GMS1_HEADER_LEN + w * h * elem.size_bytes());
        prop_assert_eq!(io::decode_raw(&bytes).unwrap(), img);
    }

    #[test]
    fn pgm_roundtrip(sixteen: bool, w in 1usize..70, h in 1usize..20, seed: u64) {
        let elem = if sixteen { ElemType::U16 } else { ElemType::U8 };
        let img = dyn_image(elem, w, h, seed);
        let bytes = io::encode_pgm(&img).unwrap();
        prop_assert_eq!(io::decode_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn truncated_raw_is_rejected(w in 1usize..20, h in 1usize..20, cut in 1usize..8) {
        let bytes = io::encode_raw(&dyn_image(ElemType::F32, w, h, 3));
        let cut = cut.min(bytes.len());
        prop_assert!(io::decode_raw(&bytes[..bytes.len() - cut]).is_err());
    }
}

#[test]
fn sixteen_bit_pgm_matches_image_crate() {
    let f = random_image::<u16>(37, 11, 9);
    let bytes = io::encode_pgm(&f.clone().into()).unwrap();
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm).unwrap();
    let luma = decoded.into_luma16();
    assert_eq!(luma.dimensions(), (37, 11));
    assert_eq!(luma.into_raw(), f.to_vec());

}

#[test]
fn eight_bit_pgm_matches_image_crate() {
    let f = random_image::<u8>(19, 7, 2);
    let bytes = io::encode_pgm(&f.clone().into()).unwrap();
    let luma = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm).unwrap().into_luma8();
    assert_eq!(luma.into_raw(), f.to_vec());

    let g = image::GrayImage::from_raw(5, 3, (0..15u8).map(|v| v * 17).collect()).unwrap();
    let mut buf = Vec::new();
    image::codecs::pnm::PnmEncoder::new(&mut buf)
        .with_subtype(image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary))
        .encode(g.as_raw().as_slice(), 5, 3, image::ExtendedColorType::L8)
        .unwrap();
    let DynImage::U8(back) = io::decode_pgm(&buf).unwrap() else { panic!("expected u8") };
    assert_eq!(back.to_vec(), g.into_raw());
}

#[test]
fn files_keep_their_format() {
    let dir = tempfile::tempdir().unwrap();
    let f: DynImage = Image::<u16>::from_rows(&[[1u16, 2], [3, 4]]).unwrap().into();
    for (name, format) in [("a.pgm", Format::Pgm), ("a.gms", Format::Gms1)] {
        let path = dir.path().join(name);
        io::store(&f, format, &path).unwrap();
        assert_eq!(io::load(&path).unwrap(), (f.clone(), format));
    }
    assert!(io::load(dir.path().join("missing")).is_err());
}

#[test]
fn conversion_is_exact_or_rejected() {
    let f: DynImage = Image::<f64>::from_rows(&[[1.0, 2.0, 255.0]]).unwrap().into();
    assert_eq!(f.convert(ElemType::U8).unwrap(), Image::<u8>::from_rows(&[[1u8, 2, 255]]).unwrap().into());
    let g: DynImage = Image::<f64>::from_rows(&[[0.5]]).unwrap().into();
    assert!(g.convert(ElemType::U8).is_err());
    assert_eq!(u8::from_f64(256.0), None);
}
