use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geomorph::io::{self, Format};
use geomorph::operators;
use geomorph::pipeline::{PinningMode, Pipeline};
use geomorph::synth::random_image;
use geomorph::{DynImage, Image};

fn geomorph(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_geomorph"));
    cmd.args(args).env_remove("GEOMORPH_THREADS").env_remove("GEOMORPH_PIN");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn spot() -> Image<u8> {
    let mut f = Image::new_filled(8, 8, 0).unwrap();
    f.set(5, 2, 10);
    f
}

#[test]
fn hmax_zero_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("in.pgm"), dir.path().join("out.pgm"));
    io::store_pgm(&random_image::<u8>(33, 21, 1).into(), &inp).unwrap();
    let stdout = ok(&geomorph(&["hmax", "--h", "0", s(&inp), s(&out), "-t", "3", "--pin", "none"], &[]));
    assert!(stdout.contains("iterations=3 converged=true"), "{stdout}");
    assert_eq!(fs::read(&inp).unwrap(), fs::read(&out).unwrap());
}

#[test]
fn granulometry_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("spot.pgm"), dir.path().join("g.csv"));
    io::store_pgm(&spot().into(), &inp).unwrap();
    ok(&geomorph(&["granulometry", "--max-size", "2", s(&inp), s(&out), "--oracle"], &[]));
    assert_eq!(fs::read_to_string(&out).unwrap(), "s,G,PS\n0,10,10\n1,0,0\n2,0,\n");

    let stdout = ok(&geomorph(&["granulometry", "--max-size", "2", s(&inp)], &[]));
    assert_eq!(stdout, "s,G,PS\n0,10,10\n1,0,0\n2,0,\n");
}

#[test]
fn qdt_of_constant_is_zero_u16() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("c.gms"), dir.path().join("d.gms"));
    io::store_raw(&Image::<f32>::new_filled(9, 5, 2.5).unwrap().into(), &inp).unwrap();
    ok(&geomorph(&["qdt", s(&inp), s(&out)], &[]));
    let (d, format) = io::load(&out).unwrap();
    assert_eq!(format, Format::Gms1);
    let DynImage::U16(d) = d else { panic!("expected u16 output") };
    assert!(d.pixels().all(|v| v == 0));
}

#[test]
fn cli_matches_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let f = random_image::<f64>(40, 31, 7);
    let inp = dir.path().join("f.gms");
    io::store_raw(&f.clone().into(), &inp).unwrap();
    let p = Pipeline::build_pool(2, PinningMode::None).unwrap();

    let cases: Vec<(Vec<&str>, Image<f64>)> = vec![
        (vec!["erode", "--size", "3"], operators::erode_s(&p, &f, 3).unwrap().image),
        (vec!["dilate", "--size", "2"], operators::dilate_s(&p, &f, 2).unwrap().image),
        (vec!["dome", "--h", "17.5"], operators::dome(&p, &f, 17.5).unwrap().image),
        (vec!["hfill"], operators::hfill(&p, &f).unwrap().image),
        (vec!["raobj"], operators::raobj(&p, &f).unwrap().image),
        (vec!["openrec", "--size", "1"], operators::open_by_reconstruction(&p, &f, 1).unwrap().image),
        (vec!["asf", "--max-size", "2"], operators::asf(&p, &f, 2).unwrap().image),
    ];
    for (args, expected) in cases {
        let out = dir.path().join("out.gms");
        let mut full = args.clone();
        full.extend([s(&inp), s(&out), "--oracle", "--lanes", "1"]);
        ok(&geomorph(&full, &[]));
        let (got, _) = io::load(&out).unwrap();
        assert_eq!(got, DynImage::F64(expected), "{args:?}");
    }
}

#[test]
fn element_type_override() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("in.pgm"), dir.path().join("out.gms"));
    io::store_pgm(&spot().into(), &inp).unwrap();
    // floats cannot be written as PGM
    let res = geomorph(&["erode", "--size", "1", "--elem", "f32", s(&inp), s(&out)], &[]);
    assert!(!res.status.success());
    ok(&geomorph(&["erode", "--size", "1", "--elem", "u16", s(&inp), s(&out)], &[]));
    let (img, format) = io::load(&out).unwrap();
    assert_eq!((img.elem(), format), (geomorph::ElemType::U16, Format::Pgm));
}

#[test]
fn environment_overrides_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("in.pgm"), dir.path().join("out.pgm"));
    io::store_pgm(&random_image::<u8>(16, 16, 3).into(), &inp).unwrap();
    let args = ["hmax", "--h", "0", s(&inp), s(&out)];

    // on an already reconstructed image exactly one sweep of T stages runs
    let iterations = |stdout: String| -> usize {
        stdout
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("iterations="))
            .unwrap()
            .parse()
            .unwrap()
    };
    let stdout = ok(&geomorph(&args, &[("GEOMORPH_THREADS", "3"), ("GEOMORPH_PIN", "none")]));
    assert_eq!(iterations(stdout), 3);

    assert!(!geomorph(&args, &[("GEOMORPH_THREADS", "0")]).status.success());
    let mut with_flag = args.to_vec();
    with_flag.extend(["--threads", "2"]);
    assert_eq!(iterations(ok(&geomorph(&with_flag, &[("GEOMORPH_THREADS", "0")]))), 2);
    assert!(!geomorph(&args, &[("GEOMORPH_PIN", "bogus")]).status.success());
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.pgm");
    let out = dir.path().join("o.pgm");
    let res = geomorph(&["hfill", s(&missing), s(&out)], &[]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("geomorph:"));

    let inp = dir.path().join("in.pgm");
    io::store_pgm(&spot().into(), &inp).unwrap();
    assert!(!geomorph(&["hmax", "--h", "300", s(&inp), s(&out)], &[]).status.success());
    assert!(!geomorph(&["openrec", "--size", "0", s(&inp), s(&out)], &[]).status.success());
    assert!(!geomorph(&["erode", "--size", "1", "--lanes", "3", s(&inp), s(&out)], &[]).status.success());
    assert!(!geomorph(&["bench", "--reps", "0", "--width", "8", "--height", "8"], &[]).status.success());
    fs::write(&inp, b"P5\n4 4\n255\nxx").unwrap();
    assert!(!geomorph(&["hfill", s(&inp), s(&out)], &[]).status.success());
}

#[test]
fn bench_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    ok(&geomorph(
        &[
            "bench", "--chain", "2,4", "--sweep-threads", "1,2", "--dtype", "u8,f64", "--width", "24", "--height",
            "10", "--reps", "2", "--warmup", "0", "--format", "json", "--out", s(&out), "--pin", "none",
        ],
        &[],
    ));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);
    for r in rows {
        for key in ["command", "width", "height", "dtype", "threads", "lanes", "pinning", "chain", "median_ms", "mpx_stages_per_s", "speedup"] {
            assert!(!r[key].is_null(), "{key} missing in {r}");
        }
    }

    let csv = ok(&geomorph(&["bench", "--chain", "3", "--width", "16", "--height", "16", "--reps", "1", "--format", "csv"], &[]));
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("command,op,width,height,dtype,threads,lanes,pinning,chain"));
    assert_eq!(lines.count(), 1);
}

#[test]
fn library_entry_point() {
    assert!(geomorph::cli::run_from(["geomorph", "bench", "--reps", "0"]).is_err());
    assert!(geomorph::cli::run_from(["geomorph", "nonsense"]).is_err());
}
