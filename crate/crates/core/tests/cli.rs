use std::path::Path;
use std::process::{Command, Output};

fn uvsplat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uvsplat"))
        .args(args)
        .env_remove("UVSPLAT_THREADS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_SPEC: &str = "\
shape = ellipsoid
a = 1.0
b = 0.8
c = 1.2
subdiv = 2
image_res = 48
iters = 20
reraster_every = 10
base_res = 32
num_levels = 3
landmarks_extra = 16
";

#[test]
fn usage_errors_exit_two() {
    assert_eq!(uvsplat(&[]).status.code(), Some(2));
    assert_eq!(uvsplat(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(uvsplat(&["gradcheck", "--bogus"]).status.code(), Some(2));
    assert_eq!(uvsplat(&["synth", "--spec", "a", "--out-dir", "b", "--seed", "x"]).status.code(), Some(2));
    assert_eq!(uvsplat(&["render", "--splats", "a"]).status.code(), Some(2));
    assert_eq!(uvsplat(&["gradcheck", "--suite", "nope"]).status.code(), Some(2));
    assert_eq!(uvsplat(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_thread_cap_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_uvsplat"))
        .args(["gradcheck", "--suite", "partition"])
        .env("UVSPLAT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("UVSPLAT_THREADS"));
}

#[test]
fn gradcheck_suites_pass() {
    for suite in ["adjoint", "partition", "oracle"] {
        let o = uvsplat(&["gradcheck", "--suite", suite, "--seed", "5"]);
        let out = String::from_utf8_lossy(&o.stdout);
        assert_eq!(o.status.code(), Some(0), "{suite}: {out}{}", stderr(&o));
        assert!(out.lines().all(|l| l.starts_with("PASS ")), "{out}");
    }
}

#[test]
fn missing_and_malformed_inputs_exit_one_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = uvsplat(&["anchor", "--mesh", p(&d.join("nope.obj")), "--uvmap", "x", "--out", "y"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.obj"));

    let spec = d.join("spec.txt");
    std::fs::write(&spec, "shape = ellipsoid\ncolour = red\n").unwrap();
    let o = uvsplat(&["synth", "--spec", p(&spec), "--out-dir", p(&d.join("s"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("spec.txt:2:"), "{}", stderr(&o));

    let obj = d.join("tri.obj");
    std::fs::write(&obj, "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n").unwrap();
    let uvmap = d.join("attrs.uvt");
    std::fs::write(&uvmap, b"UVT1\x03\x00\x00\x00\x02\x00\x00\x00\x02\x00\x00\x00\x04\x00\x00\x00").unwrap();
    let o = uvsplat(&["anchor", "--mesh", p(&obj), "--uvmap", p(&uvmap), "--out", p(&d.join("s.uvt"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("attrs.uvt: byte "), "{}", stderr(&o));

    let cam = d.join("cam.txt");
    std::fs::write(&cam, "fx = 10\nfy = 10\n").unwrap();
    let o = uvsplat(&["render", "--splats", p(&uvmap), "--camera", p(&cam), "--out", p(&d.join("r.png"))]);
    assert_eq!(o.status.code(), Some(1));

    let views = d.join("views.json");
    std::fs::write(&views, "{\"views\": []}").unwrap();
    let cfg = d.join("fusion.txt");
    std::fs::write(&cfg, "base_res = 16\nnum_levels = 9\n").unwrap();
    let o = uvsplat(&["splat", "--views", p(&views), "--config", p(&cfg), "--out-dir", p(d)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn subcommands_chain_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = d.join("spec.txt");
    std::fs::write(&spec, SMALL_SPEC).unwrap();
    let scene = d.join("scene");
    let o = uvsplat(&["synth", "--spec", p(&spec), "--out-dir", p(&scene), "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["template.obj", "labels.txt", "landmarks.txt", "views.json", "cam_0.txt", "normals_5.pfm", "features_0.uvt"] {
        assert!(scene.join(f).exists(), "{f}");
    }

    let dcfg = d.join("deform.txt");
    std::fs::write(&dcfg, "iters = 15\nreraster_every = 5\n").unwrap();
    let out = d.join("out.obj");
    let trace = d.join("trace.csv");
    let o = uvsplat(&[
        "deform", "--mesh", p(&scene.join("template.obj")), "--labels", p(&scene.join("labels.txt")),
        "--views", p(&scene.join("views.json")), "--landmarks", p(&scene.join("landmarks.txt")),
        "--config", p(&dcfg), "--out", p(&out), "--trace", p(&trace),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(csv.lines().next(), Some("iter,total,nml,lmk,lap"));
    assert_eq!(csv.lines().count(), 1 + 16);
    // the same world-space targets read as camera-space pull elsewhere
    let out_cam = d.join("out_cam.obj");
    let o = uvsplat(&[
        "deform", "--mesh", p(&scene.join("template.obj")), "--labels", p(&scene.join("labels.txt")),
        "--views", p(&scene.join("views.json")), "--landmarks", p(&scene.join("landmarks.txt")),
        "--config", p(&dcfg), "--out", p(&out_cam), "--trace", p(&d.join("t2.csv")), "--camera-space",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_ne!(std::fs::read(&out).unwrap(), std::fs::read(&out_cam).unwrap());

    let fcfg = d.join("fusion.txt");
    std::fs::write(&fcfg, "base_res = 32\nnum_levels = 3\n").unwrap();
    let fused = d.join("fused");
    let o = uvsplat(&["splat", "--views", p(&scene.join("views.json")), "--config", p(&fcfg), "--out-dir", p(&fused)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = uvsplat::io::load_uvt(&fused.join("fused.uvt")).unwrap();
    assert_eq!(t.dims, vec![32, 32, 3]);
    assert!(fused.join("weight.uvt").exists() && fused.join("fused.png").exists());

    let run = d.join("run");
    let o = uvsplat(&["pipeline", "--spec", p(&spec), "--out-dir", p(&run), "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["out.obj", "fused.uvt", "render.png", "attrs.uvt", "splats.uvt", "trace.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let splats = d.join("splats.uvt");
    let o = uvsplat(&["anchor", "--mesh", p(&out), "--uvmap", p(&run.join("attrs.uvt")), "--out", p(&splats)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let img = d.join("img.png");
    let o = uvsplat(&["render", "--splats", p(&splats), "--camera", p(&scene.join("cam_0.txt")), "--out", p(&img)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::metadata(&img).unwrap().len() > 0);
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = d.join("spec.txt");
    std::fs::write(&spec, SMALL_SPEC).unwrap();
    let run = |name: &str, threads: Option<&str>| {
        let out = d.join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_uvsplat"));
        cmd.args(["pipeline", "--spec", p(&spec), "--out-dir", p(&out), "--seed", "9"]);
        match threads {
            Some(t) => cmd.env("UVSPLAT_THREADS", t),
            None => cmd.env_remove("UVSPLAT_THREADS"),
        };
        assert!(cmd.output().unwrap().status.success());
        out
    };
    let a = run("a", Some("1"));
    let b = run("b", None);
    for f in ["fused.uvt", "weight.uvt", "splats.uvt", "render.png", "out.obj"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
