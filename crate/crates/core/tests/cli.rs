use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use aero_vpr::bench::TIMING_HEADER;
use aero_vpr::descstore::load_database;

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avl-bench")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, rows: &str, queries: &str) {
    let o = bench(&["synth", "--out", s(dir), "--rows", rows, "--cols", rows, "--tile-px", "128", "--queries", queries]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn build_map_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "3", "2");
    let raw = d.join("map");
    let o = bench(&["build-map", "--raw", s(&raw), "--zoom", "100", "--overlap", "50", "--out", s(&d.join("t1"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("tiles=25"));
    let o = bench(&["build-map", "--raw", s(&raw), "--zoom", "100", "--overlap", "50", "--out", s(&d.join("t2"))]);
    assert!(o.status.success());
    assert_eq!(fs::read(d.join("t1/tiles.csv")).unwrap(), fs::read(d.join("t2/tiles.csv")).unwrap());

    let small = tempfile::tempdir().unwrap();
    synth(small.path(), "2", "1");
    let o = bench(&["build-map", "--raw", s(&small.path().join("map")), "--zoom", "10", "--overlap", "0", "--out", s(&small.path().join("t"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("map too small"), "{}", stderr(&o));
}

#[test]
fn extract_retrieve_rerank_align() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "3", "4");
    let tiles = d.join("tiles");
    assert!(bench(&["build-map", "--raw", s(&d.join("map")), "--zoom", "100", "--overlap", "50", "--out", s(&tiles)]).status.success());

    let g1 = d.join("g1.avld");
    let o = bench(&["extract", "--tiles", s(&tiles), "--kind", "global", "--out", s(&g1)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let db = load_database(&g1).unwrap();
    assert_eq!((db.count(), db.dim()), (25, 256));
    let g2 = d.join("g2.avld");
    assert!(bench(&["extract", "--tiles", s(&tiles), "--kind", "global", "--out", s(&g2)]).status.success());
    assert_eq!(fs::read(&g1).unwrap(), fs::read(&g2).unwrap());

    let local = d.join("local");
    assert!(bench(&["extract", "--tiles", s(&tiles), "--kind", "local", "--out", s(&local)]).status.success());
    assert_eq!(fs::read_dir(&local).unwrap().count(), 25);

    // import with one file missing
    let partial = d.join("partial");
    fs::create_dir(&partial).unwrap();
    for e in fs::read_dir(&local).unwrap() {
        let p = e.unwrap().path();
        fs::copy(&p, partial.join(p.file_name().unwrap())).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(&partial).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    fs::remove_file(names.last().unwrap()).unwrap();
    let o = bench(&["extract", "--tiles", s(&tiles), "--kind", "local", "--import", s(&partial), "--out", s(&d.join("imp"))]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));

    let queries = d.join("queries/queries.csv");
    let qg = d.join("qg.avld");
    let ql = d.join("ql");
    assert!(bench(&["extract", "--queries", s(&queries), "--kind", "global", "--out", s(&qg)]).status.success());
    assert!(bench(&["extract", "--queries", s(&queries), "--kind", "local", "--out", s(&ql)]).status.success());

    let ret = d.join("retrieval.csv");
    let o = bench(&["retrieve", "--db", s(&g1), "--queries", s(&qg), "--n", "10", "--out", s(&ret)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&ret).unwrap();
    assert_eq!(text.lines().next(), Some("query_index,rank,tile_id,distance"));
    assert_eq!(text.lines().count(), 1 + 4 * 10);

    let rr = d.join("rerank.csv");
    let o = bench(&["rerank", "--retrieval", s(&ret), "--query-features", s(&ql), "--tile-features", s(&local), "--k", "3", "--out", s(&rr)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let al = d.join("alignment.csv");
    let o = bench(&[
        "align", "--ranking", s(&rr), "--tiles", s(&tiles), "--queries", s(&queries),
        "--query-features", s(&ql), "--tile-features", s(&local), "--out", s(&al),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("queries=4"));
    let text = fs::read_to_string(&al).unwrap();
    assert_eq!(text.lines().next(), Some("query_index,tile_id,status,lat,lon,inliers"));
}

#[test]
fn evaluate_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "2", "6");
    let cfg = d.join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "map = {}\nqueries = {}\nout = {}\nzoom = 100\noverlap = 0, 50\nn = 5\nk = 2\n",
            d.join("map/map.csv").display(),
            d.join("queries/queries.csv").display(),
            d.join("eval").display()
        ),
    )
    .unwrap();
    let o = bench(&["evaluate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for combo in ["z100_o0", "z100_o50"] {
        let timing = fs::read_to_string(d.join("eval").join(combo).join("timing.csv")).unwrap();
        assert_eq!(timing.lines().next().unwrap(), TIMING_HEADER.join(","));
        assert_eq!(timing.lines().nth(1).unwrap().split(',').count(), 5);
    }
    assert!(d.join("eval/summary.csv").exists());

    let o = bench(&["evaluate", "--config", s(&cfg), "--n", "1", "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bench(&["evaluate", "--config", s(&cfg), "--overlap", "100"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bench(&["evaluate", "--out", s(&d.join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error:"));
    fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(bench(&["evaluate", "--config", s(&cfg)]).status.code(), Some(2));
    assert_eq!(bench(&["build-map", "--zoom", "x"]).status.code(), Some(2));
    assert_eq!(bench(&["--help"]).status.code(), Some(0));
}
