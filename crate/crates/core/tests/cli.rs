use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use porohom::grid_core::{Grid, NodalField, ScalarField, VectorField};
use porohom::rng::XorShift64Star;

fn porohom(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_porohom"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_experiment_lists_registry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.txt", "[experiment]\nname = cell-problems\n");
    let o = porohom(&["nonsense", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for name in porohom::harness::EXPERIMENTS {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn invalid_config_reports_every_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.txt",
        "[experiment]\nname = micro-sim\n[material]\nepsilon = 0.3\ntau = -1\ncolour = blue\n",
    );
    let o = porohom(&["micro-sim", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for line in ["line 4", "line 5", "line 6"] {
        assert!(err.contains(line), "{err}");
    }
}

#[test]
fn config_for_another_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.txt", "[experiment]\nname = cell-problems\n");
    let o = porohom(&["micro-sim", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_config_file_and_bad_arguments_exit_one() {
    assert_eq!(
        porohom(&["micro-sim", "--config", "/nonexistent/x.txt"], &[]).status.code(),
        Some(1)
    );
    assert_eq!(porohom(&["micro-sim"], &[]).status.code(), Some(1));
    assert_eq!(porohom(&["--help"], &[]).status.code(), Some(0));
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.txt", "[experiment]\nname = cell-problems\n");
    let o = porohom(&["cell-problems", "--config", &cfg], &[("POROHOM_THREADS", "0")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_two_with_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "c.txt",
        "[experiment]\nname = micro-sim\n[grid]\nn = 33\n[material]\nh_mollify = 0.07\ntau = 0.05\nt_final = 0.5\n",
    );
    let o = porohom(&["micro-sim", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("CFL"));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = partial"), "{manifest}");
}

fn csv_files(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.txt",
        "[experiment]\nname = mollifier-props\nsamples = 5\nh_list = 0.3, 0.2, 0.1\n[grid]\nn = 33\n",
    );
    let run = |out: &str, seed: &str| {
        let path = dir.path().join(out);
        let o = porohom(
            &["mollifier-props", "--config", &cfg, "--out", path.to_str().unwrap(), "--seed", seed],
            &[("POROHOM_THREADS", "1")],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        csv_files(&path)
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
    let sa = &a.iter().find(|(n, _)| n == "self_adjoint.csv").unwrap().1;
    let sc = &c.iter().find(|(n, _)| n == "self_adjoint.csv").unwrap().1;
    assert_ne!(sa, sc);
    let manifest = fs::read_to_string(dir.path().join("a/manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 5"));
    assert!(manifest.contains("status = complete"));
    assert!(manifest.contains("wall_time_s"));
    assert!(manifest.contains("name = mollifier-props"));
}

#[test]
fn micro_sim_fields_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "c.txt",
        "[experiment]\nname = micro-sim\n[grid]\nn = 33\n[material]\nmu2 = 0.2\nh_mollify = 0.07\nt_final = 1e-3\n",
    );
    let o = porohom(&["micro-sim", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let g = Grid::unit_cube(2, 33).unwrap();
    let w = VectorField::<f64>::read_csv(&g, BufReader::new(fs::File::open(out.join("w.csv")).unwrap())).unwrap();
    let chi = ScalarField::<f64>::read_csv(&g, BufReader::new(fs::File::open(out.join("chi.csv")).unwrap())).unwrap();
    assert!(w.all_finite());
    assert!(w.values().iter().any(|&x| x != 0.0));
    assert!(chi.values().iter().all(|&c| (0.0..=1.0).contains(&c)));
}

#[test]
fn csv_round_trip_is_exact() {
    let g = Grid::unit_cube(3, 5).unwrap();
    let v = XorShift64Star::new(8).vector_field::<f64>(&g, -1e3, 1e3);
    let mut buf = Vec::new();
    v.write_csv(&mut buf).unwrap();
    let back = VectorField::<f64>::read_csv(&g, BufReader::new(&buf[..])).unwrap();
    assert_eq!(v, back);
}
