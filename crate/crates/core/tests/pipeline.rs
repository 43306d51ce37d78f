use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use legged_elites::archive::{Archive, Elite, GridSpec};
use legged_elites::config::ConfigFile;
use legged_elites::evolution::read_metrics_csv;

const SMALL: &str = r#"
profile = "desk"
scheme = "STATIC"
seed = 5
init_population = 20
offspring_per_generation = 20
generations = 10
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_legged-elites")).args(args).output().expect("spawn legged-elites")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_run(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.join(name);
    let mut args = vec!["run", s(&cfg), "--quiet", "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = bin(&args);
    assert!(o.status.success(), "run failed: {}", String::from_utf8_lossy(&o.stderr));
    out
}

fn load(path: &Path) -> Archive {
    Archive::read_jsonl(GridSpec::default(), std::io::BufReader::new(std::fs::File::open(path).unwrap())).unwrap()
}

#[test]
fn run_writes_outputs_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_run(dir.path(), "a", &[]);
    let b = small_run(dir.path(), "b", &["--workers", "3"]);
    for f in ["archive.jsonl", "metrics.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let rows = read_metrics_csv(std::fs::File::open(a.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0].feasible, 20);
    let archive = load(&a.join("archive.jsonl"));
    assert_eq!(archive.len(), rows.last().unwrap().occupied);
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_run(dir.path(), "a", &[]);
    let echoed = std::fs::read_to_string(a.join("config.toml")).unwrap();
    let original = ConfigFile::parse(SMALL).unwrap().resolve(None).unwrap();
    assert_eq!(ConfigFile::parse(&echoed).unwrap().resolve(None).unwrap(), original);

    let out = dir.path().join("again");
    let o = bin(&["run", s(&a.join("config.toml")), "--quiet", "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(a.join("archive.jsonl")).unwrap(), std::fs::read(out.join("archive.jsonl")).unwrap());
}

#[test]
fn inspect_cell_matches_archive_record() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_run(dir.path(), "a", &[]);
    let path = a.join("archive.jsonl");
    let archive = load(&path);
    let elite = archive.elites().next().unwrap().clone();
    let cell = elite.cell.map(|c| c.to_string()).join(",");
    let o = bin(&["inspect", s(&path), "--cell", &cell]);
    assert!(o.status.success());
    let shown: Elite = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(shown, elite);

    let empty = (0..5usize.pow(6))
        .map(|i| std::array::from_fn::<usize, 6, _>(|d| i / 5usize.pow(d as u32) % 5))
        .find(|k| archive.get(k).is_none())
        .unwrap();
    let cell = empty.map(|c| c.to_string()).join(",");
    assert_eq!(bin(&["inspect", s(&path), "--cell", &cell]).status.code(), Some(3));

    let o = bin(&["inspect", s(&path), "--best", "2"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let best = archive.fitness_summary().unwrap().best;
    assert!(text.contains(&format!("\"fitness\": {best}")));
}

#[test]
fn rules_pool_archives() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_run(dir.path(), "a", &[]);
    let b = small_run(dir.path(), "b", &["--seed", "6"]);
    let out = dir.path().join("rules");
    let (pa, pb) = (a.join("archive.jsonl"), b.join("archive.jsonl"));
    let o = bin(&["rules", s(&pa), s(&pb), "--top", "1.0", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("rules.txt")).unwrap();
    assert!(text.starts_with("Rule"));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), text);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("rules.json")).unwrap()).unwrap();
    assert_eq!(json["samples"].as_u64().unwrap() as usize, load(&pa).len() + load(&pb).len());
    assert_eq!(json["rules"].as_array().unwrap().len(), text.lines().count() - 1);
}

#[test]
fn compare_identical_sets_is_not_significant() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_run(dir.path(), "a", &[]);
    let m = a.join("metrics.csv");
    let o = bin(&["compare", "--a", s(&m), s(&m), s(&m), "--b", s(&m), s(&m), s(&m)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("p = 1.000000"), "{text}");
    assert!(text.contains("not significant"));
}

#[test]
fn bad_inputs_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_run(dir.path(), "a", &[]);
    let text = std::fs::read_to_string(a.join("archive.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.insert(1, "{not json");
    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, lines.join("\n")).unwrap();
    let o = bin(&["inspect", s(&broken), "--best", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "generation,evaluated\n1,two\n").unwrap();
    assert_eq!(bin(&["compare", "--a", s(&csv), "--b", s(&csv)]).status.code(), Some(1));

    assert_eq!(bin(&["run", s(&dir.path().join("missing.toml"))]).status.code(), Some(1));
    let typo = dir.path().join("typo.toml");
    std::fs::write(&typo, "generatoins = 3\n").unwrap();
    assert_eq!(bin(&["run", s(&typo)]).status.code(), Some(1));
}

#[test]
fn infeasible_design_space_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hard.toml");
    std::fs::write(&cfg, "scheme = \"STATIC\"\ninit_population = 5\ninit_attempt_factor = 2\nmax_mass = 1.0\n").unwrap();
    let o = bin(&["run", s(&cfg), "--quiet", "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}
