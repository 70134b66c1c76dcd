use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use genolm::rng::job_rng;
use rand::Rng;
use serde_json::Value;

const SUBCOMMANDS: &[&[&str]] = &[
    &["tokenize"],
    &["bpe-train"],
    &["ingest", "extract"],
    &["ingest", "stats"],
    &["ingest", "gener-tasks"],
    &["train-markov"],
    &["generate"],
    &["recover", "build"],
    &["recover", "run"],
    &["vep", "score"],
    &["vep", "eval"],
    &["design", "label"],
    &["design", "fit"],
    &["design", "rank"],
    &["design", "contrib"],
    &["embed", "project"],
    &["embed", "silhouette"],
    &["translate"],
];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genolm"))
        .current_dir(dir)
        .env_remove("GENOLM_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "genolm {} exited {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn random_bases(seed: u64, len: usize) -> String {
    let mut rng = job_rng(seed, 0);
    (0..len).map(|_| "ACGT".as_bytes()[rng.gen_range(0..4)] as char).collect()
}

/// A genome, a BED annotation file, a Markov model (k=3) and a recovery set.
fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let genome = random_bases(1, 30_000);
    let mut fasta = String::from(">chr1\n");
    for line in genome.as_bytes().chunks(70) {
        fasta.push_str(std::str::from_utf8(line).unwrap());
        fasta.push('\n');
    }
    fs::write(dir.join("genome.fa"), fasta).unwrap();
    let bed: String = (0..40)
        .map(|g| {
            let start = 300 + g * 700;
            let strand = if g % 2 == 0 { "+" } else { "-" };
            let feature = ["CDS", "tRNA", "ncRNA"][g % 3];
            let taxon = if g % 4 == 0 { "plant" } else { "mammalian" };
            format!("chr1\t{start}\t{}\t{strand}\t{feature}\t{taxon}\n", start + 250)
        })
        .collect();
    fs::write(dir.join("genes.bed"), bed).unwrap();
    ok(dir, &["ingest", "extract", "--fasta", "genome.fa", "--annotations", "genes.bed", "--out", "corpus.fa"]);
    ok(dir, &["train-markov", "--corpus", "corpus.fa", "--k", "3", "--order", "2", "--out", "model.bin"]);
    ok(
        dir,
        &[
            "recover", "build", "--fasta", "genome.fa", "--annotations", "genes.bed", "--prompt-len", "60",
            "--predict-len", "30", "--per-group", "10", "--out", "set.tsv",
        ],
    );
    tmp
}

#[test]
fn help_for_every_subcommand() {
    let dir = Path::new(".");
    for sub in SUBCOMMANDS {
        let mut args = sub.to_vec();
        args.push("--help");
        let text = ok(dir, &args);
        assert!(text.contains("Usage: genolm"), "{sub:?}");
    }
    assert!(ok(dir, &["--version"]).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn usage_errors_exit_one_with_help() {
    let dir = Path::new(".");
    let out = run(dir, &[]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Commands:"));
    let out = run(dir, &["recover", "run"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--dataset") && err.contains("Usage: genolm recover run"), "{err}");
    let out = run(dir, &["tokenize", "--k", "3", "--offset", "0", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir, &["tokenize", "--k", "3", "--tokenizer", "t.json", "ACGT"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = run(dir, &["translate", "--input", "missing.fa"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.join("bad.fa"), ">x\nACGTQ\n").unwrap();
    let out = run(dir, &["translate", "--input", "bad.fa"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tokenize_example() {
    let out = ok(Path::new("."), &["tokenize", "--k", "6", "--offset", "0", "ACGTAC"]);
    assert_eq!(out, "#id\toffset\tlead\ttail\tids\nseq1\t0\t\t\t433\n");
    let out = ok(Path::new("."), &["tokenize", "--k", "3", "--offset", "1", "TACGTA"]);
    assert!(out.ends_with("seq1\t1\tT\tTA\t6\n"), "{out}");
    let out = ok(Path::new("."), &["tokenize", "--k", "6", "--decode", "433"]);
    assert!(out.contains("ACGTAC"));
}

#[test]
fn vocabulary_mismatch_is_a_data_error() {
    let ws = workspace();
    let out = run(ws.path(), &["recover", "run", "--dataset", "set.tsv", "--model", "model.bin", "--k", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary"));
}

#[test]
fn config_file_is_overridden_by_flags_and_echoed() {
    let ws = workspace();
    let dir = ws.path();
    fs::write(dir.join("run.conf"), "# sampling\ntop_p = 0.8\ntemperature=0.7\nseed=3\nn=4\n").unwrap();
    let base = ["generate", "--model", "model.bin", "--max-new-tokens", "10", "--config", "run.conf"];
    ok(dir, &[&base[..], &["--out", "a.fa"]].concat());
    ok(dir, &[&base[..], &["--temperature", "1.3", "--out", "b.fa"]].concat());
    let meta = |f: &str| -> Value { serde_json::from_str(&fs::read_to_string(dir.join(f)).unwrap()).unwrap() };
    let (a, b) = (meta("a.fa.meta.json"), meta("b.fa.meta.json"));
    assert_eq!(a["command"], "generate");
    assert_eq!(a["config"]["top-p"], "0.8");
    assert_eq!(a["config"]["temperature"], "0.7");
    assert_eq!(a["config"]["seed"], "3");
    assert_eq!(b["config"]["temperature"], "1.3");
    assert_eq!(b["config"]["top-p"], "0.8");
    assert_eq!(fs::read_to_string(dir.join("a.fa")).unwrap().matches('>').count(), 4);
    assert_ne!(fs::read(dir.join("a.fa")).unwrap(), fs::read(dir.join("b.fa")).unwrap());

    fs::write(dir.join("bad.conf"), "top_p\n").unwrap();
    let out = run(dir, &["generate", "--model", "model.bin", "--config", "bad.conf"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let ws = workspace();
    let dir = ws.path();
    for threads in ["1", "4"] {
        ok(
            dir,
            &[
                "recover", "run", "--dataset", "set.tsv", "--model", "model.bin", "--sample", "--seed", "5",
                "--threads", threads, "--out", &format!("r{threads}.tsv"), "--items-out", &format!("i{threads}.tsv"),
            ],
        );
        ok(
            dir,
            &[
                "generate", "--model", "model.bin", "--n", "30", "--max-new-tokens", "20", "--seed", "5", "--threads",
                threads, "--out", &format!("g{threads}.fa"),
            ],
        );
    }
    for (a, b) in [("r1.tsv", "r4.tsv"), ("i1.tsv", "i4.tsv"), ("g1.fa", "g4.fa")] {
        assert_eq!(fs::read(dir.join(a)).unwrap(), fs::read(dir.join(b)).unwrap(), "{a} vs {b}");
    }
}

#[test]
fn vep_score_then_eval() {
    let ws = workspace();
    let dir = ws.path();
    let genome = fs::read_to_string(dir.join("genome.fa")).unwrap();
    let bases: String = genome.lines().skip(1).collect();
    let mut variants = String::from("#seq_id\tpos\tref\talt\tlabel\n");
    for (i, pos) in (100..2100).step_by(100).enumerate() {
        let r = bases.as_bytes()[pos - 1] as char;
        let alt = if r == 'A' { 'C' } else { 'A' };
        let label = if i % 2 == 0 { "pathogenic" } else { "benign" };
        variants.push_str(&format!("chr1\t{pos}\t{r}\t{alt}\t{label}\n"));
    }
    fs::write(dir.join("vars.tsv"), variants).unwrap();
    ok(dir, &["vep", "score", "--genome", "genome.fa", "--variants", "vars.tsv", "--model", "model.bin", "--out", "scores.tsv"]);
    let scores = fs::read_to_string(dir.join("scores.tsv")).unwrap();
    assert_eq!(scores.lines().filter(|l| !l.starts_with('#')).count(), 20);
    let out = ok(dir, &["vep", "eval", "--scores", "scores.tsv", "--json"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["command"], "vep eval");
    assert_eq!(v["result"]["n"], 20);
    assert_eq!(v["result"]["positive_class"], "pathogenic");
    let auroc = v["result"]["auroc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auroc));

    fs::write(dir.join("wrong.tsv"), "chr1\t100\tN\tA\n").unwrap();
    let out = run(dir, &["vep", "score", "--genome", "genome.fa", "--variants", "wrong.tsv", "--model", "model.bin"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn design_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut rng = job_rng(9, 0);
    let mut rows = String::from("sequence\tdev_activity\thk_activity\tsplit\n");
    for i in 0..120 {
        let s: String = (0..60).map(|_| "ACGT".as_bytes()[rng.gen_range(0..4)] as char).collect();
        let gc = s.bytes().filter(|&b| b == b'G' || b == b'C').count() as f64;
        let split = if i % 5 == 0 { "test" } else { "train" };
        rows.push_str(&format!("{s}\t{}\t{}\t{split}\n", gc / 10.0, rng.gen_range(0.0..1.0)));
    }
    fs::write(dir.join("starr.tsv"), rows).unwrap();
    let labels = ok(dir, &["design", "label", "--input", "starr.tsv", "--class", "dev", "--split", "train"]);
    let bands: Vec<&str> = labels.lines().skip(1).map(|l| l.rsplit('\t').next().unwrap()).collect();
    assert_eq!(bands.len(), 96);
    assert!(bands.contains(&"high") && bands.contains(&"low") && bands.contains(&"mid"));

    ok(dir, &["design", "fit", "--input", "starr.tsv", "--class", "dev", "--kmer", "2", "--mu", "0.1", "--out", "pred.json"]);
    let out = run(dir, &["design", "fit", "--input", "starr.tsv", "--class", "dev"]);
    assert_eq!(out.status.code(), Some(1), "fit without --out");

    let pool = |name: &str, seed: u64| {
        let text: String = (0..20).map(|i| format!(">{name}{i}\n{}\n", random_bases(seed * 100 + i, 60))).collect();
        fs::write(dir.join(format!("{name}.fa")), text).unwrap();
    };
    pool("high", 1);
    pool("low", 2);
    pool("mid", 3);
    let picked = ok(
        dir,
        &[
            "design", "rank", "--predictor", "pred.json", "--pool", "high=high.fa", "--pool", "low=low.fa", "--pool",
            "mid=mid.fa", "--top", "3", "--bottom", "3", "--random", "2", "--seed", "4",
        ],
    );
    assert_eq!(picked.matches('>').count(), 8);
    assert!(picked.contains(">top_1|group=high") && picked.contains(">bottom_1|group=low"));

    let contrib = ok(dir, &["design", "contrib", "--predictor", "pred.json", "ACGTNACG"]);
    let rows: Vec<&str> = contrib.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows[4].ends_with("\tN\tNA"));
}

#[test]
fn embed_project_and_silhouette() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut rng = job_rng(21, 0);
    let mut fasta = String::new();
    for (label, gc) in [("at", 0.25), ("gc", 0.75)] {
        for i in 0..15 {
            let s: String = (0..800)
                .map(|_| {
                    let strong = rng.gen_bool(gc);
                    match (strong, rng.gen_bool(0.5)) {
                        (true, true) => 'G',
                        (true, false) => 'C',
                        (false, true) => 'A',
                        (false, false) => 'T',
                    }
                })
                .collect();
            fasta.push_str(&format!(">{label}{i}|{label}\n{s}\n"));
        }
    }
    fs::write(dir.join("seqs.fa"), fasta).unwrap();
    ok(dir, &["embed", "project", "--input", "seqs.fa", "--kmer", "3", "--dims", "2", "--out", "proj.tsv"]);
    let out = ok(dir, &["embed", "silhouette", "--input", "proj.tsv", "--json"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["result"]["silhouette"].as_f64().unwrap() > 0.5);
    assert_eq!(v["result"]["clusters"], 2);
}

#[test]
fn ingest_stats_and_translate() {
    let ws = workspace();
    let dir = ws.path();
    let stats = ok(dir, &["ingest", "stats", "--corpus", "corpus.fa"]);
    let total = stats.lines().find(|l| l.starts_with("all\tall")).unwrap();
    assert_eq!(total, "all\tall\t40\t10000");
    let out = ok(dir, &["translate", "ATGAAATAG", "--frame", "0"]);
    assert!(out.contains("seq1\t0\ttrue\tfalse\ttrue\tMK*"), "{out}");
}
