//! Command-line entry point wiring the pipeline end to end: dataset
//! generation, encoding inspection, training, inference, evaluation,
//! ablation and benchmarking.

use anyhow::{anyhow, bail, Result};
use rvdet::commands;
use rvdet::config::{resolve_path, RunConfig};
use rvdet_core::head::Supervision;
use rvdet_core::postproc::NmsMode;
use std::path::PathBuf;

const USAGE: &str = "\
rvdet <command> [options]

Commands:
  generate   Generate a synthetic scene dataset (JSON lines)
  encode     Dump depth rasters and per-pixel regression targets
  train      Train the per-point head on a scene file
  infer      Run a trained head over scenes and write detections
  eval       Score detections against scene labels (CSV metrics)
  ablate     Run the supervision x NMS ablation grid
  bench      Range-scaling benchmark: range view vs BEV grid mock

Common options:
  --config <file>     Flat key=value config overriding built-in defaults
  --seed <n>          Master seed (default 0)
  --dump-config       Print the effective configuration and exit
  -h, --help          This help

Command options:
  generate --out <scenes.jsonl> --count <n>
  encode   --scenes <scenes.jsonl> --out-dir <dir>
  train    --scenes <scenes.jsonl> --out <head.rvck>
           [--losses <csv>] [--supervision 3d|3d+proj2d|3d+2d]
  infer    --scenes <scenes.jsonl> --ckpt <head.rvck> --out <dets.jsonl>
           [--nms 2d|3d|both] [--resolution-transfer]
  eval     --dets <dets.jsonl> --scenes <scenes.jsonl> --out <metrics.csv>
  ablate   --train-scenes <jsonl> --eval-scenes <jsonl> --out <table.csv>
  bench    --out <bench.csv> [--ranges 100,200,300,400,500]
           [--reps 20] [--gnuplot <file.dat>]

Relative paths resolve under $RVDET_DATA_DIR when it is set.
";

struct Args {
    values: Vec<(String, Option<String>)>,
}

impl Args {
    fn parse(raw: &[String], flags_with_value: &[&str], bare_flags: &[&str]) -> Result<Args> {
        let mut values = Vec::new();
        let mut i = 0;
        while i < raw.len() {
            let arg = raw[i].as_str();
            if flags_with_value.contains(&arg) {
                let v = raw
                    .get(i + 1)
                    .ok_or_else(|| anyhow!("{arg} needs a value"))?;
                values.push((arg.to_string(), Some(v.clone())));
                i += 2;
            } else if bare_flags.contains(&arg) {
                values.push((arg.to_string(), None));
                i += 1;
            } else {
                bail!("unknown option `{arg}`\n\n{USAGE}");
            }
        }
        Ok(Args { values })
    }

    fn get(&self, flag: &str) -> Option<&str> {
        self.values
            .iter()
            .rev()
            .find(|(f, _)| f == flag)
            .and_then(|(_, v)| v.as_deref())
    }

    fn has(&self, flag: &str) -> bool {
        self.values.iter().any(|(f, _)| f == flag)
    }

    fn path(&self, flag: &str) -> Result<PathBuf> {
        self.get(flag)
            .map(|v| resolve_path(std::path::Path::new(v)))
            .ok_or_else(|| anyhow!("missing required option {flag}"))
    }
}

fn load_config(args: &Args) -> Result<RunConfig> {
    match args.get("--config") {
        Some(p) => RunConfig::from_file(&resolve_path(std::path::Path::new(p))),
        None => Ok(RunConfig::default()),
    }
}

fn seed_of(args: &Args) -> Result<u64> {
    Ok(match args.get("--seed") {
        Some(s) => s.parse()?,
        None => 0,
    })
}

fn run() -> Result<()> {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let Some(command) = raw.first().map(|s| s.as_str()) else {
        eprint!("{USAGE}");
        std::process::exit(2);
    };
    if command == "-h" || command == "--help" || command == "help" {
        print!("{USAGE}");
        return Ok(());
    }
    let rest = &raw[1..];
    let common_v = ["--config", "--seed"];
    let common_b = ["--dump-config", "-h", "--help"];

    macro_rules! parse_args {
        ($v:expr, $b:expr) => {{
            let mut with_value: Vec<&str> = common_v.to_vec();
            with_value.extend_from_slice($v);
            let mut bare: Vec<&str> = common_b.to_vec();
            bare.extend_from_slice($b);
            Args::parse(rest, &with_value, &bare)?
        }};
    }

    match command {
        "generate" => {
            let args = parse_args!(&["--out", "--count"], &[]);
            let rc = load_config(&args)?;
            if args.has("--dump-config") {
                print!("{}", rc.dump());
                return Ok(());
            }
            let count: usize = args.get("--count").unwrap_or("1").parse()?;
            let out = args.path("--out")?;
            let n = commands::generate(&rc, count, seed_of(&args)?, &out)?;
            eprintln!("wrote {n} scenes to {}", out.display());
        }
        "encode" => {
            let args = parse_args!(&["--scenes", "--out-dir"], &[]);
            let rc = load_config(&args)?;
            if args.has("--dump-config") {
                print!("{}", rc.dump());
                return Ok(());
            }
            let report = commands::encode(&rc, &args.path("--scenes")?, &args.path("--out-dir")?)?;
            eprintln!("wrote target dumps; report at {}", report.display());
        }
        "train" => {
            let args = parse_args!(&["--scenes", "--out", "--losses", "--supervision"], &[]);
            let rc = load_config(&args)?;
            if args.has("--dump-config") {
                print!("{}", rc.dump());
                return Ok(());
            }
            let supervision = match args.get("--supervision") {
                Some(s) => {
                    Supervision::parse(s).ok_or_else(|| anyhow!("unknown supervision `{s}`"))?
                }
                None => Supervision::ThreeD2D,
            };
            let losses = args.get("--losses").map(|v| resolve_path(std::path::Path::new(v)));
            commands::train(
                &rc,
                &args.path("--scenes")?,
                supervision,
                seed_of(&args)?,
                &args.path("--out")?,
                losses.as_deref(),
            )?;
        }
        "infer" => {
            let args = parse_args!(
                &["--scenes", "--ckpt", "--out", "--nms"],
                &["--resolution-transfer"]
            );
            let rc = load_config(&args)?;
            if args.has("--dump-config") {
                print!("{}", rc.dump());
                return Ok(());
            }
            let nms = match args.get("--nms") {
                Some(s) => NmsMode::parse(s).ok_or_else(|| anyhow!("unknown nms mode `{s}`"))?,
                None => NmsMode::Both,
            };
            let out = args.path("--out")?;
            let n = commands::infer(
                &rc,
                &args.path("--scenes")?,
                &args.path("--ckpt")?,
                nms,
                args.has("--resolution-transfer"),
                seed_of(&args)?,
                &out,
            )?;
            eprintln!("wrote {n} detections to {}", out.display());
        }
        "eval" => {
            let args = parse_args!(&["--dets", "--scenes", "--out"], &[]);
            let rc = load_config(&args)?;
            if args.has("--dump-config") {
                print!("{}", rc.dump());
                return Ok(());
            }
            let csv = commands::evaluate(
                &rc,
                &args.path("--dets")?,
                &args.path("--scenes")?,
                &args.path("--out")?,
            )?;
            print!("{csv}");
        }
        "ablate" => {
            let args = parse_args!(&["--train-scenes", "--eval-scenes", "--out"], &[]);
            let rc = load_config(&args)?;
            if args.has("--dump-config") {
                print!("{}", rc.dump());
                return Ok(());
            }
            let csv = commands::ablate(
                &rc,
                &args.path("--train-scenes")?,
                &args.path("--eval-scenes")?,
                seed_of(&args)?,
                &args.path("--out")?,
            )?;
            print!("{csv}");
        }
        "bench" => {
            let args = parse_args!(&["--out", "--ranges", "--reps", "--gnuplot"], &[]);
            let rc = load_config(&args)?;
            if args.has("--dump-config") {
                print!("{}", rc.dump());
                return Ok(());
            }
            let ranges: Vec<f64> = args
                .get("--ranges")
                .unwrap_or("100,200,300,400,500")
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("range `{s}`: {e}")))
                .collect::<Result<_>>()?;
            let reps: usize = args.get("--reps").unwrap_or("20").parse()?;
            let gnuplot = args.get("--gnuplot").map(|v| resolve_path(std::path::Path::new(v)));
            let rows = commands::bench_cmd(
                &ranges,
                reps,
                seed_of(&args)?,
                &args.path("--out")?,
                gnuplot.as_deref(),
            )?;
            for r in &rows {
                println!(
                    "range {:6.0} m: rv {:8.3} ms, bev mock {:8.3} ms ({} cells)",
                    r.max_range, r.rv_time_ms, r.bev_time_ms, r.bev_cells
                );
            }
        }
        other => {
            bail!("unknown command `{other}`\n\n{USAGE}");
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
