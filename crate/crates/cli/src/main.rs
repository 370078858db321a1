//! Command-line front end. Every config field is also a flag (`lora_rank` is
//! `--lora-rank`); values resolve as profile defaults, then `--config FILE`,
//! then flags. The resolved config is printed to stderr on every run.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chronoframe::harness::{self, Config, Profile};
use chronoframe::lm::Tokenizer;
use clap::{Arg, ArgAction, ArgMatches, Command};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct PathArg {
    name: &'static str,
    help: &'static str,
    required: bool,
}

const fn req(name: &'static str, help: &'static str) -> PathArg {
    PathArg { name, help, required: true }
}

const fn opt(name: &'static str, help: &'static str) -> PathArg {
    PathArg { name, help, required: false }
}

struct Sub {
    name: &'static str,
    about: &'static str,
    default_profile: Profile,
    args: &'static [PathArg],
}

const SUBCOMMANDS: &[Sub] = &[
    Sub {
        name: "synth",
        about: "Generate a synthetic corpus: annotations.jsonl, clips/*.frames and synth.json",
        default_profile: Profile::Toy,
        args: &[req("out", "output directory")],
    },
    Sub {
        name: "build-data",
        about: "Turn annotations into instruction records",
        default_profile: Profile::Toy,
        args: &[
            req("annotations", "annotation JSONL"),
            req("out", "instruction JSONL to write"),
            opt("templates", "template set JSON (default: built-in)"),
        ],
    },
    Sub {
        name: "train-toy",
        about: "Train the toy model on instruction records",
        default_profile: Profile::Toy,
        args: &[
            req("instructions", "instruction JSONL"),
            req("clips", "directory of <video>.frames dumps"),
            req("out", "checkpoint to write"),
        ],
    },
    Sub {
        name: "infer",
        about: "Greedy generation for instruction records, or for one clip and instruction",
        default_profile: Profile::Toy,
        args: &[
            req("checkpoint", "checkpoint written by train-toy"),
            opt("instructions", "instruction JSONL"),
            opt("clips", "directory of <video>.frames dumps"),
            opt("out", "raw output JSONL to write"),
            opt("clip", "a single frame dump"),
            opt("instruction", "instruction text for --clip"),
            opt("speech", "optional transcript for --clip"),
        ],
    },
    Sub {
        name: "parse",
        about: "Extract structured predictions from raw output JSONL",
        default_profile: Profile::Toy,
        args: &[req("input", "JSONL of {task, text, duration?}"), req("out", "prediction JSONL to write")],
    },
    Sub {
        name: "eval",
        about: "Score predictions against reference annotations",
        default_profile: Profile::Toy,
        args: &[
            req("predictions", "prediction JSONL from parse"),
            req("references", "annotation JSONL"),
            opt("out", "report JSON to write (default: stdout)"),
        ],
    },
    Sub {
        name: "tokens",
        about: "Report the video-token budget and compression rates",
        default_profile: Profile::Paper,
        args: &[],
    },
    Sub {
        name: "grad-check",
        about: "Finite-difference check of the full forward pass at the configured sizes",
        default_profile: Profile::Toy,
        args: &[opt("out", "report JSON to write (default: stdout)")],
    },
];

fn cli() -> Command {
    let mut root = Command::new("chronoframe")
        .about("Timestamp-aware video-language toy pipeline")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in SUBCOMMANDS {
        let mut c = Command::new(sub.name)
            .about(sub.about)
            .arg(
                Arg::new("profile")
                    .long("profile")
                    .value_parser(["toy", "paper"])
                    .help("base defaults"),
            )
            .arg(Arg::new("config").long("config").value_name("FILE").help("key = value file"))
            .arg(
                Arg::new("quiet")
                    .long("quiet")
                    .action(ArgAction::SetTrue)
                    .help("do not print the resolved config"),
            );
        for a in sub.args {
            c = c.arg(Arg::new(a.name).long(a.name).required(a.required).help(a.help));
        }
        for key in Config::keys() {
            if key == "profile" {
                continue;
            }
            let flag: &'static str = Box::leak(key.replace('_', "-").into_boxed_str());
            c = c.arg(Arg::new(flag).long(flag).value_name("VALUE").help_heading("Config"));
        }
        root = root.subcommand(c);
    }
    root
}

fn resolve(sub: &Sub, m: &ArgMatches, base: Option<&Path>) -> Result<Config> {
    let profile = match m.get_one::<String>("profile") {
        Some(p) => p.parse()?,
        None => sub.default_profile,
    };
    let mut cfg = Config::for_profile(profile);
    if let Some(b) = base {
        cfg.apply_text(&fs::read_to_string(b).with_context(|| format!("reading {}", b.display()))?)?;
    }
    if let Some(path) = m.get_one::<String>("config") {
        cfg.apply_text(&fs::read_to_string(path).with_context(|| format!("reading {path}"))?)
            .with_context(|| format!("in {path}"))?;
    }
    for key in Config::keys() {
        if key == "profile" {
            continue;
        }
        if let Some(v) = m.get_one::<String>(&key.replace('_', "-")) {
            cfg.set(&key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn path(m: &ArgMatches, name: &str) -> Option<PathBuf> {
    m.get_one::<String>(name).map(PathBuf::from)
}

fn need(m: &ArgMatches, name: &str) -> Result<PathBuf> {
    path(m, name).with_context(|| format!("--{name} is required"))
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_or_print<T: serde::Serialize>(out: Option<PathBuf>, v: &T) -> Result<()> {
    match out {
        Some(p) => {
            fs::write(&p, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", p.display()))?;
            Ok(())
        }
        None => print_json(v),
    }
}

fn run(sub: &Sub, m: &ArgMatches) -> Result<bool> {
    let base = match sub.name {
        "infer" => Some(harness::sidecar(&need(m, "checkpoint")?, ".config")).filter(|p| p.exists()),
        _ => None,
    };
    let cfg = resolve(sub, m, base.as_deref())?;
    if !m.get_flag("quiet") {
        eprint!("# resolved config ({})\n{cfg}", sub.name);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match sub.name {
        "synth" => {
            let out = need(m, "out")?;
            let s = harness::synth_stage(&cfg, &out, &mut rng)?;
            print_json(&s.stats)?;
        }
        "build-data" => {
            let stats = harness::build_data_stage(&need(m, "annotations")?, path(m, "templates").as_deref(), cfg.seed, &need(m, "out")?)?;
            print_json(&stats)?;
        }
        "train-toy" => {
            let report = harness::train_stage(&cfg, &need(m, "instructions")?, &need(m, "clips")?, &need(m, "out")?, &mut rng, &mut |l| {
                eprintln!("{l}")
            })?;
            print_json(&report)?;
        }
        "infer" => {
            let ckpt = need(m, "checkpoint")?;
            if let Some(clip) = path(m, "clip") {
                let instruction = m.get_one::<String>("instruction").context("--clip needs --instruction")?;
                let (model, store) = harness::load_model(&cfg, &ckpt, &mut rng)?;
                let clip = chronoframe::video::load_frames(&clip)?;
                let query = harness::query_ids(instruction, m.get_one::<String>("speech").map(String::as_str))?;
                let ids = model.greedy_decode(&store, &clip, &query, cfg.max_new_tokens)?;
                println!("{}", Tokenizer.detokenize(&ids));
            } else {
                let out = harness::infer_stage(&cfg, &ckpt, &need(m, "instructions")?, &need(m, "clips")?, &need(m, "out")?, &mut rng)?;
                eprintln!("wrote {} outputs", out.len());
            }
        }
        "parse" => {
            let preds = harness::parse_stage(&need(m, "input")?, &need(m, "out")?)?;
            let misses = preds.iter().filter(|p| p.miss).count();
            eprintln!("parsed {} outputs, {misses} without a usable answer", preds.len());
        }
        "eval" => {
            let report = harness::eval_stage(&need(m, "predictions")?, &need(m, "references")?, cfg.hit_threshold, None)?;
            write_or_print(path(m, "out"), &report)?;
        }
        "tokens" => print_json(&harness::token_budget(&cfg)?)?,
        "grad-check" => {
            let s = harness::grad_check_stage(&cfg, &mut rng)?;
            write_or_print(path(m, "out"), &s)?;
            if !s.passed {
                eprintln!("gradient check failed: max relative error {:.3e}", s.report.max_rel_err);
                return Ok(false);
            }
        }
        other => bail!("unknown subcommand {other}"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, m) = matches.subcommand().expect("subcommand required");
    let sub = SUBCOMMANDS.iter().find(|s| s.name == name).expect("registered subcommand");
    match run(sub, m) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
