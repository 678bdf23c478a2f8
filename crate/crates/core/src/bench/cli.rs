use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use super::config::ExperimentConfig;
use super::runner::{run_experiment, BenchError, RunOptions};

/// Seed list given as comma-separated values and inclusive ranges, e.g. `1,2,10-14`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('-') {
                Some((a, b)) => {
                    let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{part}`"))?;
                    let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{part}`"))?;
                    if a > b {
                        return Err(format!("empty seed range `{part}`"));
                    }
                    out.extend(a..=b);
                }
                None => out.push(part.parse().map_err(|_| format!("bad seed `{part}`"))?),
            }
        }
        if out.is_empty() {
            return Err("no seeds given".into());
        }
        Ok(SeedList(out))
    }
}

#[derive(Debug, Parser)]
#[command(name = "bench", version, about = "Policy-evaluation experiments from TOML configs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the seeds, e.g. `1-5` or `7,9`.
        #[arg(long)]
        seeds: Option<SeedList>,
        /// Output directory (default: the config's `out`, else results/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite an output directory that already holds results.
        #[arg(long)]
        force: bool,
        /// Worker threads (runtime experiments always use one).
        #[arg(long)]
        workers: Option<usize>,
        /// Also write the final factorization of every t-LSTD run.
        #[arg(long)]
        dump_svd: bool,
        /// Samples per second offered to runtime experiments.
        #[arg(long)]
        rate_cap: Option<f64>,
    },
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.command {
        Command::Run {
            config,
            seeds,
            out,
            force,
            workers,
            dump_svd,
            rate_cap,
        } => {
            let run = || -> Result<_, BenchError> {
                let cfg = ExperimentConfig::load(&config)?;
                let opts = RunOptions {
                    seeds: seeds.map(|s| s.0),
                    out,
                    force,
                    workers,
                    dump_svd,
                    rate_cap,
                };
                run_experiment(&cfg, &opts)
            };
            match run() {
                Ok(out) => {
                    println!("wrote {} files to {}", out.files.len(), out.out_dir.display());
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!("1-3,7".parse::<SeedList>().unwrap().0, vec![1, 2, 3, 7]);
        assert_eq!("5".parse::<SeedList>().unwrap().0, vec![5]);
        assert!("3-1".parse::<SeedList>().is_err());
        assert!("x".parse::<SeedList>().is_err());
        assert!("".parse::<SeedList>().is_err());
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "bench", "run", "cfg.toml", "--seeds", "1-2", "--out", "o", "--force", "--workers", "3", "--dump-svd", "--rate-cap", "25",
        ])
        .unwrap();
        let Command::Run {
            seeds,
            force,
            workers,
            dump_svd,
            rate_cap,
            ..
        } = cli.command;
        assert_eq!(seeds.unwrap().0, vec![1, 2]);
        assert!(force && dump_svd);
        assert_eq!(workers, Some(3));
        assert_eq!(rate_cap, Some(25.0));
    }
}
