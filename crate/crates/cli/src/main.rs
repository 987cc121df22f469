use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustmix::clustering::{rough_cluster, RoughConfig};
use robustmix::corruption::{corrupt, Adversary, CorruptionPlan};
use robustmix::genfun::{random_instance, verify_elimination, verify_null_operator, ApplyTo, EliminationCase, InstanceSpec};
use robustmix::io::{read_hermite, read_mixture, read_samples, write_hermite, write_mixture, write_samples, MixtureJson};
use robustmix::param::{close_case_learn, CloseCaseConfig};
use robustmix::pipeline::{full_pipeline, permuted_tv_error, RunConfig};
use robustmix::pseudoexp::ClusteringMode;
use robustmix::robust::{robust_hermite, robust_mean_bounded_cov, robust_mixture_mean_cov};
use robustmix::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "robustmix", version, about = "Robustly learn Gaussian mixtures from corrupted samples")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdversaryKind {
    PointMass,
    Shifted,
    Decoy,
    WorstMoment,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    /// Filtered mean under an identity covariance bound.
    Mean,
    /// Mixture mean and covariance.
    Moments,
    /// Robust Hermite coefficients of orders 1..=m, in isotropic position.
    Hermite,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw samples from a mixture given as JSON.
    Simulate {
        #[arg(long)]
        mixture: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional file for the component labels, one per line.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Replace an eps fraction of a sample file with adversarial rows.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "point-mass")]
        adversary: AdversaryKind,
        /// Distance, shift or radius, depending on the adversary.
        #[arg(long, default_value_t = 100.0)]
        distance: f64,
        #[arg(long, default_value_t = 0.1)]
        spread: f64,
        #[arg(long, default_value_t = 4)]
        m: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Robust estimates from a sample file.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "moments")]
        what: Estimator,
        #[arg(long, default_value_t = 6)]
        m: u32,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// JSON for mean/moments, CSV for Hermite coefficients.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the elimination and null-operator identities on random rational mixtures.
    VerifyIdentities {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rough clustering of a (small) sample file.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 4)]
        t: u32,
        #[arg(long, default_value_t = false)]
        full: bool,
        #[arg(long, default_value_t = 40)]
        max_rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Close-case parameter learning from Hermite estimates.
    Learn {
        /// Hermite CSV as written by `estimate --what hermite`.
        #[arg(long)]
        hermite: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        /// Accepted for symmetry with the pipeline; close-case learning is the only mode.
        #[arg(long, default_value_t = true)]
        close_case: bool,
        #[arg(long, default_value_t = 1e-4)]
        eps_prime: f64,
        #[arg(long)]
        net_step: Option<f64>,
        #[arg(long, default_value_t = 48)]
        starts: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// The full algorithm on a sample file.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        /// Run configuration as JSON; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Optional file for the winning mixture alone.
        #[arg(long)]
        winner: Option<PathBuf>,
    },
    /// Score a pipeline report against a known mixture and write metrics CSV.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 20000)]
        mc_samples: usize,
        #[arg(long)]
        metrics: PathBuf,
    },
}

fn load_samples(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_samples(BufReader::new(f))?)
}

fn save_json(path: &Path, v: &impl serde::Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn run(cmd: Cmd) -> anyhow::Result<()> {
    match cmd {
        Cmd::Simulate { mixture, n, seed, out, labels } => {
            let mix = read_mixture(&mixture)?;
            let s = robustmix::gaussian::sample(&mix, n, seed)?;
            write_samples(BufWriter::new(File::create(&out)?), &s.points)?;
            if let Some(p) = labels {
                let mut w = BufWriter::new(File::create(p)?);
                for l in s.labels() {
                    writeln!(w, "{l}")?;
                }
            }
        }
        Cmd::Corrupt { input, eps, adversary, distance, spread, m, seed, out } => {
            let samples = load_samples(&input)?;
            let adversary = match adversary {
                AdversaryKind::PointMass => Adversary::PointMass { distance, direction: None },
                AdversaryKind::Shifted => Adversary::ShiftedCluster { shift: distance },
                AdversaryKind::Decoy => Adversary::DensityDecoy { distance, spread },
                AdversaryKind::WorstMoment => Adversary::WorstMoment { m, radius: distance, candidates: 64 },
            };
            let x = corrupt(&samples, &CorruptionPlan { epsilon: eps, adversary, seed })?;
            write_samples(BufWriter::new(File::create(&out)?), &x)?;
        }
        Cmd::Estimate { input, eps, what, m, delta, out } => {
            let samples = load_samples(&input)?;
            match what {
                Estimator::Mean => {
                    let est = robust_mean_bounded_cov(&samples, eps, 1.0)?;
                    save_json(&out, &json!({ "mean": est.value, "iterations": est.iterations, "removed_fraction": est.removed_fraction }))?;
                }
                Estimator::Moments => {
                    let mm = robust_mixture_mean_cov(&samples, eps, delta)?;
                    save_json(&out, &json!({ "mean": mm.mean, "cov": mm.cov, "pairs_used": mm.pairs_used }))?;
                }
                Estimator::Hermite => {
                    let d = samples[0].len();
                    let mm = robust_mixture_mean_cov(&samples, eps, delta)?;
                    let tr = robustmix::robust::isotropic_transform(&mm.mean, &mm.cov)?;
                    let ys = tr.apply_all(&samples);
                    let polys = (1..=m).map(|j| robust_hermite(&ys, eps, j)?.polynomial(d)).collect::<robustmix::Result<Vec<_>>>()?;
                    write_hermite(BufWriter::new(File::create(&out)?), &polys)?;
                    eprintln!("isotropic transform: {}", serde_json::to_string(&tr)?);
                }
            }
        }
        Cmd::VerifyIdentities { k, d, instances, seed } => {
            let spec = InstanceSpec { k, d, range: 5, max_den: 4 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cases = vec![EliminationCase::Covariance, EliminationCase::Mean];
            cases.extend((1..k).map(|j| EliminationCase::General { j }));
            let mut failures = 0;
            let mut summary = Vec::new();
            for case in cases {
                let mut passed = 0;
                for _ in 0..instances {
                    let (truth, hyp) = random_instance(&mut rng, &spec, case);
                    let ok = verify_elimination(&truth, &hyp, case, ApplyTo::Hypothesis)?.passed() && verify_null_operator(&truth, 4)?;
                    passed += usize::from(ok);
                }
                failures += instances - passed;
                summary.push(json!({ "case": format!("{case:?}"), "passed": passed, "instances": instances }));
            }
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if failures > 0 {
                bail!("{failures} identity checks failed");
            }
        }
        Cmd::Cluster { input, k, eps, t, full, max_rounds, seed, out } => {
            let samples = load_samples(&input)?;
            let mut cfg = RoughConfig::new(k);
            cfg.eps = eps;
            cfg.t = t;
            cfg.mode = if full { ClusteringMode::Full } else { ClusteringMode::Reduced };
            cfg.max_rounds = max_rounds;
            cfg.seed = seed;
            let res = rough_cluster(&samples, &cfg)?;
            save_json(&out, &res)?;
            if res.candidates.is_empty() {
                return Err(Error::NoCandidates("rough clustering returned no clusterings".into()).into());
            }
        }
        Cmd::Learn { hermite, k, d, close_case: _, eps_prime, net_step, starts, seed, out } => {
            let hbar = read_hermite(BufReader::new(File::open(&hermite)?), d)?;
            let mut cfg = CloseCaseConfig::new(k, d, eps_prime);
            cfg.net_step = net_step;
            cfg.starts = starts;
            cfg.seed = seed;
            let list = close_case_learn(&hbar, &cfg)?;
            save_json(&out, &list)?;
            if list.is_empty() {
                return Err(Error::NoCandidates(list.diagnostics.join("; ")).into());
            }
        }
        Cmd::Pipeline { input, config, k, eps, seed, out, winner } => {
            let samples = load_samples(&input)?;
            let mut cfg: RunConfig = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)?,
                None => RunConfig::default(),
            };
            if let Some(k) = k {
                cfg.k = k;
            }
            if let Some(e) = eps {
                cfg.eps = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let res = full_pipeline(&samples, &cfg)?;
            save_json(&out, &res.report)?;
            if let Some(p) = winner {
                write_mixture(&p, &res.winner)?;
            }
        }
        Cmd::Report { report, truth, mc_samples, metrics } => {
            let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report)?)?;
            let truth = read_mixture(&truth)?;
            let winner = rep["winner"].as_u64().context("report has no winner")? as usize;
            let cands = rep["candidates"].as_array().context("report has no candidates")?;
            let mut w = csv_writer(&metrics)?;
            writeln!(w, "index,is_winner,wins,trimmed_log_likelihood,permuted_tv_error")?;
            let mut winner_err = f64::NAN;
            for (i, c) in cands.iter().enumerate() {
                let mix: MixtureJson = serde_json::from_value(c["mixture"].clone())?;
                let mix = mix.to_mixture()?;
                let err = if mix.k() == truth.k() { permuted_tv_error(&truth, &mix, mc_samples, 7)? } else { f64::NAN };
                if i == winner {
                    winner_err = err;
                }
                let wins = c["wins"].as_u64().map_or(String::new(), |v| v.to_string());
                writeln!(w, "{i},{},{wins},{},{err}", i == winner, c["trimmed_log_likelihood"])?;
            }
            w.flush()?;
            println!("winner {winner}: permuted TV error {winner_err:.4}");
        }
    }
    Ok(())
}

fn csv_writer(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NoCandidates(_)) | Some(Error::EmptyInput(_)) => 2,
        Some(Error::SolverFailure(_)) | Some(Error::FilterAbort { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
