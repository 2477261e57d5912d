use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfsq::config::{check_arity, parse_list};
use dfsq::error::Context;
use dfsq::experiments::{granular_interval, sensitivity_for};
use dfsq::{
    output, run_example, ComputationSpec, ExperimentConfig, ExperimentName, HarnessError,
    SourceSpec,
};
use dfsq_core::decoders::codebook_size;
use dfsq_core::design::{
    design_fmse_entropy_constrained, design_fmse_fixed_rate, design_mse_fixed_rate, design_uniform,
    PointDensity,
};
use dfsq_core::distortion::allocate_rates;
use dfsq_core::{CompandingQuantizer, ProductSource};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "dfsq",
    version,
    about = "Distributed functional scalar quantization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate a point density and its compressor.
    Design(DesignArgs),
    /// Print the cells of a companding quantizer, or encode values with it.
    Quantize {
        #[command(flatten)]
        design: DesignArgs,
        /// Codebook size; overrides --rate.
        #[arg(short = 'k', long)]
        k: Option<usize>,
        /// Rate in bits; K = round(2^R).
        #[arg(long, default_value_t = 4.0)]
        rate: f64,
        /// Comma-separated values to encode instead of printing the cells.
        #[arg(long, allow_hyphen_values = true)]
        encode: Option<String>,
    },
    /// Simulate a custom source and computation over a rate grid.
    Simulate(RunArgs),
    /// Run one of the worked examples.
    Example {
        /// gaussian_square, cauchy_exp, multi_sum_square, multi_min or decoder_gap
        name: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare simple, MMSE and functional-MMSE decoders over a rate grid.
    DecoderGap(RunArgs),
    /// Split a total rate across sources by reverse water-filling.
    Allocate {
        /// Per-source distortion constants a_n.
        #[arg(long, allow_hyphen_values = true)]
        constants: String,
        /// Total rate in bits.
        #[arg(long)]
        rate: f64,
    },
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, default_value = "gaussian")]
    source: String,
    #[arg(long, default_value = "square")]
    computation: String,
    #[arg(long, value_enum, default_value_t = DesignKind::Functional)]
    design: DesignKind,
    /// Granular half-width of the uniform design.
    #[arg(long, default_value_t = 4.0)]
    halfwidth: f64,
    /// Number of tabulated points.
    #[arg(long, default_value_t = 64)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignKind {
    /// Fixed-rate optimum for the computation
    Functional,
    /// Fixed-rate optimum for reproducing the source
    Ordinary,
    /// Entropy-constrained optimum for the computation
    Entropy,
    Uniform,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated bits per source.
    #[arg(long)]
    rates: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of sources.
    #[arg(short = 'n', long)]
    n: Option<usize>,
    /// Source as `kind[:p1,p2]`, e.g. `cauchy:0,1`.
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    computation: Option<String>,
}

impl RunArgs {
    fn config(&self, name: Option<ExperimentName>) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::new(name.unwrap_or(ExperimentName::Custom)),
        };
        if let Some(name) = name {
            if self.config.is_some() && cfg.experiment != name {
                return Err(HarnessError::Config(format!(
                    "config file is for {}, not {name}",
                    cfg.experiment
                )));
            }
            cfg.experiment = name;
        }
        if let Some(r) = &self.rates {
            cfg.rate_grid =
                parse_list(r).map_err(|e| HarnessError::Config(format!("--rates: {e}")))?;
        }
        if let Some(s) = self.samples {
            cfg.samples = s;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_path = Some(o.clone());
        }
        if self.n.is_some() {
            cfg.n = self.n;
        }
        if let Some(s) = &self.source {
            cfg.source = Some(s.parse()?);
        }
        if let Some(c) = &self.computation {
            cfg.computation = Some(ComputationSpec {
                kind: c.clone(),
                arity: None,
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(contents: &str, out: Option<&Path>) -> Result<(), HarnessError> {
    match out {
        Some(p) => output::write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn build_density(a: &DesignArgs) -> Result<PointDensity, HarnessError> {
    let spec: SourceSpec = a.source.parse()?;
    let src = spec.build()?;
    let g = ComputationSpec {
        kind: a.computation.clone(),
        arity: None,
    }
    .build(1)?;
    check_arity(&g, 1)?;
    let cfg = ExperimentConfig {
        source: Some(spec),
        ..ExperimentConfig::new(ExperimentName::Custom)
    };
    let product = ProductSource::iid(src.clone(), 1).context("source")?;
    let d = match a.design {
        DesignKind::Functional => {
            let (gamma, _) = sensitivity_for(&cfg, &product, &g)?;
            design_fmse_fixed_rate(&src, &gamma)
        }
        DesignKind::Ordinary => design_mse_fixed_rate(&src),
        DesignKind::Entropy => {
            let (gamma, _) = sensitivity_for(&cfg, &product, &g)?;
            design_fmse_entropy_constrained(&gamma, src.support())
        }
        DesignKind::Uniform => {
            design_uniform(granular_interval(&src, a.halfwidth).context("uniform design")?)
        }
    };
    d.context("design")
}

fn run_and_report(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let out = run_example(cfg)?;
    match &cfg.output_path {
        Some(p) => {
            let files = out.write(p)?;
            print!("{}", out.summary());
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        None => {
            match &out.sweep {
                Some(sw) => print!("{}", output::sweep_csv(&sw.rows)),
                None => print!("{}", output::distortion_csv(&out.rows)),
            }
            eprint!("{}", out.summary());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Design(a) => {
            let d = build_density(&a)?;
            if a.points < 2 {
                return Err(HarnessError::Config("--points must be at least 2".into()));
            }
            emit(&output::density_csv(&d, a.points), a.out.as_deref())
        }
        Command::Quantize {
            design,
            k,
            rate,
            encode,
        } => {
            let d = build_density(&design)?;
            let k = match k {
                Some(k) => k,
                None => codebook_size(rate).context("quantize")?,
            };
            let q = CompandingQuantizer::build(&d, k).context("quantize")?;
            match encode {
                None => emit(&output::quantizer_csv(&q), design.out.as_deref()),
                Some(xs) => {
                    let xs = parse_list(&xs)
                        .map_err(|e| HarnessError::Config(format!("--encode: {e}")))?;
                    let mut s = String::from("x,index,codeword\n");
                    for x in xs {
                        let i = q.encode(x).context("encode")?;
                        s.push_str(&format!(
                            "{x},{},{}\n",
                            i + 1,
                            q.decode(i).context("decode")?
                        ));
                    }
                    emit(&s, design.out.as_deref())
                }
            }
        }
        Command::Simulate(r) => run_and_report(&r.config(None)?),
        Command::Example { name, run } => {
            let name: ExperimentName = name.parse()?;
            if name == ExperimentName::Custom {
                return Err(HarnessError::Config(
                    "use `simulate` for custom experiments".into(),
                ));
            }
            run_and_report(&run.config(Some(name))?)
        }
        Command::DecoderGap(r) => run_and_report(&r.config(Some(ExperimentName::DecoderGap))?),
        Command::Allocate { constants, rate } => {
            let a = parse_list(&constants)
                .map_err(|e| HarnessError::Config(format!("--constants: {e}")))?;
            let alloc = allocate_rates(&a, rate).context("allocate")?;
            let kappa = alloc.kappa();
            let mut s = String::from("n,constant,rate_bits,alpha,K\n");
            for (i, ((c, r), (al, k))) in a
                .iter()
                .zip(&alloc.rates)
                .zip(alloc.alphas.iter().zip(alloc.codebook_sizes(kappa)))
                .enumerate()
            {
                s.push_str(&format!("{},{c},{r},{al},{k}\n", i + 1));
            }
            print!("{s}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let context = match &e {
                HarnessError::Core { context, .. } => Some(context.clone()),
                _ => None,
            };
            eprintln!(
                "{}",
                json!({ "error": e.kind(), "context": context, "message": e.to_string() })
            );
            ExitCode::FAILURE
        }
    }
}
