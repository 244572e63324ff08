use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ngnn::experiments::{
    depth_sweep, edge_noise_sweep, generate_sbm, generate_sbm_links, noise_sweep, param_report, position_sweep,
    train_runs, Data, ExperimentConfig, LinkSplitSpec, ResultTable, SbmSpec,
};
use ngnn::model::{Arch, ModelConfig, NgnnPosition};
use ngnn::{NgnnError, Result};

#[derive(Parser)]
#[command(name = "ngnn", version, about = "Train and sweep GNNs with in-layer feedforward blocks")]
struct Cli {
    /// Experiment config (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: results]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; run i uses seed + i
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of seeds
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured model once per seed
    Train,
    /// Feature-noise sweep (feature_add / feature_concat axis)
    NoiseSweep,
    /// Random-edge sweep (edge_noise axis)
    EdgeNoiseSweep,
    /// NGNN depth x hidden width sweep (ngnn_depth axis)
    DepthSweep,
    /// NGNN attachment policy sweep (position axis)
    PositionSweep,
    /// Parameter count and per-layer breakdown
    Paramcount(ParamArgs),
    /// Write a stochastic block model dataset to --out
    GenSynth(SynthArgs),
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Option<Arch>,
    #[arg(long)]
    in_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    out_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    position: Option<NgnnPosition>,
    /// NGNN spec such as "2-relu" or "1-relu+1-sigmoid"
    #[arg(long)]
    spec: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0.02)]
    p_in: f64,
    #[arg(long, default_value_t = 0.002)]
    p_out: f64,
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
    /// Write a link-prediction split with this valid fraction
    #[arg(long, requires_all = ["link_test", "num_neg"])]
    link_valid: Option<f64>,
    #[arg(long)]
    link_test: Option<f64>,
    /// Negatives per held-out split
    #[arg(long)]
    num_neg: Option<usize>,
}

fn parse_arch(s: &str) -> std::result::Result<Arch, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
        .map_err(|_| format!("unknown arch {s:?} (gcn, sage, gat)"))
}

impl Cli {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results"))
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| NgnnError::Config("--config is required".into()))?;
    if !path.is_file() {
        return Err(NgnnError::Config(format!("config file {} not found", path.display())));
    }
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.runs {
        cfg.runs = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| NgnnError::Config(format!("cannot write {}: {e}", path.display())))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| NgnnError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn emit(table: &ResultTable, out: &Path, stem: &str) -> Result<()> {
    table.write(out, stem)?;
    print!("{}", table.rows_csv());
    if !table.gaps.is_empty() {
        print!("{}", table.gaps_csv());
    }
    Ok(())
}

fn paramcount(cli: &Cli, a: &ParamArgs) -> Result<()> {
    let mut m = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| NgnnError::Config(format!("{}: {e}", p.display())))?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            // Either a full experiment config or a bare model config.
            if v.get("model").is_some() {
                let cfg = load_config(cli)?;
                let mut m = cfg.model.clone();
                if m.in_dim == 0 || m.out_dim == 0 {
                    let (in_dim, out_dim) = match Data::load(cfg.task, &cfg.dataset)? {
                        Data::Node(d) => (d.feature_dim(), d.num_classes),
                        Data::Link(d) => (d.features.cols(), m.hidden_dim),
                    };
                    if m.in_dim == 0 {
                        m.in_dim = in_dim;
                    }
                    if m.out_dim == 0 {
                        m.out_dim = out_dim;
                    }
                }
                m
            } else {
                serde_json::from_value::<ModelConfig>(v)?
            }
        }
        None => {
            let arch = a.arch.ok_or_else(|| NgnnError::Config("paramcount needs --config or --arch".into()))?;
            ModelConfig::new(arch, 0, 0, 0)
        }
    };
    if let Some(x) = a.arch {
        m.arch = x;
    }
    if let Some(x) = a.in_dim {
        m.in_dim = x;
    }
    if let Some(x) = a.hidden {
        m.hidden_dim = x;
    }
    if let Some(x) = a.out_dim {
        m.out_dim = x;
    }
    if let Some(x) = a.layers {
        m.num_layers = x;
    }
    if let Some(x) = a.heads {
        m.heads = x;
    }
    if let Some(x) = a.position {
        m.ngnn_position = x;
    }
    if let Some(x) = &a.spec {
        m.ngnn_spec = x.clone();
        if a.position.is_none() && m.ngnn_position == NgnnPosition::None {
            m.ngnn_position = NgnnPosition::Hidden;
        }
    }
    let report = param_report(&m)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &cli.out {
        create_out(out)?;
        write_json(&out.join("paramcount.json"), &report)?;
    }
    Ok(())
}

fn gen_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let out = cli.out_dir();
    let spec = SbmSpec {
        nodes: a.nodes,
        classes: a.classes,
        dim: a.dim,
        p_in: a.p_in,
        p_out: a.p_out,
        separation: a.separation,
        seed: cli.seed.unwrap_or(0),
    };
    spec.validate()?;
    for w in spec.warnings() {
        eprintln!("warning: {w}");
    }
    match (a.link_valid, a.link_test, a.num_neg) {
        (Some(valid_frac), Some(test_frac), Some(num_neg)) => {
            let d = generate_sbm_links(
                &spec,
                &LinkSplitSpec {
                    valid_frac,
                    test_frac,
                    num_neg,
                },
            )?;
            d.save(&out)?;
            eprintln!(
                "wrote link dataset to {}: {} nodes, {} training edges",
                out.display(),
                d.num_nodes(),
                d.graph.num_undirected_edges()
            );
        }
        _ => {
            let d = generate_sbm(&spec)?;
            d.save(&out)?;
            eprintln!(
                "wrote node dataset to {}: {} nodes, {} edges",
                out.display(),
                d.num_nodes(),
                d.graph.num_undirected_edges()
            );
        }
    }
    write_json(&out.join("synth.json"), &spec)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Paramcount(a) => return paramcount(cli, a),
        Command::GenSynth(a) => return gen_synth(cli, a),
        _ => {}
    }
    let cfg = load_config(cli)?;
    let data = Data::load(cfg.task, &cfg.dataset)?;
    let out = cli.out_dir();
    create_out(&out)?;
    match cli.command {
        Command::Train => {
            let (runs, agg) = train_runs(&cfg, &data, cli.threads)?;
            for r in &runs {
                write_json(&out.join(format!("run_{}.json", r.seed)), r)?;
            }
            write_json(&out.join("aggregate.json"), &agg)?;
            println!("{}", serde_json::to_string_pretty(&agg)?);
        }
        Command::NoiseSweep => emit(&noise_sweep(&cfg, &data, cli.threads)?, &out, "noise_sweep")?,
        Command::EdgeNoiseSweep => emit(&edge_noise_sweep(&cfg, &data, cli.threads)?, &out, "edge_noise_sweep")?,
        Command::DepthSweep => emit(&depth_sweep(&cfg, &data, cli.threads)?, &out, "depth_sweep")?,
        Command::PositionSweep => emit(&position_sweep(&cfg, &data, cli.threads)?, &out, "position_sweep")?,
        Command::Paramcount(_) | Command::GenSynth(_) => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let config = e.is_config_error() || matches!(e, NgnnError::Format { .. });
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
