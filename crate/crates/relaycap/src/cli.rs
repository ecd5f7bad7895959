//! Command-line surface. Subcommands map one-to-one onto the engine
//! operations; all output is written to stdout, diagnostics to stderr.
//!
//! Exit codes: 0 on success, 2 for input problems (bad flags, unparsable or
//! invalid network files), 1 when an internal cap is hit (enumeration or
//! resource limits).

use crate::capacity::{
    achievable_rate, cutset_bound, linear_capacity, CapacityError, DistSearchConfig, InputDist,
    RankMethod, SearchMode,
};
use crate::cut::enumerate_cuts;
use crate::info::Pmf;
use crate::netfile::{parse_network, render_network};
use crate::network::Network;
use crate::parallel::default_threads;
use crate::sim::{run_blocks, DecoderKind, DecodingMode, SimConfig, SimError};
use crate::unfold::{unfold, verify_sandwich, UnfoldError};
use std::fmt::Write as _;

const USAGE: &str = "\
relaycap <command> [flags]

commands:
  capacity      min-cut expected-rank capacity of a linear network
  cutset        cut-set upper bound via joint input-distribution search
  rate          achievable rate via product input-distribution search
  cuts          list every cut and its boundaries per destination
  layers        layer decomposition of the network
  unfold        print the T-stage time-extended network
  verify-unfold check the unfolding rate relations numerically
  simulate      run the block-Markov coding simulation

shared flags:
  --net <file>       network description (required)
  --seed <u64>       random seed (default 0)
  --format <f>       human | machine (default human)
  --threads <n>      worker threads (default: available cores)
  --samples <n>      Monte Carlo samples (default 10000)
  --grid <k>         simplex grid resolution (default 4)
  --T <t>            unfolding stages (default 3)

capacity: --method exact|mc [--verbose]
rate/cutset: --ascent <rounds>
unfold/verify-unfold: --w <width> --budget <cuts> [--verbose]
simulate: --n <len> --R <rate> --trials <n> --K <blocks>
          --decoder exact|typicality --eps <e> [--chained]
";

/// Flag values shared across commands.
struct Flags {
    net: Option<String>,
    seed: u64,
    machine: bool,
    threads: usize,
    samples: usize,
    grid: usize,
    stages: usize,
    method: String,
    verbose: bool,
    ascent: usize,
    width: usize,
    budget: usize,
    block_len: usize,
    rate: f64,
    trials: usize,
    message_blocks: usize,
    decoder: String,
    eps: f64,
    chained: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Flags {
            net: None,
            seed: 0,
            machine: false,
            threads: default_threads(),
            samples: 10_000,
            grid: 4,
            stages: 3,
            method: "exact".into(),
            verbose: false,
            ascent: 0,
            width: 1,
            budget: 500,
            block_len: 16,
            rate: 0.5,
            trials: 100,
            message_blocks: 1,
            decoder: "exact".into(),
            eps: 0.2,
            chained: false,
        }
    }
}

fn parse_flags(args: &[String]) -> Result<Flags, String> {
    let mut flags = Flags::default();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut value = |name: &str| -> Result<&String, String> {
            it.next().ok_or_else(|| format!("{name} needs a value"))
        };
        match arg.as_str() {
            "--net" => flags.net = Some(value("--net")?.clone()),
            "--seed" => flags.seed = value("--seed")?.parse().map_err(|_| "bad --seed")?,
            "--format" => match value("--format")?.as_str() {
                "human" => flags.machine = false,
                "machine" => flags.machine = true,
                other => return Err(format!("unknown format `{other}`")),
            },
            "--threads" => {
                flags.threads = value("--threads")?.parse().map_err(|_| "bad --threads")?;
                if flags.threads == 0 {
                    return Err("--threads must be at least 1".into());
                }
            }
            "--samples" => {
                flags.samples = value("--samples")?.parse().map_err(|_| "bad --samples")?
            }
            "--grid" => flags.grid = value("--grid")?.parse().map_err(|_| "bad --grid")?,
            "--T" => flags.stages = value("--T")?.parse().map_err(|_| "bad --T")?,
            "--method" => flags.method = value("--method")?.clone(),
            "--verbose" => flags.verbose = true,
            "--ascent" => flags.ascent = value("--ascent")?.parse().map_err(|_| "bad --ascent")?,
            "--w" => flags.width = value("--w")?.parse().map_err(|_| "bad --w")?,
            "--budget" => flags.budget = value("--budget")?.parse().map_err(|_| "bad --budget")?,
            "--n" => flags.block_len = value("--n")?.parse().map_err(|_| "bad --n")?,
            "--R" => flags.rate = value("--R")?.parse().map_err(|_| "bad --R")?,
            "--trials" => flags.trials = value("--trials")?.parse().map_err(|_| "bad --trials")?,
            "--K" => {
                flags.message_blocks = value("--K")?.parse().map_err(|_| "bad --K")?
            }
            "--decoder" => flags.decoder = value("--decoder")?.clone(),
            "--eps" => flags.eps = value("--eps")?.parse().map_err(|_| "bad --eps")?,
            "--chained" => flags.chained = true,
            other => return Err(format!("unknown flag `{other}`")),
        }
    }
    Ok(flags)
}

/// Formats a float with nine significant digits, plain decimal notation,
/// trailing zeros trimmed. Locale-independent by construction.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (8 - mag).clamp(0, 17) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn members_of_mask(mask: u64) -> String {
    let ids: Vec<String> =
        (0..64).filter(|b| mask >> b & 1 == 1).map(|b| (b + 1).to_string()).collect();
    format!("{{{}}}", ids.join(","))
}

fn load_network(flags: &Flags) -> Result<Network, i32> {
    let Some(path) = &flags.net else {
        eprintln!("error: --net <file> is required");
        return Err(2);
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {path}: {e}");
            return Err(2);
        }
    };
    match parse_network(&text) {
        Ok(net) => Ok(net),
        Err(issues) => {
            for i in issues {
                eprintln!("error: {i}");
            }
            Err(2)
        }
    }
}

fn capacity_exit(e: &CapacityError) -> i32 {
    match e {
        CapacityError::NotLinear
        | CapacityError::ZeroSamples
        | CapacityError::ZeroGrid
        | CapacityError::WrongSearchMode
        | CapacityError::MissingInput(_) => 2,
        _ => 1,
    }
}

pub fn run() -> i32 {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut out = String::new();
    let code = dispatch(&args, &mut out);
    print!("{out}");
    code
}

/// Runs a command, writing the report into `out`. Split from `run` so tests
/// can capture output in-process.
pub fn dispatch(args: &[String], out: &mut String) -> i32 {
    let Some(command) = args.first() else {
        eprint!("{USAGE}");
        return 2;
    };
    let flags = match parse_flags(&args[1..]) {
        Ok(f) => f,
        Err(m) => {
            eprintln!("error: {m}");
            return 2;
        }
    };
    match command.as_str() {
        "capacity" => cmd_capacity(&flags, out),
        "cutset" => cmd_search(&flags, out, SearchMode::Joint),
        "rate" => cmd_search(&flags, out, SearchMode::Product),
        "cuts" => cmd_cuts(&flags, out),
        "layers" => cmd_layers(&flags, out),
        "unfold" => cmd_unfold(&flags, out),
        "verify-unfold" => cmd_verify_unfold(&flags, out),
        "simulate" => cmd_simulate(&flags, out),
        "help" | "--help" | "-h" => {
            out.push_str(USAGE);
            0
        }
        other => {
            eprintln!("error: unknown command `{other}`");
            eprint!("{USAGE}");
            2
        }
    }
}

fn cmd_capacity(flags: &Flags, out: &mut String) -> i32 {
    let net = match load_network(flags) {
        Ok(n) => n,
        Err(code) => return code,
    };
    let method = match flags.method.as_str() {
        "exact" => RankMethod::Exact,
        "mc" => RankMethod::MonteCarlo { samples: flags.samples, seed: flags.seed },
        other => {
            eprintln!("error: unknown method `{other}` (use exact or mc)");
            return 2;
        }
    };
    let report = match linear_capacity(&net, method, flags.threads) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return capacity_exit(&e);
        }
    };
    if flags.machine {
        let _ = writeln!(out, "capacity_bits={}", sig9(report.value_bits));
        let _ = writeln!(out, "log2q={}", sig9(report.log2_q));
        match method {
            RankMethod::Exact => {
                let _ = writeln!(out, "method=exact");
            }
            RankMethod::MonteCarlo { samples, seed } => {
                let _ = writeln!(out, "method=mc samples={samples} seed={seed}");
            }
        }
        for d in &report.per_destination {
            let cuts: Vec<String> =
                d.argmin.iter().map(|c| members_of_mask(c.mask)).collect();
            let _ = writeln!(
                out,
                "mincut dest={} expected_rank={} halfwidth={} cuts={}",
                d.destination,
                sig9(d.min_value),
                sig9(d.half_width),
                cuts.join(";")
            );
            if flags.verbose {
                for c in &d.per_cut {
                    let _ = writeln!(
                        out,
                        "cutrank dest={} cut={} value={} halfwidth={}",
                        d.destination,
                        members_of_mask(c.mask),
                        sig9(c.value),
                        sig9(c.half_width)
                    );
                }
            }
        }
    } else {
        let _ = writeln!(out, "capacity: {} bits per network use", sig9(report.value_bits));
        for d in &report.per_destination {
            let cuts: Vec<String> =
                d.argmin.iter().map(|c| members_of_mask(c.mask)).collect();
            let _ = writeln!(
                out,
                "  destination {}: min expected rank {} (half-width {}), attained by {}",
                d.destination,
                sig9(d.min_value),
                sig9(d.half_width),
                cuts.join(", ")
            );
            if flags.verbose {
                for c in &d.per_cut {
                    let _ = writeln!(
                        out,
                        "    cut {}: E[rank] = {}",
                        members_of_mask(c.mask),
                        sig9(c.value)
                    );
                }
            }
        }
    }
    0
}

fn cmd_search(flags: &Flags, out: &mut String, mode: SearchMode) -> i32 {
    let net = match load_network(flags) {
        Ok(n) => n,
        Err(code) => return code,
    };
    let cfg = DistSearchConfig { mode, grid: flags.grid, ascent_rounds: flags.ascent };
    let result = match mode {
        SearchMode::Product => achievable_rate(&net, cfg, flags.threads),
        SearchMode::Joint => cutset_bound(&net, cfg, flags.threads),
    };
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return capacity_exit(&e);
        }
    };
    let key = match mode {
        SearchMode::Product => "rate_bits",
        SearchMode::Joint => "cutset_bits",
    };
    if flags.machine {
        let _ = writeln!(out, "{key}={}", sig9(report.value_bits));
        let _ = writeln!(out, "grid={}", report.grid);
        let _ = writeln!(out, "evaluations={}", report.evaluations);
        write_witness_machine(out, &report.witness);
    } else {
        let what = match mode {
            SearchMode::Product => "achievable rate",
            SearchMode::Joint => "cut-set bound",
        };
        let _ = writeln!(
            out,
            "{what}: {} bits per use (grid 1/{}, {} evaluations)",
            sig9(report.value_bits),
            report.grid,
            report.evaluations
        );
        write_witness_machine(out, &report.witness);
    }
    0
}

fn write_witness_machine(out: &mut String, witness: &InputDist) {
    match witness {
        InputDist::Product(pmfs) => {
            for (v0, pmf) in pmfs.iter().enumerate() {
                let probs: Vec<String> = pmf.probs().iter().map(|&p| sig9(p)).collect();
                let _ = writeln!(out, "witness node={} pmf={}", v0 + 1, probs.join(","));
            }
        }
        InputDist::Joint { nodes, probs } => {
            let ids: Vec<String> = nodes.iter().map(|v| v.to_string()).collect();
            let ps: Vec<String> = probs.iter().map(|&p| sig9(p)).collect();
            let _ = writeln!(out, "witness joint nodes={} probs={}", ids.join(","), ps.join(","));
        }
    }
}

fn cmd_cuts(flags: &Flags, out: &mut String) -> i32 {
    let net = match load_network(flags) {
        Ok(n) => n,
        Err(code) => return code,
    };
    for &d in net.destinations() {
        let cuts = match enumerate_cuts(&net, d) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        };
        for cut in cuts {
            let senders: Vec<String> = cut.senders().iter().map(|v| v.to_string()).collect();
            let receivers: Vec<String> =
                cut.receivers().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                out,
                "cut dest={d} members={} senders={{{}}} receivers={{{}}}",
                cut.render_members(),
                senders.join(","),
                receivers.join(",")
            );
        }
    }
    0
}

fn cmd_layers(flags: &Flags, out: &mut String) -> i32 {
    let net = match load_network(flags) {
        Ok(n) => n,
        Err(code) => return code,
    };
    match net.compute_layers() {
        Ok(layering) => {
            let mut line = format!("L={}", layering.depth());
            for (l, nodes) in layering.layers.iter().enumerate() {
                let ids: Vec<String> = nodes.iter().map(|v| v.to_string()).collect();
                let _ = write!(line, " layer{l}={}", ids.join(","));
            }
            let _ = writeln!(out, "{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_unfold(flags: &Flags, out: &mut String) -> i32 {
    let net = match load_network(flags) {
        Ok(n) => n,
        Err(code) => return code,
    };
    match unfold(&net, flags.stages, flags.width) {
        Ok(unfolded) => {
            let _ = writeln!(
                out,
                "# unfolded over {} stages, memory width {}",
                unfolded.stages, unfolded.memory_width
            );
            for id in 1..=unfolded.network.node_count() {
                let _ = writeln!(out, "# copy {id} = {}", unfolded.node_label(id));
            }
            out.push_str(&render_network(&unfolded.network));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            unfold_exit(&e)
        }
    }
}

fn unfold_exit(e: &UnfoldError) -> i32 {
    match e {
        UnfoldError::TooManyCopies(_) | UnfoldError::Capacity(_) | UnfoldError::Cut(_) => 1,
        _ => 2,
    }
}

fn cmd_verify_unfold(flags: &Flags, out: &mut String) -> i32 {
    let net = match load_network(flags) {
        Ok(n) => n,
        Err(code) => return code,
    };
    let inputs: Vec<Pmf> =
        net.nodes().map(|v| Pmf::uniform(net.input_size(v).max(1))).collect();
    let report = match verify_sandwich(
        &net,
        flags.stages,
        flags.width,
        &inputs,
        flags.budget,
        flags.seed,
        flags.threads,
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return unfold_exit(&e);
        }
    };
    let _ = writeln!(
        out,
        "verify T={} w={} base_min={} lower_coeff={} steady_norm={} argmin_steady_norm={} \
         norm_min={} cuts={} lower_ok={} upper_ok={}",
        report.stages,
        report.memory_width,
        sig9(report.base_min),
        sig9(report.lower_coeff),
        sig9(report.steady_normalized),
        sig9(report.argmin_steady_normalized),
        sig9(report.normalized_min),
        report.evaluated.len(),
        report.lower_ok,
        report.upper_ok
    );
    for mask in &report.lower_violations {
        let _ = writeln!(out, "violation cut={}", members_of_mask(*mask));
    }
    if flags.verbose {
        for eval in &report.evaluated {
            let _ = writeln!(
                out,
                "cuteval cut={} steady={} H={} margin={}",
                members_of_mask(eval.mask),
                eval.steady_of.is_some() as u8,
                sig9(eval.entropy),
                sig9(eval.lower_margin)
            );
        }
    }
    0
}

fn cmd_simulate(flags: &Flags, out: &mut String) -> i32 {
    let net = match load_network(flags) {
        Ok(n) => n,
        Err(code) => return code,
    };
    let decoder = match flags.decoder.as_str() {
        "exact" => DecoderKind::ExactLinear,
        "typicality" => DecoderKind::JointTypicality { eps: flags.eps },
        other => {
            eprintln!("error: unknown decoder `{other}` (use exact or typicality)");
            return 2;
        }
    };
    let cfg = SimConfig {
        block_len: flags.block_len,
        rate: flags.rate,
        message_blocks: flags.message_blocks,
        trials: flags.trials,
        seed: flags.seed,
        decoder,
        mode: if flags.chained { DecodingMode::Chained } else { DecodingMode::GenieAided },
        input_pmfs: None,
    };
    let report = match run_blocks(&net, &cfg, flags.threads) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                SimError::TooManyMessages { .. } | SimError::Info(_) => 1,
                _ => 2,
            };
        }
    };
    let _ = writeln!(
        out,
        "sim n={} R={} M={} err={} ci={},{} seed={}",
        report.block_len,
        sig9(report.rate),
        report.message_count,
        sig9(report.error_rate),
        sig9(report.ci_low),
        sig9(report.ci_high),
        report.seed
    );
    let _ = writeln!(out, "effective_rate={}", sig9(report.effective_rate));
    let _ = writeln!(out, "layers={}", report.layers);
    let _ = writeln!(out, "trials={} K={}", report.trials, report.message_blocks);
    let _ = writeln!(
        out,
        "ambiguous={} no_match={} attempts={}",
        report.ambiguous, report.no_match, report.decode_attempts
    );
    0
}
