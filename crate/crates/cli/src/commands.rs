use std::path::Path;

use serde::Serialize;

use htlcgp_core::contract::{render_script_template, ContractKind};
use htlcgp_core::protocol::{
    execute_payment, ContractEvent, HopReport, PaymentOutcome, Protocol, Scenario, SettlementLedger,
};
use htlcgp_experiments::output::{
    ratio_gamma_records, ratio_pathlen_records, roi_records, write_csv, RATIO_GAMMA_HEADER, RATIO_PATHLEN_HEADER,
    ROI_HEADER,
};
use htlcgp_experiments::{betweenness_top, run_ratio_sweeps, run_roi_sweeps, ExperimentConfig, RoiTables, Topology};

use crate::files::{create_dir, load, resolve_seed, to_json, to_pretty_json, write_text, CliError, RunManifest};
use crate::ranges::parse_counts;
use crate::{AttackArgs, RatioAxis, ScriptKind, SimulateArgs, SweepArgs};

const TRACE: &str = "trace.jsonl";
const LEDGER: &str = "ledger.json";

#[derive(Serialize)]
struct LedgerFile<'a, M> {
    manifest: &'a M,
    protocol: Protocol,
    outcome: &'a PaymentOutcome,
    ledger: &'a SettlementLedger,
    hops: &'a [HopReport],
    contract_events: &'a [ContractEvent],
}

pub fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<(), CliError> {
    let mut scenario: Scenario = load(&args.scenario)?;
    if let Some(p) = args.protocol {
        scenario.protocol = p;
    }
    scenario.seed = resolve_seed(seed, scenario.seed)?;
    let prepared = scenario.prepare()?;
    let report = execute_payment(&prepared.graph, &prepared.plan, &prepared.behaviors, scenario.protocol, &prepared.config)?;

    let manifest = RunManifest::new("simulate", &scenario, scenario.seed, &[TRACE, LEDGER]);
    create_dir(&args.out)?;
    let mut trace = format!("{{\"manifest\":{}}}\n", to_json(&manifest));
    for event in &report.trace {
        trace.push_str(&to_json(event));
        trace.push('\n');
    }
    write_text(&args.out.join(TRACE), &trace)?;
    let ledger = LedgerFile {
        manifest: &manifest,
        protocol: report.protocol,
        outcome: &report.outcome,
        ledger: &report.ledger,
        hops: &report.hops,
        contract_events: &report.contract_events,
    };
    write_text(&args.out.join(LEDGER), &to_pretty_json(&ledger))
}

fn experiment_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut config = match path {
        Some(p) => load(p)?,
        None => ExperimentConfig::default(),
    };
    config.seed = resolve_seed(seed, config.seed)?;
    Ok(config)
}

const ROI_FILES: [&str; 3] = ["roi_vs_value.csv", "roi_vs_budget.csv", "roi_vs_gamma.csv"];
const SUMMARY: &str = "summary.json";

#[derive(Serialize)]
struct AttackSummary<'a, M> {
    manifest: &'a M,
    strategy: u8,
    victim: String,
    tables: &'a RoiTables,
}

pub fn attack(args: &AttackArgs, config_path: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    let mut config = experiment_config(config_path, seed)?;
    if let Some(path) = &args.snapshot {
        config.topology = Topology::Snapshot { path: path.clone() };
    } else if args.synthetic && !matches!(config.topology, Topology::Synthetic(_)) {
        config.topology = Topology::default();
    }
    config.budget = args.budget.unwrap_or(config.budget);
    config.tx_value = args.tx_value.unwrap_or(config.tx_value);
    if let Some(g) = &args.gamma {
        config.gamma = g.clone();
    }
    if !args.protocol.is_empty() {
        config.protocols = args.protocol.clone();
    }
    if !args.budgets.is_empty() {
        config.budgets = args.budgets.clone();
    }
    if !args.tx_values.is_empty() {
        config.tx_values = args.tx_values.clone();
    }
    if !args.gammas.is_empty() {
        config.gammas = args.gammas.clone();
    }
    if config.protocols.contains(&Protocol::Htlc1) {
        return Err(CliError::Usage("attacks support htlc and htlc-gp only".into()));
    }
    config.validate()?;

    let graph = config.load_graph()?;
    let tables = run_roi_sweeps(&graph, &config, args.strategy)?;
    let victim = betweenness_top(&graph, 1).pop().map(|n| n.to_string()).unwrap_or_default();

    let mut outputs = ROI_FILES.to_vec();
    outputs.push(SUMMARY);
    let manifest = RunManifest::new("attack", &config, config.seed, &outputs);
    create_dir(&args.out)?;
    for (file, rows) in ROI_FILES.iter().zip([&tables.by_value, &tables.by_budget, &tables.by_gamma]) {
        write_csv(&args.out.join(file), &manifest, &ROI_HEADER, &roi_records(rows))?;
    }
    let summary = AttackSummary {
        manifest: &manifest,
        strategy: args.strategy,
        victim,
        tables: &tables,
    };
    write_text(&args.out.join(SUMMARY), &to_pretty_json(&summary))
}

pub fn sweep(args: &SweepArgs, config_path: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    let mut config = experiment_config(config_path, seed)?;
    if let Some(text) = &args.path_lengths {
        config.path_lengths = parse_counts(text).map_err(CliError::Usage)?;
    }
    if let Some(text) = &args.hops {
        config.ratio_path_lengths = parse_counts(text).map_err(CliError::Usage)?;
    }
    if let Some(g) = &args.gamma {
        config.gamma = g.clone();
    }
    if !args.gammas.is_empty() {
        config.ratio_gammas = args.gammas.clone();
    }
    if !args.values.is_empty() {
        config.ratio_values = args.values.clone();
    }
    config.validate()?;

    let (by_len, by_gamma) = run_ratio_sweeps(&config)?;
    let (file, header, rows) = match args.ratio_vs {
        RatioAxis::Pathlen => ("ratio_vs_pathlen.csv", RATIO_PATHLEN_HEADER, ratio_pathlen_records(&by_len)),
        RatioAxis::Gamma => ("ratio_vs_gamma.csv", RATIO_GAMMA_HEADER, ratio_gamma_records(&by_gamma)),
    };
    let manifest = RunManifest::new("sweep", &config, config.seed, &[file]);
    create_dir(&args.out)?;
    write_csv(&args.out.join(file), &manifest, &header, &rows)?;
    Ok(())
}

pub fn render_script(kind: ScriptKind) -> Result<(), CliError> {
    let kind = match kind {
        ScriptKind::Cancellation => ContractKind::GpCancellation,
        ScriptKind::Payment => ContractKind::GpPayment,
    };
    let text = render_script_template(kind).expect("both kinds have templates");
    print!("{text}");
    Ok(())
}
