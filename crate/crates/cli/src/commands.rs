use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde_json::json;
use sqrobust::correlation::{chi_cross, chi_onedim, chi_same, chi_same_mc, ChiReport};
use sqrobust::covers::{coverage_matrix, exact_cover_size, greedy_from_matrix, DistributionPair};
use sqrobust::instance::{HardInstance, LabeledSample};
use sqrobust::learners::{erm_robust, fit_linear, robust_loss, Classifier, NearestNeighbor};
use sqrobust::numeric::{gaussian_abs_moment, gaussian_moment};
use sqrobust::quad1d::{gauss_hermite_rule, Side};
use sqrobust::rng::{derive_seed, rng_from_seed};
use sqrobust::sqsim::{
    distinguishing_game, AlignedSupportLearner, AnswerMode, RandomHalfspaceLearner, SqLearner, SqOracle,
};

use crate::config::{
    ChiConfig, CoverConfig, ErmConfig, InstanceConfig, QuadratureConfig, QueryStrategy, RobustnessConfig, SqConfig,
};
use crate::report::{Report, Table};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Config(String),
    /// Failure after a valid configuration was accepted; exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime failure: {m}"),
        }
    }
}

impl From<sqrobust::Error> for CliError {
    fn from(e: sqrobust::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn quadrature(cfg: &QuadratureConfig) -> Result<Report> {
    let mut table = Table::new(&["m", "index", "node", "weight"]);
    let mut checks = Vec::new();
    for m in cfg.m_min..=cfg.m_max {
        let rule = gauss_hermite_rule(m)?;
        for (i, (x, w)) in rule.nodes().iter().zip(rule.weights()).enumerate() {
            table.push(vec![m.to_string(), i.to_string(), num(*x), num(*w)]);
        }
        let max_error = (0..2 * m as u32)
            .map(|l| (rule.moment(l) - gaussian_moment(l)).abs() / gaussian_abs_moment(l).max(1.0))
            .fold(0.0, f64::max);
        let l = 2 * m as u32;
        checks.push(json!({
            "m": m,
            "maxRelativeMomentError": max_error,
            "firstMismatchOrder": l,
            "ruleMoment": rule.moment(l),
            "gaussianMoment": gaussian_moment(l),
        }));
    }
    Ok(Report::new("quadrature", cfg, None, table).with_extra(json!({ "moments": checks })))
}

fn write_samples(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let mut out = String::new();
    for s in samples {
        for x in &s.point {
            write!(out, "{x},").expect("string write");
        }
        writeln!(out, "{}", s.label).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn labeled(inst: &HardInstance, n: usize, seed: u64) -> Result<Vec<LabeledSample>> {
    let mut s = inst.sample(0, n, derive_seed(seed, 0))?;
    s.extend(inst.sample(1, n, derive_seed(seed, 1))?);
    Ok(s)
}

/// Writes `instance.json` and `samples.csv` into `dir`.
pub fn instance(cfg: &InstanceConfig, dir: &Path) -> Result<Report> {
    let inst = HardInstance::build(&cfg.instance)?;
    std::fs::create_dir_all(dir)?;
    let instance_file = dir.join("instance.json");
    let samples_file = dir.join("samples.csv");
    std::fs::write(&instance_file, inst.to_json()?)?;
    write_samples(&samples_file, &labeled(&inst, cfg.samples_per_class, derive_seed(cfg.instance.seed, 10))?)?;

    let layout = inst.layout();
    let p = inst.params();
    let mut table = Table::new(&["key", "value"]);
    let rows: Vec<(&str, String)> = vec![
        ("d", p.d.to_string()),
        ("k", p.k.to_string()),
        ("m", p.m.to_string()),
        ("delta", num(p.delta)),
        ("rho", num(p.rho)),
        ("rotated", p.rotated.to_string()),
        ("inputDim", layout.input_dim().to_string()),
        ("padding", layout.padding().to_string()),
        ("planted", inst.planted().to_string()),
        ("familySize", p.family_size.to_string()),
        ("familyRejections", inst.family().rejections().to_string()),
        ("setSeparation", num(inst.set_separation())),
        ("feasible", p.feasibility.holds.to_string()),
        ("samplesPerClass", cfg.samples_per_class.to_string()),
        ("instanceFile", instance_file.display().to_string()),
        ("samplesFile", samples_file.display().to_string()),
    ];
    for (k, v) in rows {
        table.push(vec![k.to_string(), v]);
    }
    Ok(Report::new("instance", cfg, Some(cfg.instance.seed), table).with_extra(json!({ "params": p })))
}

fn default_epsilons(inst: &HardInstance) -> Vec<f64> {
    let rho = inst.rho();
    let sep = inst.set_separation();
    let mut eps = vec![0.0, 0.25 * sep, 0.5 * sep, sep];
    if rho > 0.0 {
        eps.extend([0.5 * rho, rho, 2.0 * rho]);
    }
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    eps
}

pub fn robustness(cfg: &RobustnessConfig) -> Result<Report> {
    let inst = HardInstance::build(&cfg.instance)?;
    let seed = cfg.instance.seed;
    let train = labeled(&inst, cfg.train_per_class, derive_seed(seed, 20))?;
    let test = labeled(&inst, cfg.test_per_class, derive_seed(seed, 21))?;
    let nn_test: Vec<LabeledSample> = test
        .iter()
        .filter(|s| s.label == 0)
        .take(cfg.nn_test_per_class)
        .chain(test.iter().filter(|s| s.label == 1).take(cfg.nn_test_per_class))
        .cloned()
        .collect();

    let split = |label: u8| train.iter().filter(|s| s.label == label).map(|s| s.point.clone()).collect::<Vec<_>>();
    let fit = fit_linear(&split(0), &split(1), 1000)?;
    let nn = NearestNeighbor::new(
        train.iter().map(|s| s.point.clone()).collect(),
        train.iter().map(|s| s.label).collect(),
        format!("nearest neighbor on {} training points", train.len()),
    )?;
    let classifiers = [
        ("setVote", inst.reference_classifier(), &test),
        ("linear", Classifier::Linear(fit.classifier), &test),
        ("nearestNeighbor", Classifier::NearestNeighbor(nn), &nn_test),
    ];
    let epsilons = cfg.epsilons.clone().unwrap_or_else(|| default_epsilons(&inst));

    let mut table = Table::new(&["classifier", "epsilon", "loss0", "loss1", "maxLoss", "method", "n0", "n1"]);
    let mut reports = Vec::new();
    for (name, classifier, samples) in &classifiers {
        for &eps in &epsilons {
            let r = robust_loss(classifier, samples, eps)?;
            table.push(vec![
                name.to_string(),
                num(eps),
                num(r.per_class_loss[0]),
                num(r.per_class_loss[1]),
                num(r.max_loss),
                serde_json::to_value(r.method).expect("enum serializes").as_str().unwrap_or("").to_string(),
                r.n[0].to_string(),
                r.n[1].to_string(),
            ]);
            reports.push(json!({ "classifier": name, "report": r }));
        }
    }
    let extra = json!({
        "setSeparation": inst.set_separation(),
        "linearTrainingError": fit.training_error,
        "linearSeparable": fit.separable,
        "reports": reports,
    });
    Ok(Report::new("robustness", cfg, Some(seed), table).with_extra(extra))
}

fn learner_for(strategy: QueryStrategy, inst: &HardInstance, budget: usize) -> Box<dyn SqLearner> {
    match strategy {
        QueryStrategy::Aligned => Box::new(AlignedSupportLearner::for_instance(inst)),
        QueryStrategy::RandomHalfspace => {
            Box::new(RandomHalfspaceLearner::new(Arc::new(inst.family().clone()), inst.layout(), budget))
        }
    }
}

fn mode_name(mode: AnswerMode) -> &'static str {
    match mode {
        AnswerMode::Honest => "honest",
        AnswerMode::Camouflage => "camouflage",
    }
}

fn strategy_name(s: QueryStrategy) -> &'static str {
    match s {
        QueryStrategy::Aligned => "aligned",
        QueryStrategy::RandomHalfspace => "randomHalfspace",
    }
}

pub fn sq(cfg: &SqConfig) -> Result<Report> {
    let base = HardInstance::build(&cfg.instance)?;
    let seed = cfg.instance.seed;
    let mut table = Table::new(&[
        "tau",
        "mode",
        "strategy",
        "budget",
        "trials",
        "successes",
        "accuracy",
        "chance",
        "bandLow",
        "bandHigh",
        "withinBand",
        "learnerErrors",
        "queries",
        "camouflageBroken",
    ]);
    let mut ledger = String::new();
    let mut cell = 0u64;
    for &tau in &cfg.taus {
        for &mode in &cfg.modes {
            for &strategy in &cfg.strategies {
                let cell_seed = derive_seed(seed, 1000 + cell);
                cell += 1;
                let mut learner = learner_for(strategy, &base, cfg.budget);
                let report = distinguishing_game(
                    |planted, s| SqOracle::new(Arc::new(base.with_planted(planted)?), tau, mode, cfg.budget, s),
                    learner.as_mut(),
                    base.family().len(),
                    cfg.trials,
                    cell_seed,
                )?;
                table.push(vec![
                    num(tau),
                    mode_name(mode).into(),
                    strategy_name(strategy).into(),
                    cfg.budget.to_string(),
                    report.trials.to_string(),
                    report.successes.to_string(),
                    num(report.accuracy),
                    num(report.chance),
                    report.chance_band.0.to_string(),
                    report.chance_band.1.to_string(),
                    report.within_chance_band().to_string(),
                    report.learner_errors.to_string(),
                    report.queries.to_string(),
                    report.camouflage_broken.to_string(),
                ]);
                if cfg.ledger.is_some() {
                    let mut oracle =
                        SqOracle::new(Arc::new(base.clone()), tau, mode, cfg.budget, derive_seed(cell_seed, 7))?;
                    let mut rng = rng_from_seed(derive_seed(cell_seed, 8));
                    learner.identify(&mut oracle, &mut rng)?;
                    ledger.push_str(&oracle.ledger_jsonl()?);
                }
            }
        }
    }
    if let Some(path) = &cfg.ledger {
        std::fs::write(path, ledger)?;
    }
    Ok(Report::new("sq", cfg, Some(seed), table))
}

fn chi_row(table: &mut Table, kind: &str, r: &ChiReport) {
    table.push(vec![
        kind.into(),
        num(r.value),
        num(r.stderr),
        serde_json::to_value(r.method).expect("enum serializes").as_str().unwrap_or("").to_string(),
        r.n_samples.to_string(),
        r.pair.first.to_string(),
        r.pair.second.to_string(),
    ]);
}

pub fn chi(cfg: &ChiConfig) -> Result<Report> {
    let inst = HardInstance::build(&cfg.instance)?;
    let seed = cfg.instance.seed;
    let other = inst.with_planted((inst.planted() + 1) % inst.family().len())?;
    let same = chi_same(&inst)?;
    let same_mc = chi_same_mc(&inst, cfg.mc_samples, derive_seed(seed, 30))?;
    let cross = chi_cross(&inst, &other, cfg.mc_samples, derive_seed(seed, 31))?;
    let mut table = Table::new(&["kind", "value", "stderr", "method", "nSamples", "first", "second"]);
    chi_row(&mut table, "sameAnalytic", &same);
    chi_row(&mut table, "sameMonteCarlo", &same_mc);
    chi_row(&mut table, "cross", &cross);
    let extra = json!({
        "oneDimA": chi_onedim(inst.pair(), Side::A)?,
        "oneDimB": chi_onedim(inst.pair(), Side::B)?,
        "reports": [same, same_mc, cross],
    });
    Ok(Report::new("chi", cfg, Some(seed), table).with_extra(extra))
}

fn random_family(cfg: &CoverConfig) -> Vec<DistributionPair> {
    let mut rng = rng_from_seed(cfg.seed);
    let cloud = |rng: &mut sqrobust::rng::StdRng| -> Vec<Vec<f64>> {
        (0..cfg.points_per_member).map(|_| (0..cfg.dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    };
    (0..cfg.family_size).map(|_| DistributionPair { first: cloud(&mut rng), second: cloud(&mut rng) }).collect()
}

/// Exhaustive minimum covers are limited to this many members.
const EXACT_COVER_LIMIT: usize = 20;

pub fn cover(cfg: &CoverConfig) -> Result<Report> {
    let family = cfg.members.clone().unwrap_or_else(|| random_family(cfg));
    let matrix = coverage_matrix(&family, cfg.eps, cfg.delta, cfg.norm)?;
    let greedy = greedy_from_matrix(&matrix);
    let exact = if family.len() <= EXACT_COVER_LIMIT { Some(exact_cover_size(&matrix)?) } else { None };
    let mut table = Table::new(&["member", "inCover", "coveredBy"]);
    for j in 0..family.len() {
        let by = greedy.indices.iter().find(|&&i| matrix[i][j]).copied();
        table.push(vec![
            j.to_string(),
            greedy.indices.contains(&j).to_string(),
            by.map_or_else(String::new, |i| i.to_string()),
        ]);
    }
    let extra = json!({ "greedy": greedy, "exactSize": exact, "coverage": matrix, "members": family });
    Ok(Report::new("cover", cfg, Some(cfg.seed), table).with_extra(extra))
}

pub fn erm(cfg: &ErmConfig) -> Result<Report> {
    let inst = HardInstance::build(&cfg.instance)?;
    let seed = cfg.instance.seed;
    let size = inst.family().len();
    let members: Vec<Classifier> = (0..size).map(|i| inst.member_classifier(i)).collect::<sqrobust::Result<_>>()?;
    let eps = cfg.epsilon_fraction * inst.set_separation();
    let n = cfg.samples_per_class.unwrap_or_else(|| (cfg.sample_constant * (size as f64).ln()).ceil().max(1.0) as usize);
    let held_out = labeled(&inst, cfg.held_out_per_class, derive_seed(seed, 40))?;
    let held: Vec<f64> =
        members.iter().map(|c| Ok(robust_loss(c, &held_out, eps)?.max_loss)).collect::<Result<_>>()?;

    let mut table = Table::new(&[
        "trial",
        "chosen",
        "planted",
        "chosenEmpiricalLoss",
        "chosenHeldOutLoss",
        "plantedHeldOutLoss",
    ]);
    for trial in 0..cfg.trials {
        let s = derive_seed(seed, 41 + trial as u64);
        let s0 = inst.sample(0, n, derive_seed(s, 0))?;
        let s1 = inst.sample(1, n, derive_seed(s, 1))?;
        let outcome = erm_robust(&members, &s0, &s1, eps)?;
        table.push(vec![
            trial.to_string(),
            outcome.chosen.to_string(),
            inst.planted().to_string(),
            num(outcome.losses[outcome.chosen].max_loss),
            num(held[outcome.chosen]),
            num(held[inst.planted()]),
        ]);
    }
    let extra = json!({ "epsilon": eps, "samplesPerClass": n, "heldOutLosses": held });
    Ok(Report::new("erm", cfg, Some(seed), table).with_extra(extra))
}

/// Where a report goes: `--out`, else `$SQROBUST_OUT_DIR/<command>.<ext>`,
/// else standard output (`None`).
pub fn report_path(out: Option<&Path>, env_dir: Option<PathBuf>, command: &str, ext: &str) -> Option<PathBuf> {
    out.map(Path::to_path_buf).or_else(|| env_dir.map(|d| d.join(format!("{command}.{ext}"))))
}
