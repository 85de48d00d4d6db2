use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use toposqt::compose::{
    composite_context_poset, gap_search, sum_context_poset, sum_translation, tensor_translation, ComposeError,
    GapFamily, GapSearchConfig, SumTranslationBundle, TensorTranslationBundle,
};
use toposqt::contexts::{generate_context_poset, AbelianContext, ContextError, ContextPoset, PosetExport};
use toposqt::linalg::{eigendecompose, qubit::sigma_z, HermitianOperator, ProjectionOperator};
use toposqt::quantum::{outer_das_operator, truth_value, ArrowTable, QuantumError, SpectralPoset};
use toposqt::suites::{run_suites, Suite, SuiteConfig};
use toposqt::systems::{Kind, System, SystemDef};
use toposqt::topos::PresheafExport;

use crate::output::{clean, emit, fmt_values, table, write_to, Rendered};
use crate::{Cli, CliError, Command, SystemArgs};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if !(cli.tol.is_finite() && cli.tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {}", cli.tol)));
    }
    match &cli.command {
        Command::Contexts { system, dot } => contexts(cli, system, dot.as_deref()),
        Command::Das { system, op, context } => das(cli, system, op, context.as_deref()),
        Command::Truth { system, state, prop, at } => truth(cli, system, state, prop, at),
        Command::Check { suite, perturb } => check(cli, suite, *perturb),
        Command::TranslateSum { first, second, op1, op2 } => translate_sum(cli, first, second, op1, op2),
        Command::TranslateTensor { first, second, op, entangled } => {
            translate_tensor(cli, first, second, op, entangled.as_deref())
        }
        Command::GapSearch { system, op, n2, families, budget } => {
            gap(cli, system.as_deref().zip(op.as_deref()), *n2, families, *budget)
        }
        Command::Export { system } => export(cli, system),
    }
}

fn load_system(path: &Path) -> Result<System, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let def: SystemDef =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: parse error: {e}", path.display())))?;
    def.build().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn context_error(e: ContextError) -> CliError {
    match e {
        ContextError::TooManyGenerators(_) | ContextError::TooManyBlocks(_) => CliError::Usage(e.to_string()),
        other => CliError::Invariant(other.to_string()),
    }
}

fn quantum_error(e: QuantumError) -> CliError {
    match e {
        QuantumError::NotUnitVector(_) => CliError::BadState(e.to_string()),
        QuantumError::Context(c) => context_error(c),
        other => CliError::Invariant(other.to_string()),
    }
}

fn compose_error(e: ComposeError) -> CliError {
    match e {
        ComposeError::Context(c) => context_error(c),
        ComposeError::Quantum(q) => quantum_error(q),
        other => CliError::Invariant(other.to_string()),
    }
}

fn generated_poset(sys: &System, include_trivial: bool) -> Result<ContextPoset, CliError> {
    let dim = match (sys.kind(), sys.dim()) {
        (Kind::Quantum, Some(d)) => d,
        (kind, _) => return Err(CliError::Usage(format!("system {} is {kind:?}, not quantum", sys.name()))),
    };
    let generators: Vec<HermitianOperator> = sys.generators().into_iter().map(|(_, a)| a).collect();
    let poset = generate_context_poset(dim, &generators, include_trivial).map_err(context_error)?;
    let violations = poset.order_violations();
    if !violations.is_empty() {
        return Err(CliError::Invariant(violations.join("; ")));
    }
    if !poset.is_down_closed() {
        return Err(CliError::Invariant("context poset is not closed under coarsening".into()));
    }
    Ok(poset)
}

fn spectral_space(poset: ContextPoset) -> Result<SpectralPoset, CliError> {
    let space = SpectralPoset::new(poset).map_err(quantum_error)?;
    let report = space.sigma().check();
    if !report.is_ok() {
        return Err(CliError::Invariant(report.failures.join("; ")));
    }
    Ok(space)
}

fn system_space(args: &SystemArgs) -> Result<(System, SpectralPoset), CliError> {
    let sys = load_system(&args.system)?;
    let poset = generated_poset(&sys, !args.no_trivial)?;
    if poset.is_empty() {
        return Err(CliError::Usage("the context poset is empty".into()));
    }
    Ok((sys, spectral_space(poset)?))
}

fn operator<'a>(sys: &'a System, name: &str) -> Result<&'a HermitianOperator, CliError> {
    sys.find_symbol(name)
        .and_then(|s| sys.operator(s))
        .ok_or_else(|| CliError::UnknownSymbol(format!("{name} in system {}", sys.name())))
}

fn stage(poset: &ContextPoset, id: &str) -> Result<usize, CliError> {
    poset.parse_id(id).ok_or_else(|| CliError::UnknownSymbol(format!("context {id}")))
}

#[derive(Serialize)]
struct ContextsOut<'a> {
    system: &'a str,
    dim: usize,
    count: usize,
    #[serde(flatten)]
    poset: PosetExport,
}

fn contexts(cli: &Cli, args: &SystemArgs, dot: Option<&Path>) -> Result<(), CliError> {
    let sys = load_system(&args.system)?;
    let poset = generated_poset(&sys, !args.no_trivial)?;
    spectral_space(poset.clone())?;
    let rows: Vec<Vec<String>> = (0..poset.len())
        .map(|i| {
            let below = poset.down_set(i).len();
            vec![poset.id(i), poset.context(i).rank_signature(), below.to_string()]
        })
        .collect();
    let text = format!(
        "system {}: {} contexts, {} covering pairs\n{}",
        sys.name(),
        poset.len(),
        poset.covering_pairs().len(),
        table(&["id", "ranks", "below"], &rows)
    );
    let out = ContextsOut {
        system: sys.name(),
        dim: poset.dim(),
        count: poset.len(),
        poset: poset.export(),
    };
    if let Some(path) = dot {
        write_to(Some(path), &poset.to_dot())?;
    }
    emit(cli, &Rendered::new(&out, text).with_dot(poset.to_dot()))
}

#[derive(Serialize)]
struct DasRow {
    id: String,
    rank_signature: String,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct DasOut<'a> {
    system: &'a str,
    op: &'a str,
    contexts: Vec<DasRow>,
}

fn das(cli: &Cli, args: &SystemArgs, op: &str, context: Option<&str>) -> Result<(), CliError> {
    let (sys, space) = system_space(args)?;
    let a = operator(&sys, op)?;
    let poset = space.contexts();
    let stages: Vec<usize> = match context {
        Some(id) => vec![stage(poset, id)?],
        None => (0..poset.len()).collect(),
    };
    let mut rows = Vec::new();
    for v in stages {
        let d = outer_das_operator(a, poset.context(v)).map_err(quantum_error)?;
        rows.push(DasRow {
            id: poset.id(v),
            rank_signature: poset.context(v).rank_signature(),
            values: d.values().iter().map(|&x| clean(x)).collect(),
        });
    }
    let text_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.id.clone(), r.rank_signature.clone(), fmt_values(&r.values)])
        .collect();
    let text = format!("outer daseinisation of {op}\n{}", table(&["id", "ranks", "values"], &text_rows));
    let out = DasOut { system: sys.name(), op, contexts: rows };
    emit(cli, &Rendered::new(&out, text))
}

fn parse_state(s: &str) -> Result<Vec<Complex64>, CliError> {
    let bad = |msg: String| CliError::Usage(format!("--state: {msg}"));
    let raw: Vec<serde_json::Value> = serde_json::from_str(s).map_err(|e| bad(e.to_string()))?;
    raw.iter()
        .map(|v| match v {
            serde_json::Value::Number(n) => Ok(Complex64::new(n.as_f64().unwrap_or(f64::NAN), 0.0)),
            serde_json::Value::Array(p) if p.len() == 2 => match (p[0].as_f64(), p[1].as_f64()) {
                (Some(re), Some(im)) => Ok(Complex64::new(re, im)),
                _ => Err(bad(format!("entry {v} is not [re, im]"))),
            },
            other => Err(bad(format!("entry {other} is neither a number nor [re, im]"))),
        })
        .collect()
}

fn proposition(sys: &System, prop: &str, tol: f64) -> Result<ProjectionOperator, CliError> {
    match prop.split_once('=') {
        Some((name, value)) => {
            let a = operator(sys, name.trim())?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--prop: {value} is not a number")))?;
            Ok(eigendecompose(a)
                .into_iter()
                .find(|e| (e.value - value).abs() <= tol.max(1e-9))
                .map(|e| e.projection)
                .unwrap_or_else(|| ProjectionOperator::zero(a.dim())))
        }
        None => {
            let a = operator(sys, prop)?;
            ProjectionOperator::new(a.matrix().clone())
                .map_err(|_| CliError::Usage(format!("{prop} is not a projection; use {prop}=VALUE")))
        }
    }
}

#[derive(Serialize)]
struct TruthOut {
    at: String,
    members: Vec<String>,
    totally_true: bool,
}

fn truth(cli: &Cli, args: &SystemArgs, state: &str, prop: &str, at: &str) -> Result<(), CliError> {
    let (sys, space) = system_space(args)?;
    let psi = parse_state(state)?;
    if psi.len() != space.dim() {
        return Err(CliError::BadState(format!("state has {} entries, system dimension is {}", psi.len(), space.dim())));
    }
    let p = proposition(&sys, prop, cli.tol)?;
    let poset = space.contexts();
    let v = stage(poset, at)?;
    let sieve = truth_value(&p, &psi, v, &space).map_err(quantum_error)?;
    let members: Vec<String> = sieve.members().iter().map(|&u| poset.id(u)).collect();
    let totally_true = sieve.members().len() == poset.down_set(v).len();
    let mut text = format!("sieve at {}: {{{}}}\n", poset.id(v), members.join(", "));
    if totally_true {
        text += "totally true\n";
    }
    let out = TruthOut { at: poset.id(v), members, totally_true };
    emit(cli, &Rendered::new(&out, text))
}

fn check(cli: &Cli, names: &str, perturb: Option<f64>) -> Result<(), CliError> {
    let mut suites: Vec<Suite> = Vec::new();
    for name in names.split(',').map(str::trim) {
        let parsed = Suite::parse(name).ok_or_else(|| {
            let known: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
            CliError::Usage(format!("unknown suite {name}; known: all, {}", known.join(", ")))
        })?;
        for s in parsed {
            if !suites.contains(&s) {
                suites.push(s);
            }
        }
    }
    let config = SuiteConfig {
        seed: cli.seed,
        tol: cli.tol,
        perturb,
    };
    let report = run_suites(&suites, &config);
    let mut text = String::new();
    for r in &report.results {
        text += &r.line();
        text.push('\n');
        for f in &r.failures {
            text += &format!("    {f}\n");
        }
    }
    let failed = report.results.iter().filter(|r| !r.passed).count();
    emit(cli, &Rendered::new(&report, text))?;
    if failed > 0 {
        return Err(CliError::CheckFailed(format!("{failed} of {} suites failed", report.results.len())));
    }
    Ok(())
}

#[derive(Serialize)]
struct SumOut {
    equal: bool,
    stages_first: usize,
    stages_sum: usize,
    bundle_failures: Vec<String>,
    translated: ArrowTable,
    expected: ArrowTable,
}

fn translate_sum(cli: &Cli, first: &Path, second: &Path, op1: &str, op2: &str) -> Result<(), CliError> {
    let (s1, s2) = (load_system(first)?, load_system(second)?);
    let (a1, a2) = (operator(&s1, op1)?, operator(&s2, op2)?);
    let p1 = generated_poset(&s1, true)?;
    let p2 = generated_poset(&s2, true)?;
    let p_sum = sum_context_poset(&p1, &p2, &[]).map_err(compose_error)?;
    let space1 = Arc::new(spectral_space(p1)?);
    let space_sum = Arc::new(spectral_space(p_sum)?);
    let bundle = SumTranslationBundle::new(space1.clone(), space_sum.clone(), a2.dim()).map_err(compose_error)?;
    let result = sum_translation(a1, a2, &bundle).map_err(compose_error)?;
    let text = format!(
        "sum translation over {} stages of the first summand and {} of the sum: {}\n{}",
        space1.len(),
        space_sum.len(),
        if result.equal { "tables equal" } else { "tables differ" },
        result.bundle_report.failures.iter().map(|f| format!("    {f}\n")).collect::<String>()
    );
    let ok = result.equal && result.bundle_report.is_ok();
    let out = SumOut {
        equal: result.equal,
        stages_first: space1.len(),
        stages_sum: space_sum.len(),
        bundle_failures: result.bundle_report.failures,
        translated: result.translated,
        expected: result.expected,
    };
    emit(cli, &Rendered::new(&out, text))?;
    if !ok {
        return Err(CliError::Invariant("translated arrow differs from the daseinised arrow".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct TensorRow {
    id: String,
    rank_signature: String,
    factor_rank_signature: String,
    residual: f64,
}

#[derive(Serialize)]
struct TensorOut {
    stages: Vec<TensorRow>,
    max_stage_residual: f64,
    max_image_residual: f64,
    phi_epic: bool,
    failures: Vec<String>,
}

fn translate_tensor(
    cli: &Cli,
    first: &Path,
    second: &Path,
    op: &str,
    entangled: Option<&Path>,
) -> Result<(), CliError> {
    let (s1, s2) = (load_system(first)?, load_system(second)?);
    let a1 = operator(&s1, op)?;
    let p1 = generated_poset(&s1, true)?;
    let p2 = generated_poset(&s2, true)?;
    let extra: Vec<AbelianContext> = match entangled {
        Some(path) => {
            let e = load_system(path)?;
            if e.dim() != Some(p1.dim() * p2.dim()) {
                return Err(CliError::Usage(format!("{} must have dimension {}", path.display(), p1.dim() * p2.dim())));
            }
            generated_poset(&e, false)?.contexts().to_vec()
        }
        None => Vec::new(),
    };
    let (n1, n2) = (p1.dim(), p2.dim());
    let pw = composite_context_poset(&p1, &p2, &extra).map_err(compose_error)?;
    let space_w = Arc::new(spectral_space(pw)?);
    let bundle = TensorTranslationBundle::new(space_w.clone(), n1, n2).map_err(compose_error)?;
    let result = tensor_translation(a1, &bundle).map_err(compose_error)?;
    let poset = space_w.contexts();
    let stages: Vec<TensorRow> = (0..poset.len())
        .map(|w| TensorRow {
            id: poset.id(w),
            rank_signature: poset.context(w).rank_signature(),
            factor_rank_signature: bundle.factor(w).rank_signature(),
            residual: result.stage_residuals[w],
        })
        .collect();
    let mut failures = bundle.check().failures;
    failures.extend(result.table_report.failures.iter().cloned());
    let out = TensorOut {
        max_stage_residual: result.max_stage_residual(),
        max_image_residual: result.max_image_residual(),
        phi_epic: bundle.phi_is_epic(),
        failures,
        stages,
    };
    let rows: Vec<Vec<String>> = out
        .stages
        .iter()
        .map(|r| vec![r.id.clone(), r.rank_signature.clone(), r.factor_rank_signature.clone(), format!("{:.3e}", r.residual)])
        .collect();
    let mut text = format!(
        "tensor translation over {} stages: max residual {:.3e}, max residual on ampliated contexts {:.3e}, phi epic {}\n{}",
        poset.len(),
        out.max_stage_residual,
        out.max_image_residual,
        out.phi_epic,
        table(&["id", "ranks", "factor ranks", "residual"], &rows)
    );
    for f in &out.failures {
        text += &format!("    {f}\n");
    }
    let ok = out.max_stage_residual <= cli.tol && out.failures.is_empty();
    emit(cli, &Rendered::new(&out, text))?;
    if !ok {
        return Err(CliError::Invariant(format!(
            "stage residual {:.3e} exceeds {:.1e} or the bundle failed its checks",
            out.max_stage_residual, cli.tol
        )));
    }
    Ok(())
}

fn gap(cli: &Cli, source: Option<(&Path, &str)>, n2: usize, families: &str, budget: usize) -> Result<(), CliError> {
    let a1 = match source {
        Some((path, op)) => {
            let sys = load_system(path)?;
            operator(&sys, op)?.clone()
        }
        None => sigma_z(),
    };
    let families = families
        .split(',')
        .map(str::trim)
        .map(|f| GapFamily::parse(f).ok_or_else(|| CliError::Usage(format!("unknown family {f}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let config = GapSearchConfig {
        n1: a1.dim(),
        n2,
        families,
        budget,
        seed: cli.seed,
        tol: cli.tol,
    };
    let report = gap_search(&a1, &config).map_err(compose_error)?;
    let rows: Vec<Vec<String>> = report
        .witnesses
        .iter()
        .map(|w| vec![w.rank_signature.clone(), format!("{}", clean(w.gap_norm)), format!("{}", clean(w.max_entry_norm))])
        .collect();
    let text = format!(
        "searched {} contexts, {} witnesses\n{}",
        report.contexts_searched,
        report.witnesses.len(),
        table(&["ranks", "gap", "max entry"], &rows)
    );
    emit(cli, &Rendered::new(&report, text))
}

#[derive(Serialize)]
struct ExportOut {
    poset: PosetExport,
    sigma: PresheafExport,
}

fn export(cli: &Cli, args: &SystemArgs) -> Result<(), CliError> {
    let (_, space) = system_space(args)?;
    let poset = space.contexts();
    let sigma = space.sigma().to_export();
    let rows: Vec<Vec<String>> = sigma
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| vec![s.id.clone(), poset.context(i).rank_signature(), s.points.to_string()])
        .collect();
    let text = format!(
        "spectral presheaf: {} stages, {} restriction tables\n{}",
        sigma.stages.len(),
        sigma.restrictions.len(),
        table(&["stage", "ranks", "points"], &rows)
    );
    let out = ExportOut { poset: poset.export(), sigma };
    emit(cli, &Rendered::new(&out, text).with_dot(poset.to_dot()))
}
