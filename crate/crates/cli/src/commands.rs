use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;
use stochlod::config::ExperimentConfig;
use stochlod::io;
use stochlod::lod::corrector_decay;
use stochlod::mlp::{load_checkpoint, save_checkpoint, train as train_model, MlpModel};
use stochlod::pipeline::{
    convergence_study, evaluate, fresh_seed, generate_dataset, load_dataset, monte_carlo_mean, pretrain_uniform,
    Discretization, FieldSource, Solver,
};
use stochlod::randfield::{contrast, derive_seed, to_lognormal};

use crate::{CliError, CliResult};

const INIT_SALT: u64 = 0x696e_6974;
const MODEL_FILE: &str = "model.ckpt";

pub struct Context {
    pub cfg: ExperimentConfig,
    pub workers: usize,
    pub deterministic: bool,
}

impl Context {
    /// `run.json`: the subcommand and the resolved configuration.
    pub fn write_run_manifest(&self, dir: &Path, command: &str) -> CliResult<()> {
        io::write_json(
            &dir.join("run.json"),
            &json!({
                "command": command,
                "version": env!("CARGO_PKG_VERSION"),
                "workers": self.workers,
                "deterministic": self.deterministic,
                "config": self.cfg,
            }),
        )?;
        Ok(())
    }

    fn disc(&self) -> CliResult<Discretization> {
        Ok(Discretization::from_config(&self.cfg)?)
    }

    fn source(&self, disc: &Discretization) -> CliResult<FieldSource> {
        Ok(FieldSource::from_class(&self.cfg.coefficient, disc.field)?)
    }
}

fn load_model(path: &Path, disc: &Discretization) -> CliResult<MlpModel> {
    let ck = load_checkpoint(path)?;
    if ck.model.input_dim() != disc.input_len() || ck.model.output_dim() != disc.output_len() {
        return Err(CliError::Core(stochlod::Error::Checkpoint(format!(
            "{} maps {} inputs to {} outputs; the configured patches need {} to {}",
            path.display(),
            ck.model.input_dim(),
            ck.model.output_dim(),
            disc.input_len(),
            disc.output_len()
        ))));
    }
    Ok(ck.model)
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Number of realizations.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
}

pub fn sample(ctx: &Context, a: &SampleArgs, dir: &Path) -> CliResult<()> {
    let disc = ctx.disc()?;
    let source = ctx.source(&disc)?;
    let seed = fresh_seed(ctx.cfg.seed);
    let mut rows = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let (kappa, z) = source.sample(seed, i as u64)?;
        let coef = to_lognormal(&z)?;
        let meta = json!({ "index": i, "seed": seed, "kappa": kappa });
        z.save(&dir.join(format!("z_{i}")), meta.clone())?;
        coef.save(&dir.join(format!("a_{i}")), meta)?;
        rows.push(vec![i as f64, kappa.unwrap_or(f64::NAN), contrast(&coef)?]);
    }
    io::write_csv(&dir.join("contrast.csv"), &["index", "kappa", "contrast"], &rows)?;
    Ok(())
}

pub fn gen_dataset(ctx: &Context, dir: &Path) -> CliResult<()> {
    let m = generate_dataset(&ctx.cfg, dir)?;
    let (tr, va, te) = m.total_split();
    eprintln!("{} pairs; realizations train/val/test = {tr}/{va}/{te}", m.num_pairs);
    Ok(())
}

pub fn pretrain(ctx: &Context, dir: &Path) -> CliResult<()> {
    let out = pretrain_uniform(&ctx.cfg)?;
    out.trace.write_csv(&dir.join("trace.csv"))?;
    save_checkpoint(
        &dir.join(MODEL_FILE),
        &out.model,
        None,
        json!({
            "stage": "pretrain",
            "warm_start": null,
            "split": out.split,
            "final_train_loss": out.trace.final_train(),
            "final_val_loss": out.trace.final_val(),
            "config": ctx.cfg,
        }),
    )?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (default: `<out>/dataset`).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Warm-start checkpoint; overrides the configured one.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    /// Ignore any warm start and initialize randomly.
    #[arg(long)]
    pub from_scratch: bool,
}

pub fn train(ctx: &Context, a: &TrainArgs, root: &Path, dir: &Path) -> CliResult<()> {
    let data_dir = a.dataset.clone().unwrap_or_else(|| root.join("dataset"));
    let data = load_dataset(&data_dir)?;
    let widths = ctx.cfg.widths();
    if data.manifest.input_len != widths[0] || data.manifest.output_len != *widths.last().expect("validated") {
        return Err(CliError::Usage(format!(
            "dataset pairs are {} -> {}, architecture is {widths:?}",
            data.manifest.input_len, data.manifest.output_len
        )));
    }
    let warm = if a.from_scratch {
        None
    } else {
        a.warm_start.clone().or_else(|| ctx.cfg.warm_start.clone())
    };
    let mut model = match &warm {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            ck.expect_widths(&widths)?;
            ck.model
        }
        None => MlpModel::he_uniform(&widths, derive_seed(ctx.cfg.seed, INIT_SALT))?,
    };
    let trace = train_model(&mut model, &data.train, &data.val, &ctx.cfg.training)?;
    trace.write_csv(&dir.join("trace.csv"))?;
    let test_loss = if data.test.is_empty() {
        None
    } else {
        Some(model.loss(data.test.as_batch())?)
    };
    let summary = json!({
        "stage": "train",
        "warm_start": warm,
        "dataset": data_dir,
        "initial_train_loss": trace.initial_train,
        "initial_val_loss": trace.initial_val,
        "final_train_loss": trace.final_train(),
        "final_val_loss": trace.final_val(),
        "test_loss": test_loss,
        "config": ctx.cfg,
    });
    io::write_json(&dir.join("summary.json"), &summary)?;
    save_checkpoint(&dir.join(MODEL_FILE), &model, None, summary)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Network checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Number of fresh realizations.
    #[arg(long, default_value_t = 1)]
    pub fresh_seeds: usize,
    /// Dataset whose test split gives the test loss.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Skip the fine FEM reference in the cross-sections.
    #[arg(long)]
    pub no_fem: bool,
}

pub fn eval(ctx: &Context, a: &EvalArgs, _root: &Path, dir: &Path) -> CliResult<()> {
    let disc = ctx.disc()?;
    let model = load_model(&a.model, &disc)?;
    let source = ctx.source(&disc)?;
    let mut report = evaluate(
        &model,
        &disc,
        &source,
        ctx.cfg.source,
        fresh_seed(ctx.cfg.seed),
        a.fresh_seeds,
        !a.no_fem,
    )?;
    if let Some(d) = &a.dataset {
        let data = load_dataset(d)?;
        if !data.test.is_empty() {
            report.test_loss = Some(model.loss(data.test.as_batch())?);
        }
    }
    report.write_csv(&dir.join("report.csv"))?;
    io::write_json(&dir.join("report.json"), &report)?;
    report.cross_sections[0].write_csv(&dir.join("cross_section_x1.csv"))?;
    report.cross_sections[1].write_csv(&dir.join("cross_section_x2.csv"))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Comma-separated subset of fem, pglod, nnlod.
    #[arg(long, value_delimiter = ',', default_value = "fem,pglod")]
    pub solvers: Vec<Solver>,
    /// Network checkpoint, required for nnlod.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

pub fn mc(ctx: &Context, a: &McArgs, dir: &Path) -> CliResult<()> {
    let disc = ctx.disc()?;
    let source = ctx.source(&disc)?;
    let model = a.model.as_deref().map(|p| load_model(p, &disc)).transpose()?;
    if a.solvers.contains(&Solver::Nnlod) && model.is_none() {
        return Err(CliError::Usage("--solvers nnlod needs --model".into()));
    }
    let res = monte_carlo_mean(
        &disc,
        &source,
        ctx.cfg.source,
        &a.solvers,
        model.as_ref().map(|m| m as &dyn stochlod::pipeline::LocalModel),
        a.samples,
        ctx.cfg.seed,
    )?;
    res.write(dir)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    /// Coarse levels p (H = 2^-p, patch order p), comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub levels: Vec<u32>,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
}

pub fn convergence(ctx: &Context, a: &ConvergenceArgs, dir: &Path) -> CliResult<()> {
    let levels: Vec<(f64, usize)> = a.levels.iter().map(|&p| (2f64.powi(-(p as i32)), p as usize)).collect();
    let rows = convergence_study(
        &levels,
        ctx.cfg.eps,
        ctx.cfg.fine_h,
        &ctx.cfg.coefficient,
        ctx.cfg.source,
        a.samples,
        ctx.cfg.seed,
    )?;
    let csv: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.coarse_h, r.ell as f64, r.l2_error, r.relative]).collect();
    io::write_csv(&dir.join("convergence.csv"), &["coarse_h", "ell", "l2_error", "relative"], &csv)?;
    io::write_json(&dir.join("convergence.json"), &rows)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    /// Coarse element (default: the one at the domain center).
    #[arg(long)]
    pub element: Option<usize>,
    /// Fresh realization index.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
}

pub fn decay(ctx: &Context, a: &DecayArgs, dir: &Path) -> CliResult<()> {
    let disc = ctx.disc()?;
    let source = ctx.source(&disc)?;
    let (_, z) = source.sample(fresh_seed(ctx.cfg.seed), a.index)?;
    let coef = disc.coefficient(&to_lognormal(&z)?)?;
    let n = disc.coarse.cells_per_axis();
    let t = a.element.unwrap_or_else(|| disc.coarse.element_index([n / 2, n / 2]));
    if t >= disc.coarse.num_elements() {
        return Err(CliError::Usage(format!("element {t} out of range (0..{})", disc.coarse.num_elements())));
    }
    let rows = corrector_decay(disc.interpolator(), &coef, t)?;
    let csv: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.ell as f64, r.error, r.relative]).collect();
    io::write_csv(&dir.join("decay.csv"), &["ell", "error", "relative"], &csv)?;
    io::write_json(&dir.join("decay.json"), &json!({ "element": t, "rows": rows }))?;
    Ok(())
}
