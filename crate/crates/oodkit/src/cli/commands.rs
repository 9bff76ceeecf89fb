use std::path::Path;

use crate::analysis;
use crate::dumpio::{
    self, ExperimentConfig, KvMap,
};
use crate::enhancers::{
    self, EnhancerKind, EnhancerSpec, DEFAULT_ASH_PERCENTILE, DEFAULT_DICE_SPARSITY,
    DEFAULT_REACT_PERCENTILE, DEFAULT_SCALE_PERCENTILE,
};
use crate::error::{OodError, Result};
use crate::metrics;
use crate::numeric::l2_norm;
use crate::scorers::{Scorer, ScorerKind, ScorerSpec};
use crate::synthlab::{sample_class_clouds, sample_rect_gauss, RectGaussSpec};
use crate::types::{ActivationSet, DistributionTag, LinearHead, ScoreSet};

/// Writes result text to the out path, or stdout when absent.
fn emit(out: Option<&str>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn file_stem(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

pub fn cmd_profile(id: &str, out: &str, allow_any_tag: bool) -> Result<()> {
    let set = dumpio::read_activation_set(Path::new(id))?;
    if !allow_any_tag && set.tag() != Some(DistributionTag::IdTrain) {
        return Err(OodError::BadParameter(format!(
            "input dump is tagged {:?}, expected id_train (pass --allow-any-tag to override)",
            set.tag().map(DistributionTag::name)
        )));
    }
    let profile = enhancers::build_profile(&set)?;
    dumpio::write_profile(&profile, Path::new(out))?;
    let mu = profile.mu();
    println!(
        "profile: D={} N={} mu_min={} mu_max={}",
        profile.dim(),
        profile.count(),
        mu[0],
        mu[mu.len() - 1]
    );
    Ok(())
}

/// Resolves the enhancer named by the config into a calibrated spec.
pub(crate) fn build_enhancer(
    cfg: &ExperimentConfig,
    profile_flag: Option<&str>,
    head: &LinearHead,
) -> Result<EnhancerSpec> {
    let kind = EnhancerKind::from_name(&cfg.enhancer)?;
    let profile_path = profile_flag.or(cfg.paths.profile.as_deref());
    let calibration = || -> Result<ActivationSet> {
        let path = cfg.paths.calibration.as_deref().ok_or_else(|| {
            OodError::BadConfig {
                key: "calibration".into(),
                reason: format!(
                    "enhancer `{}` needs a calibration dump or an explicit parameter",
                    cfg.enhancer
                ),
            }
        })?;
        dumpio::read_activation_set(Path::new(path))
    };
    let load_profile = || -> Result<crate::types::ReferenceProfile> {
        let path = profile_path.ok_or_else(|| OodError::BadConfig {
            key: "profile".into(),
            reason: format!("enhancer `{}` needs a profile dump", cfg.enhancer),
        })?;
        dumpio::read_profile(Path::new(path))
    };

    Ok(match kind {
        EnhancerKind::Identity => EnhancerSpec::identity(),
        EnhancerKind::Ras => EnhancerSpec::ras(load_profile()?),
        EnhancerKind::RasInhibit => EnhancerSpec::ras_inhibit(load_profile()?),
        EnhancerKind::RasExcite => EnhancerSpec::ras_excite(load_profile()?),
        EnhancerKind::React => {
            let c = match cfg.react_threshold_c {
                Some(c) => c,
                None => enhancers::calibrate_react(
                    &calibration()?,
                    cfg.percentile_p.unwrap_or(DEFAULT_REACT_PERCENTILE),
                )?,
            };
            EnhancerSpec::react(c)
        }
        EnhancerKind::AshP => {
            EnhancerSpec::ash_p(cfg.percentile_p.unwrap_or(DEFAULT_ASH_PERCENTILE))
        }
        EnhancerKind::AshB => {
            EnhancerSpec::ash_b(cfg.percentile_p.unwrap_or(DEFAULT_ASH_PERCENTILE))
        }
        EnhancerKind::AshS => {
            EnhancerSpec::ash_s(cfg.percentile_p.unwrap_or(DEFAULT_ASH_PERCENTILE))
        }
        EnhancerKind::Scale => {
            EnhancerSpec::scale(cfg.percentile_p.unwrap_or(DEFAULT_SCALE_PERCENTILE))
        }
        EnhancerKind::Dice => {
            let mask = enhancers::calibrate_dice(
                &calibration()?,
                head,
                cfg.dice_sparsity_p.unwrap_or(DEFAULT_DICE_SPARSITY),
            )?;
            EnhancerSpec::dice(mask)
        }
        EnhancerKind::L2Norm => {
            let target = match cfg.l2_target {
                Some(t) => t,
                None => {
                    // mean ID l2 norm over the calibration dump
                    let cal = calibration()?;
                    let total: f64 = cal.rows().map(l2_norm).sum();
                    total / cal.n_samples() as f64
                }
            };
            EnhancerSpec::l2norm(target)
        }
    })
}

pub(crate) fn build_scorer(cfg: &ExperimentConfig, head: &LinearHead) -> Result<Scorer> {
    let kind = ScorerKind::from_name(&cfg.scorer)?;
    let mut spec = ScorerSpec::new(kind);
    if let Some(t) = cfg.temperature {
        spec.temperature = t;
    }
    if let Some(g) = cfg.gen_gamma {
        spec.gen_gamma = g;
    }
    spec.gen_top_m = cfg.gen_top_m;
    if let Some(r) = cfg.mds_ridge {
        spec.mds_ridge = r;
    }
    spec.vim_subspace_dim = cfg.vim_subspace_dim;

    let calibration = if kind.needs_fit() {
        let path = cfg.paths.calibration.as_deref().ok_or_else(|| {
            OodError::BadConfig {
                key: "calibration".into(),
                reason: format!("scorer `{}` needs a labeled calibration dump", cfg.scorer),
            }
        })?;
        Some(dumpio::read_activation_set(Path::new(path))?)
    } else {
        None
    };
    Scorer::fit(&spec, calibration.as_ref(), head)
}

fn fmt_metric_row(method: &str, dataset: &str, auroc: f64, fpr95: f64, aupr: f64) -> String {
    format!("{method},{dataset},{auroc},{fpr95},{aupr}\n")
}

pub fn cmd_eval(
    id: &str,
    ood: &[String],
    head_path: &str,
    config_path: &str,
    profile_flag: Option<&str>,
    out: Option<&str>,
    markdown: bool,
) -> Result<()> {
    let cfg = ExperimentConfig::parse(&std::fs::read_to_string(config_path)?)?;
    let head = dumpio::read_linear_head(Path::new(head_path))?;
    let enhancer = build_enhancer(&cfg, profile_flag, &head)?;
    let scorer = build_scorer(&cfg, &head)?;
    let method = format!("{}+{}", enhancer.name(), scorer.name());

    // the flag position defines the role, so a dump can serve as its own
    // OoD side for self-comparison checks
    let id_set = dumpio::read_activation_set(Path::new(id))?.with_tag(DistributionTag::IdTest);
    let id_scores = crate::scorers::score_set(&id_set, &head, &enhancer, &scorer)?;

    let mut csv = String::from("method,dataset,auroc,fpr95,aupr\n");
    let mut rows = Vec::new();
    let mut sums = (0.0, 0.0, 0.0);
    for ood_path in ood {
        let ood_set =
            dumpio::read_activation_set(Path::new(ood_path))?.with_tag(DistributionTag::Ood);
        let ood_scores = crate::scorers::score_set(&ood_set, &head, &enhancer, &scorer)?;
        let combined = ScoreSet::concat(&[&id_scores, &ood_scores])?;
        let auroc = metrics::auroc(&combined)?;
        let fpr95 = metrics::fpr_at_tpr(&combined, 0.95)?;
        let aupr = metrics::aupr(&combined)?;
        sums = (sums.0 + auroc, sums.1 + fpr95, sums.2 + aupr);
        let dataset = file_stem(ood_path);
        csv.push_str(&fmt_metric_row(&method, &dataset, auroc, fpr95, aupr));
        rows.push((dataset, auroc, fpr95, aupr));
    }
    let n = ood.len() as f64;
    let avg = (sums.0 / n, sums.1 / n, sums.2 / n);
    csv.push_str(&fmt_metric_row(&method, "average", avg.0, avg.1, avg.2));
    rows.push(("average".into(), avg.0, avg.1, avg.2));

    emit(out, &csv)?;
    if markdown {
        let mut table = String::new();
        table.push_str("| method | dataset | auroc | fpr95 | aupr |\n");
        table.push_str("|---|---|---|---|---|\n");
        for (dataset, auroc, fpr95, aupr) in &rows {
            table.push_str(&format!(
                "| {method} | {dataset} | {auroc:.4} | {fpr95:.4} | {aupr:.4} |\n"
            ));
        }
        eprint!("{table}");
    }
    Ok(())
}

/// Parses an inclusive start:stop:step grid.
pub(crate) fn parse_grid(grid: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = grid.split(':').collect();
    if parts.len() != 3 {
        return Err(OodError::BadParameter(format!(
            "grid must be start:stop:step, got `{grid}`"
        )));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| OodError::BadParameter(format!("bad grid number `{s}`")))
    };
    let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if step <= 0.0 || step.is_nan() || stop < start {
        return Err(OodError::BadParameter(format!(
            "grid must satisfy start <= stop and step > 0, got `{grid}`"
        )));
    }
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let p = start + f64::from(k) * step;
        if p > stop + 1e-9 {
            break;
        }
        out.push(p);
        k += 1;
    }
    Ok(out)
}

pub fn cmd_gamma(id: &str, ood: &str, grid: &str, pooled: bool, out: Option<&str>) -> Result<()> {
    let id_set = dumpio::read_activation_set(Path::new(id))?;
    let ood_set = dumpio::read_activation_set(Path::new(ood))?;
    let grid = parse_grid(grid)?;

    let mut csv = String::from("p,gamma,stderr\n");
    let mut excluded = (0usize, 0usize);
    let estimator = if pooled {
        analysis::GammaEstimator::PooledSums
    } else {
        analysis::GammaEstimator::PerSample
    };
    for &p in &grid {
        let est = analysis::gamma_at_with(&id_set, &ood_set, p, estimator)?;
        excluded = (
            excluded.0.max(est.excluded_id.len()),
            excluded.1.max(est.excluded_ood.len()),
        );
        csv.push_str(&format!(
            "{},{},{}\n",
            p,
            est.gamma,
            est.stderr.map(|s| s.to_string()).unwrap_or_default()
        ));
    }
    emit(out, &csv)?;
    eprintln!(
        "rectified_id={} rectified_ood={} excluded_id={} excluded_ood={}",
        analysis::is_rectified(&id_set),
        analysis::is_rectified(&ood_set),
        excluded.0,
        excluded.1
    );
    Ok(())
}

pub fn cmd_residuals(ood: &str, profile: &str, out: Option<&str>) -> Result<()> {
    let ood_set = dumpio::read_activation_set(Path::new(ood))?;
    let profile = dumpio::read_profile(Path::new(profile))?;
    let res = analysis::residual_profile(&ood_set, &profile)?;
    let mut csv = String::from("rank,ood_mean,residual\n");
    for (i, &rank) in res.ranks.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{}\n",
            rank, res.ood_mean_ranked[i], res.residual[i]
        ));
    }
    emit(out, &csv)?;
    Ok(())
}

pub fn cmd_synth(spec_path: &str, out: &str, seed_override: Option<u64>) -> Result<()> {
    let kv = KvMap::parse(&std::fs::read_to_string(spec_path)?)?;
    let kind = kv.get("kind").ok_or_else(|| OodError::BadConfig {
        key: "kind".into(),
        reason: "synth spec needs kind=rect_gauss or kind=class_clouds".into(),
    })?;
    let seed = seed_override
        .or(kv.get_u64("seed")?)
        .ok_or_else(|| OodError::BadConfig {
            key: "seed".into(),
            reason: "seeds are always explicit; set seed= or pass --seed".into(),
        })?;
    let tag = match kv.get("tag") {
        Some(t) => Some(DistributionTag::parse(t)?),
        None => None,
    };
    let require = |key: &str| -> Result<f64> {
        kv.get_f64(key)?.ok_or_else(|| OodError::BadConfig {
            key: key.into(),
            reason: "required by this generator".into(),
        })
    };
    let require_usize = |key: &str| -> Result<usize> {
        kv.get_usize(key)?.ok_or_else(|| OodError::BadConfig {
            key: key.into(),
            reason: "required by this generator".into(),
        })
    };

    match kind {
        "rect_gauss" => {
            let spec = RectGaussSpec {
                mu: require("mu")?,
                sigma: require("sigma")?,
                dim: require_usize("dim")?,
                n: require_usize("n")?,
                rectified: kv.get_bool("rectified")?.unwrap_or(true),
                seed,
            };
            let mut set = sample_rect_gauss(&spec)?;
            if let Some(tag) = tag {
                set = set.with_tag(tag);
            }
            dumpio::write_activation_set(&set, Path::new(out))?;
            eprintln!("wrote {} x {} rect_gauss dump to {out}", set.n_samples(), set.n_dims());
        }
        "class_clouds" => {
            let (set, head) = sample_class_clouds(
                require_usize("classes")?,
                require_usize("dim")?,
                require_usize("n_per_class")?,
                require("mean_scale")?,
                seed,
            )?;
            let set = match tag {
                Some(tag) => set.with_tag(tag),
                None => set,
            };
            dumpio::write_activation_set(&set, Path::new(out))?;
            if let Some(head_out) = kv.get("head_out") {
                dumpio::write_linear_head(&head, Path::new(head_out))?;
            }
            eprintln!(
                "wrote {} x {} class_clouds dump to {out}",
                set.n_samples(),
                set.n_dims()
            );
        }
        other => {
            return Err(OodError::BadConfig {
                key: "kind".into(),
                reason: format!("unknown generator `{other}`"),
            })
        }
    }
    Ok(())
}

pub fn cmd_accuracy(
    id: &str,
    head_path: &str,
    config_path: &str,
    profile_flag: Option<&str>,
    out: Option<&str>,
) -> Result<()> {
    let cfg = ExperimentConfig::parse(&std::fs::read_to_string(config_path)?)?;
    let head = dumpio::read_linear_head(Path::new(head_path))?;
    let enhancer = build_enhancer(&cfg, profile_flag, &head)?;
    let set = dumpio::read_activation_set(Path::new(id))?;
    let acc = metrics::accuracy_delta(&set, &head, &enhancer)?;
    let csv = format!(
        "enhancer,acc_base,acc_enhanced,delta\n{},{},{},{}\n",
        enhancer.name(),
        acc.acc_base,
        acc.acc_enhanced,
        acc.delta
    );
    emit(out, &csv)?;
    Ok(())
}
