use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use jsqa_core::audio::{save_audio, Corpus};
use jsqa_core::jnd::{self, CommandPesq, PesqScorer, SvmConfig, SvmModel};
use jsqa_core::metrics::evaluate_model;
use jsqa_core::model::{count_parameters, init_params, ModelConfig, ModelParams};
use jsqa_core::pairgen::{build_manifest, realize_pair, PairGenConfig, PairManifest};
use jsqa_core::train::{
    finetune, load_checkpoint, load_mos_dataset, pretrain, read_label_table, save_checkpoint, select_checkpoint_epoch,
    split_dataset, Checkpoint, CurveLog, FinetuneConfig, LabeledClip, PretrainConfig, Stage,
};
use jsqa_core::{synth, Corpus32};

use crate::config::RunConfig;
use crate::figures;

/// A failed command, classified for the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, e) = match self {
            Self::Usage(e) => ("usage error", e),
            Self::Data(e) => ("data error", e),
            Self::Runtime(e) => ("runtime error", e),
        };
        write!(f, "{kind}: {e:#}")
    }
}

trait Classify<T> {
    fn usage(self, what: &str) -> Result<T, Failure>;
    fn data(self, what: &str) -> Result<T, Failure>;
    fn runtime(self, what: &str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into().context(what.to_string())))
    }
    fn data(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into().context(what.to_string())))
    }
    fn runtime(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into().context(what.to_string())))
    }
}

fn required<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T, Failure> {
    v.as_ref().ok_or_else(|| Failure::Usage(anyhow!("`{key}` is required for this command")))
}

fn prepare_out(cfg: &RunConfig) -> Result<&Path, Failure> {
    cfg.record(&cfg.out_dir).data("preparing output directory")?;
    Ok(&cfg.out_dir)
}

fn pairgen_config(cfg: &RunConfig) -> PairGenConfig {
    PairGenConfig {
        snr_global_range: (cfg.snr_min, cfg.snr_max),
        window_width_db: cfg.window_db,
        pair_count: cfg.pairs,
        crop_len: cfg.crop_len,
        seed: cfg.seed,
    }
}

fn load_corpora(cfg: &RunConfig) -> Result<(Corpus32, Corpus32), Failure> {
    if cfg.synthetic {
        return Ok(synth::toy_corpora(16, 6, (2 * cfg.crop_len).max(16_000), cfg.seed));
    }
    let clean = Corpus::load_dir(required(&cfg.clean_dir, "clean_dir")?).data("loading clean corpus")?;
    let noise = Corpus::load_dir(required(&cfg.noise_dir, "noise_dir")?).data("loading noise corpus")?;
    for (name, c) in [("clean", &clean), ("noise", &noise)] {
        if !c.rejected().is_empty() {
            log::warn!("{} silent {name} clips skipped", c.rejected().len());
        }
    }
    Ok((clean, noise))
}

fn load_or_build_manifest(cfg: &RunConfig, clean: &Corpus32, noise: &Corpus32) -> Result<PairManifest, Failure> {
    match &cfg.manifest {
        Some(p) => PairManifest::load(p).data(&format!("loading manifest {}", p.display())),
        None => build_manifest(clean, noise, &pairgen_config(cfg)).usage("generating pairs"),
    }
}

fn load_mos(cfg: &RunConfig) -> Result<Vec<LabeledClip<f32>>, Failure> {
    if cfg.synthetic {
        let len = cfg.crop_len + cfg.crop_len / 4;
        return Ok(synth::toy_mos_set(cfg.synthetic_mos, len, cfg.seed)
            .into_iter()
            .map(|(id, clip, mos)| LabeledClip { id, clip, mos })
            .collect());
    }
    let table = read_label_table(required(&cfg.labels, "labels")?).data("reading label table")?;
    let root = cfg.mos_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    load_mos_dataset(&root, &table).data("loading MOS audio")
}

type Split = jsqa_core::train::Split<LabeledClip<f32>>;

fn split(cfg: &RunConfig, data: &[LabeledClip<f32>]) -> Result<Split, Failure> {
    split_dataset(data, (0.8, 0.1, 0.1), cfg.seed).usage("splitting dataset")
}

pub fn gen_pairs(cfg: &RunConfig) -> Result<(), Failure> {
    let out = prepare_out(cfg)?;
    let (clean, noise) = load_corpora(cfg)?;
    let manifest = build_manifest(&clean, &noise, &pairgen_config(cfg)).usage("generating pairs")?;
    manifest.save(&out.join("manifest.jsonl")).data("writing manifest")?;
    if cfg.realize {
        let dir = out.join("pairs");
        std::fs::create_dir_all(&dir).data("creating pair directory")?;
        for r in &manifest.recipes {
            let (a, b) = realize_pair(r, &clean, &noise).data("realizing pair")?;
            save_audio(&a, &dir.join(format!("{:06}_a.wav", r.index))).data("writing pair audio")?;
            save_audio(&b, &dir.join(format!("{:06}_b.wav", r.index))).data("writing pair audio")?;
        }
    }
    let (mean, min, max) = manifest.delta_snr_summary().unwrap_or((0.0, 0.0, 0.0));
    println!("PAIRS count={} delta_snr_mean={mean:.4} delta_snr_min={min:.4} delta_snr_max={max:.4}", manifest.len());
    Ok(())
}

pub fn train_svm(cfg: &RunConfig) -> Result<(), Failure> {
    let out = prepare_out(cfg)?;
    let (features, labels) = jnd::read_labeled_features(required(&cfg.jnd_features, "jnd_features")?).data("reading labeled features")?;
    let svm_cfg = SvmConfig { c: cfg.svm_c, epochs: cfg.svm_epochs, seed: cfg.seed, ..Default::default() };
    let model = jnd::train_svm(&features, &labels, &svm_cfg).usage("training SVM")?;
    model.save(&out.join("svm.json")).data("writing SVM model")?;
    println!(
        "SVM feature={} weights={:?} bias={:.6} accuracy={:.4} degenerate={} n={}",
        model.feature_kind, model.weights, model.bias, model.training.accuracy, model.training.degenerate, model.training.n_examples
    );
    Ok(())
}

pub fn validate_jnd(cfg: &RunConfig) -> Result<(), Failure> {
    let out = prepare_out(cfg)?;
    let model = SvmModel::load(required(&cfg.svm_model, "svm_model")?).data("loading SVM model")?;
    let scorer = match (&cfg.pesq_cmd, model.feature_kind.needs_pesq()) {
        (Some(cmd), true) => Some(CommandPesq::new(cmd.clone()).usage("PESQ command")?),
        (None, true) => {
            return Err(Failure::Usage(anyhow!("the SVM uses {} features; set `pesq_cmd` to a PESQ command", model.feature_kind)))
        }
        _ => None,
    };
    let (clean, noise) = load_corpora(cfg)?;
    let manifest = PairManifest::load(required(&cfg.manifest, "manifest")?).data("loading manifest")?;
    let report = jnd::validate_manifest(&model, &manifest, &clean, &noise, scorer.as_ref().map(|s| s as &dyn PesqScorer))
        .data("validating pairs")?;
    report.save(&out.join("jnd_report.tsv")).data("writing report")?;
    println!("{}", report.summary_line());
    Ok(())
}

fn save_ckpt(ckpt: &Checkpoint<f32>, path: &Path) -> Result<(), jsqa_core::train::TrainError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(ckpt, path)
}

pub fn pretrain_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    let out = prepare_out(cfg)?;
    let model = cfg.model_config().usage("model")?;
    let (clean, noise) = load_corpora(cfg)?;
    let manifest = load_or_build_manifest(cfg, &clean, &noise)?;
    manifest.save(&out.join("manifest.jsonl")).data("writing manifest")?;
    let resume = match &cfg.checkpoint {
        Some(p) => Some(load_checkpoint::<f32>(p).data(&format!("loading checkpoint {}", p.display()))?),
        None => None,
    };
    let pcfg = PretrainConfig {
        batch_pairs: cfg.batch_pairs,
        learning_rate: cfg.learning_rate,
        epochs: cfg.pretrain_epochs,
        max_steps: cfg.steps,
        projection_enabled: cfg.projection_head,
        seed: cfg.seed,
        crop_len: cfg.crop_len,
        ..Default::default()
    };
    let every = cfg.checkpoint_every.max(1);
    let ckpt_dir = out.join("checkpoints");
    let (ckpt, log) = pretrain(&pcfg, &model, &manifest, &clean, &noise, resume, |c, _| {
        if c.epoch % every == 0 {
            save_ckpt(c, &ckpt_dir.join(format!("epoch_{:04}.ckpt", c.epoch)))?;
        }
        Ok(())
    })
    .map_err(classify_train)?;
    let log = continue_curve(&out.join("curve.tsv"), log)?;
    save_ckpt(&ckpt, &out.join("final.ckpt")).data("writing checkpoint")?;
    log.save(&out.join("curve.tsv")).data("writing curve")?;
    let means: Vec<f64> = log.epoch_means().iter().map(|e| e.1).collect();
    if let Some(e) = select_checkpoint_epoch(&means, 5, 0.01) {
        let epoch = log.epoch_means()[e].0 + 1;
        let line = format!("selected_epoch={epoch} checkpoint=checkpoints/epoch_{epoch:04}.ckpt\n");
        std::fs::write(out.join("selected_checkpoint.txt"), &line).data("writing selection")?;
        print!("SELECT {line}");
    }
    println!(
        "PRETRAIN steps={} epochs={} first_loss={:.6} last_loss={:.6} projection_head={}",
        ckpt.step,
        ckpt.epoch,
        log.records.first().map_or(f64::NAN, |r| r.loss),
        log.records.last().map_or(f64::NAN, |r| r.loss),
        cfg.projection_head
    );
    Ok(())
}

/// Prepends the earlier part of a resumed run when its curve is already in the output directory.
fn continue_curve(path: &Path, tail: CurveLog) -> Result<CurveLog, Failure> {
    let first = match tail.records.first() {
        Some(r) if r.step > 1 && path.exists() => r.step,
        _ => return Ok(tail),
    };
    let mut head = CurveLog::load(path).data(&format!("reading curve {}", path.display()))?;
    let keep = head.records.iter().take_while(|r| r.step < first).count();
    head.records.truncate(keep);
    head.seconds.truncate(keep);
    head.extend(&tail).data("joining curves")?;
    Ok(head)
}

fn classify_train(e: jsqa_core::train::TrainError) -> Failure {
    use jsqa_core::train::TrainError as E;
    match e {
        E::InvalidConfig(_) | E::Incompatible(_) => Failure::Usage(e.into()),
        E::Model(_) | E::Diverged(_) => Failure::Runtime(e.into()),
        _ => Failure::Data(e.into()),
    }
}

fn write_split(path: &Path, parts: &[(&str, &[LabeledClip<f32>])]) -> anyhow::Result<()> {
    let mut s = String::from("path\tmos\tpart\n");
    for (name, items) in parts {
        for c in *items {
            s.push_str(&format!("{}\t{}\t{name}\n", c.id, c.mos));
        }
    }
    std::fs::write(path, s).context("writing split")
}

pub fn finetune_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    let out = prepare_out(cfg)?;
    let start = match &cfg.checkpoint {
        Some(p) => load_checkpoint::<f32>(p).data(&format!("loading checkpoint {}", p.display()))?,
        None => Checkpoint::initial(&cfg.model_config().usage("model")?, cfg.seed).map_err(classify_train)?,
    };
    let data = load_mos(cfg)?;
    let (train, val, test) = split(cfg, &data)?;
    write_split(&out.join("split.tsv"), &[("train", &train), ("val", &val), ("test", &test)]).data("split")?;
    let fcfg = FinetuneConfig {
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        epochs: cfg.finetune_epochs,
        max_steps: cfg.steps,
        freeze_encoder: cfg.freeze_encoder,
        seed: cfg.seed,
        crop_len: cfg.crop_len,
        ..Default::default()
    };
    let every = cfg.checkpoint_every.max(1);
    let ckpt_dir = out.join("checkpoints");
    let (ckpt, log) = finetune(&fcfg, start, &train, |c, _| {
        if c.epoch % every == 0 {
            save_ckpt(c, &ckpt_dir.join(format!("epoch_{:04}.ckpt", c.epoch)))?;
        }
        Ok(())
    })
    .map_err(classify_train)?;
    save_ckpt(&ckpt, &out.join("final.ckpt")).data("writing checkpoint")?;
    log.save(&out.join("curve.tsv")).data("writing curve")?;
    println!(
        "FINETUNE steps={} epochs={} train={} last_loss={:.6} freeze_encoder={}",
        ckpt.step,
        ckpt.epoch,
        train.len(),
        log.records.last().map_or(f64::NAN, |r| r.loss),
        cfg.freeze_encoder
    );
    if val.len() >= 2 {
        let report = evaluate_model(&ckpt.params, &val, "val", "final.ckpt").runtime("evaluating")?;
        report.save(&out.join("val_report.tsv")).data("writing report")?;
        println!("{}", report.summary_line());
    }
    Ok(())
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    let out = prepare_out(cfg)?;
    let ckpt_path = required(&cfg.checkpoint, "checkpoint")?;
    let ckpt = load_checkpoint::<f32>(ckpt_path).data(&format!("loading checkpoint {}", ckpt_path.display()))?;
    let data = load_mos(cfg)?;
    let (train, val, test) = split(cfg, &data)?;
    let subset = match cfg.split.as_str() {
        "all" => data,
        "train" => train,
        "val" => val,
        "test" => test,
        other => return Err(Failure::Usage(anyhow!("unknown split {other:?} (train, val, test or all)"))),
    };
    let dataset_id = format!("{}:{}", cfg.labels.as_ref().map_or("synthetic".into(), |p| p.display().to_string()), cfg.split);
    let report = evaluate_model(&ckpt.params, &subset, &dataset_id, &ckpt_path.display().to_string()).data("evaluating")?;
    report.save(&out.join("eval_report.tsv")).data("writing report")?;
    println!("{}", report.summary_line());
    Ok(())
}

fn curve_series(path: &Path) -> Result<(String, Vec<(u64, f64)>), Failure> {
    let log = CurveLog::load(path).data("reading curve")?;
    let name = path.parent().and_then(|p| p.file_name()).map_or("curve".into(), |n| n.to_string_lossy().into_owned());
    Ok((name, log.records.iter().map(|r| (r.step, r.loss)).collect()))
}

pub fn export_figures(cfg: &RunConfig) -> Result<(), Failure> {
    if cfg.manifest.is_none() && cfg.curve.is_none() {
        return Err(Failure::Usage(anyhow!("give `manifest` and/or `curve` (plus optional `curve_b`)")));
    }
    let out = prepare_out(cfg)?;
    if let Some(p) = &cfg.manifest {
        let m = PairManifest::load(p).data(&format!("loading manifest {}", p.display()))?;
        let deltas: Vec<f64> = m.recipes.iter().map(|r| r.delta_snr_db()).collect();
        let hist = figures::histogram(&deltas, cfg.hist_bin_db, m.config().window_width_db);
        std::fs::write(out.join("delta_snr_hist.tsv"), figures::histogram_tsv(&hist)).data("writing histogram")?;
        if cfg.render {
            std::fs::write(out.join("delta_snr_hist.svg"), figures::histogram_svg(&hist, "|dSNR| of generated pairs")).data("writing svg")?;
        }
        println!("HIST pairs={} bins={} max_db={:.3}", deltas.len(), hist.len(), m.config().window_width_db);
    }
    if let Some(a) = &cfg.curve {
        let mut series = vec![curve_series(a)?];
        if let Some(b) = &cfg.curve_b {
            series.push(curve_series(b)?);
        }
        let mut names: Vec<String> = series.iter().map(|s| s.0.clone()).collect();
        if names.len() == 2 && names[0] == names[1] {
            names = vec!["loss_a".into(), "loss_b".into()];
        }
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let data: Vec<Vec<(u64, f64)>> = series.into_iter().map(|s| s.1).collect();
        std::fs::write(out.join("curves.tsv"), figures::overlay_tsv(&names, &data)).data("writing curves")?;
        if cfg.render {
            std::fs::write(out.join("curves.svg"), figures::curves_svg(&names, &data, "pretraining loss")).data("writing svg")?;
        }
        println!("CURVES series={} records={:?}", data.len(), data.iter().map(Vec::len).collect::<Vec<_>>());
    }
    Ok(())
}

fn describe(model: &ModelConfig, params: &ModelParams<f32>, crop_len: usize) -> String {
    let enc = &model.encoder;
    let lens = enc.layer_lengths(crop_len);
    let mut s = format!("encoder: {} conv layers, kernel {}, input {crop_len} samples\n", enc.num_layers, enc.kernel_size);
    s.push_str("layer\tin\tout\tstride\tout_len\tparams\n");
    let mut in_ch = 1;
    for (i, l) in params.encoder.layers.iter().enumerate() {
        let n = l.conv.parameter_count() + l.norm.parameter_count();
        s.push_str(&format!("conv{i}\t{in_ch}\t{}\t{}\t{}\t{n}\n", l.conv.out_channels, l.conv.stride, lens[i]));
        in_ch = l.conv.out_channels;
    }
    for (name, head) in [("projection", &params.projection), ("regressor", &params.regressor)] {
        if let Some(h) = head {
            for (i, l) in h.layers.iter().enumerate() {
                s.push_str(&format!("{name}{i}\t{}\t{}\t-\t-\t{}\n", l.in_dim, l.out_dim, l.parameter_count()));
            }
        }
    }
    s.push_str(&format!(
        "embedding_dim {} (contrastive loss on {} dims)\nreceptive_field {} samples\nparameters {}\n",
        enc.embedding_dim,
        model.contrastive_dim(),
        enc.receptive_field(),
        count_parameters(params)
    ));
    s
}

pub fn inspect(cfg: &RunConfig) -> Result<(), Failure> {
    let (model, params, header) = match &cfg.checkpoint {
        Some(p) => {
            let c = load_checkpoint::<f32>(p).data(&format!("loading checkpoint {}", p.display()))?;
            let header = format!("checkpoint {} stage={} epoch={} step={}\n", p.display(), stage_name(c.stage), c.epoch, c.step);
            (c.params.config.clone(), c.params, header)
        }
        None => {
            let model = cfg.model_config().usage("model")?;
            let params = init_params(&model, 0).usage("model")?;
            (model, params, format!("model {} projection_head={}\n", cfg.model, cfg.projection_head))
        }
    };
    let mut text = header + &describe(&model, &params, cfg.crop_len.max(model.encoder.receptive_field()));
    text.push_str("reference: about 26M trainable parameters reported for the original configuration\n");
    if cfg.model == "base16" && cfg.checkpoint.is_none() {
        text.push_str("note: 16-32-64-128 filters taken literally; the default 64-128-256-512 filters give the stated 512-d embedding\n");
    }
    print!("{text}");
    Ok(())
}

/// Stage name used in log lines.
pub fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Init => "init",
        Stage::Pretrain => "pretrain",
        Stage::Finetune => "finetune",
    }
}
