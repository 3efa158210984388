use std::fs::OpenOptions;
use std::path::Path;

use hardnet::data::{
    export_descriptors, generate_synthetic, import_descriptors, load_brown, write_brown, PatchDataset, SyntheticConfig,
};
use hardnet::eval::{
    aligned_verification, correspondence_split, describe_dataset, fdr_at_recall, fpr_at_recall, gather_rows,
    matching_map, model_fpr95, model_matching_map, retrieval_curve, verification_rates, EvalReport, DEFAULT_RECALL,
};
use hardnet::kv::{parse_list, KeyValues};
use hardnet::mining::{LossConfig, LossKind, SamplingStrategy};
use hardnet::model::{load_model, save_model, ArchitectureSpec, DescriptorModel};
use hardnet::tensor::Tensor;
use hardnet::train::{train, TrainConfig, TrainOptions};
use hardnet::{Error, Result};

use crate::args::{AblateArgs, DescribeArgs, EvalArgs, SweepArgs, SynthArgs, TrainArgs, TrainFlags};
use crate::manifest::{sidecar, Manifest};

fn usage(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

fn normalize(s: &str) -> String {
    s.trim().to_ascii_lowercase().replace('-', "_")
}

pub fn parse_sampling(s: &str) -> Result<SamplingStrategy> {
    match normalize(s).as_str() {
        "hardest" | "hardest_in_batch" => Ok(SamplingStrategy::HardestInBatch),
        "random" | "random_in_batch" => Ok(SamplingStrategy::RandomInBatch),
        "epoch" | "epoch_hard" | "epoch_hard_mining" => Ok(SamplingStrategy::EpochHardMining),
        _ => Err(usage("sampling", format!("unknown sampling `{s}`"))),
    }
}

/// `name` or `name@margin`.
pub fn parse_loss(s: &str) -> Result<(LossKind, Option<f64>)> {
    let s = normalize(s);
    let (name, margin) = match s.split_once('@') {
        Some((n, m)) => (
            n,
            Some(
                m.parse::<f64>()
                    .map_err(|_| usage("loss", format!("bad margin in `{s}`")))?,
            ),
        ),
        None => (s.as_str(), None),
    };
    let kind = match name {
        "triplet" | "triplet_margin" => LossKind::TripletMargin,
        "contrastive" => LossKind::Contrastive,
        "softmin" => LossKind::Softmin,
        _ => return Err(usage("loss", format!("unknown loss `{name}`"))),
    };
    Ok((kind, margin))
}

fn read_kv(path: Option<&Path>) -> Result<KeyValues> {
    match path {
        Some(p) => KeyValues::parse(&std::fs::read_to_string(p)?),
        None => Ok(KeyValues::new()),
    }
}

/// Config file, then flags, validated together.
fn resolve_config(flags: &TrainFlags, overrides: &[(&str, Option<String>)]) -> Result<TrainConfig> {
    let mut kv = read_kv(flags.config.as_deref())?;
    let common = [
        ("preset", flags.preset.clone()),
        ("learning_rate", flags.learning_rate.map(|v| v.to_string())),
        ("margin", flags.margin.map(|v| v.to_string())),
        ("cpr_weight", flags.cpr_weight.map(|v| v.to_string())),
        ("augment", flags.augment.then(|| "true".to_string())),
    ];
    for (k, v) in common.iter().chain(overrides) {
        if let Some(v) = v {
            kv.set(k, v);
        }
    }
    TrainConfig::from_kv(&kv)
}

fn architecture(flag: &str, dropout: f64) -> Result<ArchitectureSpec> {
    let spec = if flag == "hardnet" {
        ArchitectureSpec::hardnet(dropout)
    } else {
        ArchitectureSpec::parse(&std::fs::read_to_string(flag)?)?.with_dropout_rate(dropout)
    };
    spec.validate()?;
    Ok(spec)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = SyntheticConfig::from_kv(&read_kv(args.config.as_deref())?)?;
    if let Some(n) = args.points {
        cfg.num_points = n;
        cfg.validate()?;
    }
    let ds = generate_synthetic(&cfg, args.seed)?;
    write_brown(&ds, &args.out)?;
    let mut m = Manifest::new("synth");
    m.extend("synth.", &cfg.to_kv());
    m.set("seed", args.seed);
    if let Some(c) = &args.config {
        m.input("config", c)?;
    }
    m.artifact("dataset", &args.out)?;
    m.write(&args.out.join("manifest.txt"))?;
    println!(
        "wrote {} patches of {} points to {}",
        ds.len(),
        ds.num_points(),
        args.out.display()
    );
    Ok(())
}

fn some<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let loss = args.loss.as_deref().map(parse_loss).transpose()?;
    let sampling = args.sampling.as_deref().map(parse_sampling).transpose()?;
    let mut overrides = vec![
        ("epochs", some(&args.epochs)),
        ("batch_size", some(&args.batch_size)),
        ("seed", some(&args.seed)),
        ("loss", loss.map(|(k, _)| k.to_string())),
        ("sampling", sampling.map(|s| s.to_string())),
    ];
    if let Some((_, Some(m))) = loss {
        overrides.push(("margin", Some(m.to_string())));
    }
    let config = resolve_config(&args.flags, &overrides)?;
    let spec = architecture(&args.flags.arch, config.dropout_rate)?;
    let data = load_brown(&args.data)?;
    let (train_set, validation) = match args.validation_points {
        Some(k) => {
            let (t, v) = data.split_points(k, config.seed)?;
            (t, Some(v))
        }
        None => (data, None),
    };
    let model: DescriptorModel<f32> = config.init_model(spec)?;
    let log_path = args.log.clone().unwrap_or_else(|| sidecar(&args.out_model, "log"));
    let mut log = OpenOptions::new().create(true).append(true).open(&log_path)?;
    let outcome = train(
        model,
        &train_set,
        &config,
        TrainOptions {
            validation: validation.as_ref(),
            validation_seed: config.seed,
            run_log: Some(&mut log),
        },
    )?;
    save_model(&outcome.model, &args.out_model)?;

    let mut m = Manifest::new("train");
    m.extend("train.", &config.to_kv());
    m.set("arch", &args.flags.arch);
    m.input("data", &args.data)?;
    if let Some(c) = &args.flags.config {
        m.input("config", c)?;
    }
    m.artifact("model", &args.out_model)?;
    m.artifact("log", &log_path)?;
    if let Some(best) = &outcome.best {
        let path = sidecar(&args.out_model, "best");
        save_model(&best.model, &path)?;
        m.set("best.epoch", best.epoch);
        m.set("best.fpr95", best.fpr95);
        m.artifact("best_model", &path)?;
    }
    if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
        m.set("first_epoch_loss", first.mean_loss);
        m.set("final_epoch_loss", last.mean_loss);
        println!(
            "epoch 1 loss {:.4}, epoch {} loss {:.4}",
            first.mean_loss, last.epoch, last.mean_loss
        );
    }
    m.write(&sidecar(&args.out_model, "manifest"))?;
    println!("saved {}", args.out_model.display());
    Ok(())
}

pub fn describe(args: &DescribeArgs) -> Result<()> {
    let model: DescriptorModel<f32> = load_model(&args.model)?;
    let data = load_brown(&args.data)?;
    let descs = describe_dataset(&model, &data)?;
    export_descriptors(&descs, &args.out)?;
    let mut m = Manifest::new("describe");
    m.input("model", &args.model)?;
    m.input("data", &args.data)?;
    m.artifact("descriptors", &args.out)?;
    m.write(&sidecar(&args.out, "manifest"))?;
    println!(
        "wrote {} descriptors of dimension {}",
        descs.shape()[0],
        descs.shape()[1]
    );
    Ok(())
}

enum EvalInput {
    Files(Tensor<f32>, Tensor<f32>),
    Model(PatchDataset, Tensor<f32>),
}

impl EvalInput {
    /// Row-aligned matching descriptors.
    fn aligned(&self) -> Result<(Tensor<f32>, Tensor<f32>)> {
        match self {
            Self::Files(a, b) => Ok((a.clone(), b.clone())),
            Self::Model(data, descs) => {
                let (ia, ib) = correspondence_split(data);
                Ok((gather_rows(descs, &ia)?, gather_rows(descs, &ib)?))
            }
        }
    }
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let mut m = Manifest::new("eval");
    let input = match (&args.desc_a, &args.desc_b, &args.data, &args.model) {
        (Some(a), Some(b), None, None) => {
            m.input("desc_a", a)?;
            m.input("desc_b", b)?;
            let (a, b) = (import_descriptors(a)?, import_descriptors(b)?);
            if a.shape() != b.shape() {
                return Err(usage(
                    "desc_b",
                    format!("descriptor sets differ in shape: {:?} vs {:?}", a.shape(), b.shape()),
                ));
            }
            EvalInput::Files(a, b)
        }
        (None, None, Some(d), Some(mp)) => {
            m.input("data", d)?;
            m.input("model", mp)?;
            let model: DescriptorModel<f32> = load_model(mp)?;
            let data = load_brown(d)?;
            let descs = describe_dataset(&model, &data)?;
            EvalInput::Model(data, descs)
        }
        _ => {
            return Err(usage(
                "task",
                "give either --desc-a and --desc-b, or --data and --model",
            ))
        }
    };
    let mut report = EvalReport::default();
    match normalize(&args.task).as_str() {
        "verify" => {
            let (fpr, fdr) = match &input {
                EvalInput::Model(data, descs) => verification_rates(descs, data, args.seed)?,
                EvalInput::Files(a, b) => {
                    let s = aligned_verification(a, b, args.seed)?;
                    (fpr_at_recall(&s, DEFAULT_RECALL)?, fdr_at_recall(&s, DEFAULT_RECALL)?)
                }
            };
            report.fpr95 = Some(fpr);
            report.fdr95 = Some(fdr);
        }
        "match" => {
            let (a, b) = input.aligned()?;
            report.matching_map = Some(matching_map(&a, &b)?);
        }
        "retrieve" => {
            let list = args
                .distractors
                .as_deref()
                .ok_or_else(|| usage("distractors", "retrieval needs --distractors"))?;
            let counts: Vec<usize> = parse_list("distractors", list)?;
            let most = counts
                .iter()
                .copied()
                .max()
                .ok_or_else(|| usage("distractors", "empty list"))?;
            let (a, b) = input.aligned()?;
            let rows = a.shape()[0];
            if most >= rows {
                return Err(usage(
                    "distractors",
                    format!("{most} distractors leave no queries among {rows} descriptor pairs"),
                ));
            }
            // the last `most` database rows serve as distractors for the rest
            let q = rows - most;
            report.retrieval = retrieval_curve(
                &a.slice_leading(0, q)?,
                &b.slice_leading(0, q)?,
                &b.slice_leading(q, rows)?,
                &counts,
            )?;
        }
        other => {
            return Err(usage(
                "task",
                format!("unknown task `{other}`; use verify, match or retrieve"),
            ))
        }
    }
    let text = report.to_kv().to_text();
    print!("{text}");
    write_text(&args.out, &text)?;
    m.set("task", normalize(&args.task));
    m.set("seed", args.seed);
    m.artifact("report", &args.out)?;
    if !report.retrieval.is_empty() {
        let csv = args.csv.clone().unwrap_or_else(|| sidecar(&args.out, "csv"));
        write_text(&csv, &report.retrieval_csv())?;
        m.artifact("curve", &csv)?;
    }
    m.write(&sidecar(&args.out, "manifest"))
}

/// One grid cell: matching mAP on the held-out points, or `None` on
/// divergence.
fn run_cell<F>(config: &TrainConfig, spec: &ArchitectureSpec, train_set: &PatchDataset, score: F) -> Result<Option<f64>>
where
    F: Fn(&DescriptorModel<f32>) -> Result<f64>,
{
    let model: DescriptorModel<f32> = config.init_model(spec.clone())?;
    match train(model, train_set, config, TrainOptions::default()) {
        Ok(out) => Ok(Some(score(&out.model)?)),
        Err(Error::Divergence(msg)) => {
            log::warn!("{msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn cell_text(v: Option<f64>) -> String {
    v.map_or_else(|| "diverged".to_string(), |x| format!("{x:.4}"))
}

/// CPR weight of `+cpr` grid rows.
pub const ABLATION_CPR_WEIGHT: f64 = 1.0;

/// One ablation row: a sampling strategy, with or without CPR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridRow {
    pub sampling: SamplingStrategy,
    pub cpr: bool,
}

impl std::fmt::Display for GridRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.sampling, if self.cpr { "+cpr" } else { "" })
    }
}

fn parse_row(s: &str) -> Result<GridRow> {
    let n = normalize(s);
    match n.strip_suffix("+cpr") {
        Some(base) => Ok(GridRow {
            sampling: parse_sampling(base)?,
            cpr: true,
        }),
        None => Ok(GridRow {
            sampling: parse_sampling(&n)?,
            cpr: false,
        }),
    }
}

pub fn parse_grid(grid: &str) -> Result<(Vec<GridRow>, Vec<(LossKind, f64)>)> {
    let (s, l) = grid
        .split_once(':')
        .ok_or_else(|| usage("grid", format!("expected SAMPLINGS:LOSSES, got `{grid}`")))?;
    let rows = s.split(',').map(parse_row).collect::<Result<Vec<_>>>()?;
    let losses = l
        .split(',')
        .map(|x| parse_loss(x).map(|(k, m)| (k, m.unwrap_or(1.0))))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() || losses.is_empty() {
        return Err(usage("grid", "empty grid"));
    }
    Ok((rows, losses))
}

fn loss_label(kind: LossKind, margin: f64) -> String {
    if kind.uses_margin() {
        format!("{kind}@{margin}")
    } else {
        kind.to_string()
    }
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let (rows, losses) = parse_grid(&args.grid)?;
    let base = resolve_config(
        &args.flags,
        &[
            ("epochs", Some(args.epochs.to_string())),
            ("batch_size", Some(args.batch_size.to_string())),
            ("seed", Some(args.seed.to_string())),
        ],
    )?;
    let spec = architecture(&args.flags.arch, base.dropout_rate)?;
    let data = load_brown(&args.data)?;
    let (train_set, held) = data.split_points(args.held_out, args.seed)?;

    let mut csv = String::from("sampling,cpr_weight,loss,margin,matching_map\n");
    let mut table = format!("{:<20}", "sampling");
    for &(k, mg) in &losses {
        table.push_str(&format!(" {:>18}", loss_label(k, mg)));
    }
    table.push('\n');
    for &row in &rows {
        table.push_str(&format!("{:<20}", row.to_string()));
        for &(kind, margin) in &losses {
            let cpr_weight = if row.cpr {
                ABLATION_CPR_WEIGHT
            } else {
                base.loss.cpr_weight
            };
            let config = TrainConfig {
                sampling: row.sampling,
                loss: LossConfig {
                    kind,
                    margin,
                    cpr_weight,
                },
                ..base.clone()
            };
            config.validate()?;
            log::info!("cell {row} × {}", loss_label(kind, margin));
            let v = run_cell(&config, &spec, &train_set, |m| model_matching_map(m, &held))?;
            table.push_str(&format!(" {:>18}", cell_text(v)));
            csv.push_str(&format!(
                "{},{cpr_weight},{kind},{margin},{}\n",
                row.sampling,
                v.map_or("diverged".into(), |x| x.to_string())
            ));
        }
        table.push('\n');
    }
    print!("{table}");
    write_text(&args.out, &csv)?;
    let mut m = Manifest::new("ablate");
    m.extend("train.", &base.to_kv());
    m.set("grid", &args.grid);
    m.set("held_out", args.held_out);
    m.set("arch", &args.flags.arch);
    m.input("data", &args.data)?;
    m.artifact("table", &args.out)?;
    m.write(&sidecar(&args.out, "manifest"))
}

pub fn batch_sweep(args: &SweepArgs) -> Result<()> {
    let mut sizes: Vec<usize> = Vec::new();
    for s in parse_list::<usize>("sizes", &args.sizes)? {
        if sizes.contains(&s) {
            log::warn!("batch size {s} listed more than once; running it once");
        } else {
            sizes.push(s);
        }
    }
    if sizes.is_empty() {
        return Err(usage("sizes", "no batch sizes given"));
    }
    let base = resolve_config(
        &args.flags,
        &[
            ("epochs", Some(args.epochs.to_string())),
            ("seed", Some(args.seed.to_string())),
        ],
    )?;
    let spec = architecture(&args.flags.arch, base.dropout_rate)?;
    let data = load_brown(&args.data)?;
    let (train_set, held) = data.split_points(args.held_out, args.seed)?;
    let points = train_set.trainable_points().len();
    if let Some(&s) = sizes.iter().find(|&&s| s > points || s < 2) {
        return Err(usage(
            "sizes",
            format!("batch size {s} needs 2..={points} training points"),
        ));
    }
    let mut csv = String::from("size,fpr95\n");
    for &size in &sizes {
        let config = TrainConfig {
            batch_size: size,
            ..base.clone()
        };
        log::info!("batch size {size}");
        let v = run_cell(&config, &spec, &train_set, |m| model_fpr95(m, &held, args.seed))?;
        println!("{size:>6} {}", cell_text(v));
        csv.push_str(&format!("{size},{}\n", v.map_or("diverged".into(), |x| x.to_string())));
    }
    write_text(&args.out, &csv)?;
    let mut m = Manifest::new("batch-sweep");
    m.extend("train.", &base.to_kv());
    m.set(
        "sizes",
        sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
    );
    m.set("held_out", args.held_out);
    m.set("arch", &args.flags.arch);
    m.input("data", &args.data)?;
    m.artifact("curve", &args.out)?;
    m.write(&sidecar(&args.out, "manifest"))
}
