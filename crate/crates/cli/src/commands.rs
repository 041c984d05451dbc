use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use lungnet_core::dsp::{load_cache, save_cache, FrontEnd, GamPatch, LabeledPatch};
use lungnet_core::eval::{
    confusion, decide, fuse, icbhi_scores, read_probabilities, write_probabilities,
    CycleProbability, Fusion, Report, Source,
};
use lungnet_core::ingest::{
    class_counts, find_recordings, load_directory, official_split, parse_split_file, read_manifest,
    write_manifest, CycleLabel, ManifestRow, Subset,
};
use lungnet_core::models::{
    embed, predict_cycles, train_autoencoder, train_cdnn, train_mlp_head, Classifier, EpochLog,
    LabeledSet, Network, TrainLog,
};
use lungnet_core::{ArchTag, Checkpoint};

use crate::args::{Cli, Command, FusionArg, GlobalArgs, ModelKind, SourceArg};
use crate::config::PipelineConfig;
use crate::run::{
    create_run, latest_run, CONFIG_FILE, MANIFEST_FILE, PREPARE_STAMP, REPORT_FILE, TEST_CACHE,
    TRAIN_CACHE,
};
use crate::CliError;

pub const CDNN_FILE: &str = "cdnn.rspm";
pub const ENCODER_FILE: &str = "encoder.rspm";
pub const DECODER_FILE: &str = "decoder.rspm";
pub const MLP_FILE: &str = "mlp.rspm";

type CmdResult = Result<(), CliError>;

pub fn run(cli: Cli) -> CmdResult {
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    let g = &cli.global;
    match cli.command {
        Command::Prepare { force, new_run } => prepare(g, force, new_run),
        Command::Train { model, epochs } => train(g, model, epochs),
        Command::Evaluate { source, fusion } => evaluate(g, &source, fusion),
        Command::Score {
            files,
            truth,
            fusion,
        } => score(g, &files, truth.as_deref(), fusion),
    }
}

struct Session {
    cfg: PipelineConfig,
    dir: PathBuf,
}

fn apply_overrides(cfg: &mut PipelineConfig, g: &GlobalArgs) -> CmdResult {
    if let Some(path) = &g.config {
        cfg.apply_file(path)?;
    }
    for s in &g.sets {
        cfg.apply_override(s)?;
    }
    if let Some(seed) = g.seed {
        cfg.train.seed = seed;
    }
    Ok(())
}

/// Finds (or for `prepare`, creates) the run directory, then layers the
/// run's saved config, `--config`, `--set` and `--seed` over the defaults.
fn open_session(g: &GlobalArgs, create: bool, fresh: bool) -> Result<Session, CliError> {
    let mut probe = PipelineConfig::default();
    apply_overrides(&mut probe, g)?;
    let seed = probe.train.seed;
    let dir = match &g.run {
        Some(dir) => {
            if create {
                fs::create_dir_all(dir)?;
            } else if !dir.is_dir() {
                return Err(CliError::Usage(format!(
                    "run directory {} does not exist",
                    dir.display()
                )));
            }
            dir.clone()
        }
        None => match latest_run(&probe.out_dir, seed) {
            Some(dir) if !fresh => dir,
            _ if create => create_run(&probe.out_dir, seed)?,
            _ => {
                return Err(CliError::Runtime(anyhow!(
                    "no run for seed {seed} under {}; run `lungnet prepare` first",
                    probe.out_dir.join("runs").display()
                )))
            }
        },
    };
    let mut cfg = PipelineConfig::default();
    let saved = dir.join(CONFIG_FILE);
    if saved.is_file() {
        cfg.apply_file(&saved)?;
    }
    apply_overrides(&mut cfg, g)?;
    cfg.validate()?;
    Ok(Session { cfg, dir })
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn file_fingerprint(path: &Path, out: &mut String) -> CmdResult {
    let meta = fs::metadata(path).with_context(|| format!("reading {}", path.display()))?;
    let mtime = meta
        .modified()
        .ok()
        .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let _ = writeln!(out, "{} {} {}", path.display(), meta.len(), mtime);
    Ok(())
}

/// Everything that determines the prepared caches.
fn prepare_stamp(
    cfg: &PipelineConfig,
    data: &Path,
    split: &Path,
    limit: Option<usize>,
) -> Result<String, CliError> {
    let mut s = String::new();
    for line in cfg.lines() {
        if line.starts_with("frontend.") || line.starts_with("data.") {
            let _ = writeln!(s, "{line}");
        }
    }
    let _ = writeln!(s, "limit = {limit:?}");
    file_fingerprint(split, &mut s)?;
    for wav in find_recordings(data)? {
        file_fingerprint(&wav, &mut s)?;
        file_fingerprint(&wav.with_extension("txt"), &mut s)?;
    }
    Ok(s)
}

fn stem_of(cycle_id: &str) -> &str {
    cycle_id.rsplit_once('#').map_or(cycle_id, |(stem, _)| stem)
}

fn prepare(g: &GlobalArgs, force: bool, fresh: bool) -> CmdResult {
    let s = open_session(g, true, fresh)?;
    let (data, split) = s.cfg.dataset_paths()?;
    let stamp = prepare_stamp(&s.cfg, &data, &split, g.limit)?;
    let stamp_path = s.dir.join(PREPARE_STAMP);
    let outputs_exist = [TRAIN_CACHE, TEST_CACHE, MANIFEST_FILE]
        .iter()
        .all(|f| s.dir.join(f).is_file());
    if !force && outputs_exist && fs::read_to_string(&stamp_path).is_ok_and(|old| old == stamp) {
        println!("cache up to date ({})", s.dir.display());
        return Ok(());
    }
    let _ = fs::remove_file(&stamp_path);

    let split_text =
        fs::read_to_string(&split).with_context(|| format!("reading {}", split.display()))?;
    let table =
        parse_split_file(&split_text).with_context(|| format!("parsing {}", split.display()))?;
    let report = load_directory(&data)?;
    if !report.failures.is_empty() {
        for (path, err) in &report.failures {
            eprintln!("  {}: {err}", path.display());
        }
        return Err(CliError::Runtime(anyhow!(
            "{} recording(s) could not be loaded",
            report.failures.len()
        )));
    }
    let (mut train, mut test) = official_split(report.cycles, &table)?;
    if let Some(n) = g.limit {
        train.truncate(n);
        test.truncate(n);
    }

    let fe = FrontEnd::new(s.cfg.frontend.clone())?;
    let train_patches = fe.extract_all(&train)?;
    let test_patches = fe.extract_all(&test)?;
    save_cache(&s.dir.join(TRAIN_CACHE), &train_patches)?;
    save_cache(&s.dir.join(TEST_CACHE), &test_patches)?;

    let mut rows = train
        .iter()
        .chain(&test)
        .map(ManifestRow::from_cycle)
        .collect::<lungnet_core::Result<Vec<_>>>()?;
    rows.sort_by(|a, b| stem_of(&a.cycle_id).cmp(stem_of(&b.cycle_id)));
    let header = s.cfg.lines();
    let mut w = create(&s.dir.join(MANIFEST_FILE))?;
    write_manifest(&mut w, &rows, &header)?;
    w.flush()?;
    write_text(&s.dir.join(CONFIG_FILE), &s.cfg.to_text())?;
    write_text(&stamp_path, &stamp)?;

    println!("run {}", s.dir.display());
    for (name, cycles, patches) in [
        ("train", &train, train_patches.len()),
        ("test", &test, test_patches.len()),
    ] {
        let c = class_counts(cycles.iter().map(|c| &c.label));
        println!(
            "{name}: {} cycles (Crackle {}, Wheeze {}, Both {}, Normal {}), {patches} patches",
            cycles.len(),
            c[0],
            c[1],
            c[2],
            c[3]
        );
    }
    Ok(())
}

/// Keeps at most `n` patches, taking classes in turn so none is dropped
/// before the others; the kept patches stay in input order.
fn limit_stratified(patches: Vec<LabeledPatch>, n: usize) -> Vec<LabeledPatch> {
    if patches.len() <= n {
        return patches;
    }
    let mut queues: Vec<std::collections::VecDeque<usize>> =
        vec![Default::default(); CycleLabel::ALL.len()];
    for (i, p) in patches.iter().enumerate() {
        queues[p.label.index()].push_back(i);
    }
    let mut keep = Vec::with_capacity(n);
    while keep.len() < n {
        for q in queues.iter_mut() {
            if keep.len() < n {
                if let Some(i) = q.pop_front() {
                    keep.push(i);
                }
            }
        }
    }
    keep.sort_unstable();
    let mut keep = keep.into_iter().peekable();
    patches
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.next_if_eq(i).is_some())
        .map(|(_, p)| p)
        .collect()
}

fn load_split_cache(s: &Session, file: &str) -> Result<Vec<LabeledPatch>, CliError> {
    let path = s.dir.join(file);
    if !path.is_file() {
        return Err(CliError::Runtime(anyhow!(
            "feature cache {} not found; run `lungnet prepare` first",
            path.display()
        )));
    }
    let fe = &s.cfg.frontend;
    Ok(load_cache(&path, fe.n_gammatone, fe.patch_time)?)
}

fn save_network(net: &Network, path: &Path) -> CmdResult {
    net.to_checkpoint().save(path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_network(path: &Path, kind: ArchTag, what: &str) -> Result<Network, CliError> {
    if !path.is_file() {
        return Err(CliError::Runtime(anyhow!(
            "{what} checkpoint not found: {}",
            path.display()
        )));
    }
    let ckpt = Checkpoint::load(path)?;
    Ok(Network::from_checkpoint(&ckpt, kind)?)
}

fn write_log(s: &Session, name: &str, log: &TrainLog) -> CmdResult {
    let path = s.dir.join(format!("{name}_loss.csv"));
    let mut w = create(&path)?;
    log.write_csv(&mut w, &s.cfg.lines())?;
    w.flush()?;
    Ok(())
}

fn progress(name: &'static str) -> impl FnMut(&EpochLog) {
    move |e| match e.train_acc {
        Some(acc) => eprintln!(
            "{name} epoch {:>4}  loss {:.6}  acc {:.4}",
            e.epoch, e.loss, acc
        ),
        None => eprintln!("{name} epoch {:>4}  loss {:.6}", e.epoch, e.loss),
    }
}

fn train(g: &GlobalArgs, model: ModelKind, epochs: Option<usize>) -> CmdResult {
    let mut s = open_session(g, false, false)?;
    if let Some(e) = epochs {
        s.cfg.train.epochs = e;
        s.cfg.validate()?;
    }
    let mut patches = load_split_cache(&s, TRAIN_CACHE)?;
    if let Some(n) = g.limit {
        patches = limit_stratified(patches, n);
    }
    let seed = s.cfg.train.seed;
    let tc = s.cfg.train.clone();
    let name = match model {
        ModelKind::Cdnn => {
            let mut net = Network::cdnn(&s.cfg.arch, seed)?;
            let log = train_cdnn(&mut net, &patches, &tc, progress("cdnn"))?;
            save_network(&net, &s.dir.join(CDNN_FILE))?;
            write_log(&s, "cdnn", &log)?;
            "cdnn"
        }
        ModelKind::Autoencoder => {
            let mut enc = Network::encoder(&s.cfg.arch, seed)?;
            let mut dec = Network::decoder(&s.cfg.arch, seed)?;
            let raw: Vec<GamPatch> = patches.into_iter().map(|p| p.patch).collect();
            let log = train_autoencoder(&mut enc, &mut dec, &raw, &tc, progress("autoencoder"))?;
            save_network(&enc, &s.dir.join(ENCODER_FILE))?;
            save_network(&dec, &s.dir.join(DECODER_FILE))?;
            write_log(&s, "autoencoder", &log)?;
            "autoencoder"
        }
        ModelKind::Mlp => {
            let mut enc = load_network(&s.dir.join(ENCODER_FILE), ArchTag::Encoder, "encoder")?;
            let labels: Vec<CycleLabel> = patches.iter().map(|p| p.label).collect();
            let raw: Vec<GamPatch> = patches.into_iter().map(|p| p.patch).collect();
            let z = embed(&mut enc, &raw)?;
            let set = LabeledSet::new(&[enc.arch.embedding_width()], z.into_vec(), labels)?;
            let mut mlp = Network::mlp(&enc.arch, seed)?;
            let log = train_mlp_head(&mut mlp, &set, &tc, progress("mlp"))?;
            save_network(&mlp, &s.dir.join(MLP_FILE))?;
            write_log(&s, "mlp", &log)?;
            "mlp"
        }
    };
    write_text(&s.dir.join(format!("{name}.config.txt")), &s.cfg.to_text())
}

fn source_name(src: Source) -> &'static str {
    match src {
        Source::Cdnn => "cdnn",
        Source::Mlp => "mlp",
        Source::Fused => "fused",
    }
}

fn report_block(
    title: &str,
    probs: &[CycleProbability],
    truth: &[(String, CycleLabel)],
) -> Result<String, CliError> {
    let pred = probs
        .iter()
        .map(|p| Ok((p.cycle_id.clone(), decide(&p.probs)?)))
        .collect::<lungnet_core::Result<Vec<_>>>()?;
    let matrix = confusion(&pred, truth)?;
    let scores = icbhi_scores(&matrix)?;
    Ok(Report {
        title,
        scores,
        matrix,
    }
    .to_string())
}

fn fuse_all(
    a: &[CycleProbability],
    b: &[CycleProbability],
    scheme: Fusion,
) -> Result<Vec<CycleProbability>, CliError> {
    let by_id: HashMap<&str, &CycleProbability> =
        b.iter().map(|p| (p.cycle_id.as_str(), p)).collect();
    a.iter()
        .map(|p| {
            let q = by_id.get(p.cycle_id.as_str()).ok_or_else(|| {
                CliError::Runtime(anyhow!("{} has no second-model probability", p.cycle_id))
            })?;
            Ok(fuse(p, q, scheme)?)
        })
        .collect()
}

fn evaluate(g: &GlobalArgs, sources: &[SourceArg], fusion: Option<FusionArg>) -> CmdResult {
    let s = open_session(g, false, false)?;
    let mut patches = load_split_cache(&s, TEST_CACHE)?;
    if let Some(n) = g.limit {
        let mut kept = std::collections::HashSet::new();
        patches.retain(|p| {
            kept.contains(&p.patch.cycle_id)
                || (kept.len() < n && kept.insert(p.patch.cycle_id.clone()))
        });
    }
    let mut truth: Vec<(String, CycleLabel)> = Vec::new();
    for p in &patches {
        if truth.last().map(|t| &t.0) != Some(&p.patch.cycle_id) {
            truth.push((p.patch.cycle_id.clone(), p.label));
        }
    }
    let raw: Vec<GamPatch> = patches.into_iter().map(|p| p.patch).collect();

    let have_cdnn = s.dir.join(CDNN_FILE).is_file();
    let have_mlp = s.dir.join(ENCODER_FILE).is_file() && s.dir.join(MLP_FILE).is_file();
    let chosen: Vec<SourceArg> = if sources.is_empty() {
        [(SourceArg::Cdnn, have_cdnn), (SourceArg::Mlp, have_mlp)]
            .into_iter()
            .filter_map(|(src, ok)| ok.then_some(src))
            .collect()
    } else {
        let mut v = sources.to_vec();
        v.dedup();
        v
    };
    if chosen.is_empty() {
        return Err(CliError::Runtime(anyhow!(
            "no trained checkpoints in {}",
            s.dir.display()
        )));
    }
    if fusion.is_some() && chosen.len() < 2 {
        return Err(CliError::Usage(
            "fusion needs two sources: train both the C-DNN and the autoencoder with its MLP head"
                .into(),
        ));
    }

    let header = s.cfg.lines();
    let mut report = String::new();
    for line in &header {
        let _ = writeln!(report, "# {line}");
    }
    let mut outputs: Vec<(Source, Vec<CycleProbability>)> = Vec::new();
    for src in chosen {
        let (source, mut model) = match src {
            SourceArg::Cdnn => (
                Source::Cdnn,
                Classifier::Cdnn(load_network(&s.dir.join(CDNN_FILE), ArchTag::Cdnn, "cdnn")?),
            ),
            SourceArg::Mlp => (
                Source::Mlp,
                Classifier::EncoderMlp {
                    encoder: load_network(&s.dir.join(ENCODER_FILE), ArchTag::Encoder, "encoder")?,
                    mlp: load_network(&s.dir.join(MLP_FILE), ArchTag::Mlp, "mlp")?,
                },
            ),
        };
        let probs: Vec<CycleProbability> = predict_cycles(&mut model, &raw)?
            .into_iter()
            .map(|(cycle_id, probs)| CycleProbability {
                cycle_id,
                probs,
                source,
            })
            .collect();
        outputs.push((source, probs));
    }
    for (source, probs) in &outputs {
        let path = s.dir.join(format!("probs_{}.csv", source_name(*source)));
        let mut w = create(&path)?;
        write_probabilities(&mut w, probs, &header)?;
        w.flush()?;
        let title = if *source == Source::Cdnn {
            "cdnn"
        } else {
            "autoencoder+mlp"
        };
        let _ = writeln!(
            report,
            "\n{}",
            report_block(title, probs, &truth)?.trim_end()
        );
    }
    if let Some(f) = fusion {
        let scheme: Fusion = f.into();
        let fused = fuse_all(&outputs[0].1, &outputs[1].1, scheme)?;
        let path = s.dir.join(format!("probs_fused_{}.csv", scheme.name()));
        let mut w = create(&path)?;
        write_probabilities(&mut w, &fused, &header)?;
        w.flush()?;
        let title = format!("fusion {}", scheme.name());
        let _ = writeln!(
            report,
            "\n{}",
            report_block(&title, &fused, &truth)?.trim_end()
        );
    }
    write_text(&s.dir.join(REPORT_FILE), &report)?;
    print!(
        "{}",
        report
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    );
    println!();
    Ok(())
}

fn score(
    g: &GlobalArgs,
    files: &[PathBuf],
    truth_path: Option<&Path>,
    fusion: Option<FusionArg>,
) -> CmdResult {
    let manifest = match truth_path {
        Some(p) => p.to_path_buf(),
        None => open_session(g, false, false)?.dir.join(MANIFEST_FILE),
    };
    let text =
        fs::File::open(&manifest).with_context(|| format!("opening {}", manifest.display()))?;
    let rows = read_manifest(text)?;
    let mut groups: Vec<(Source, Vec<CycleProbability>)> = Vec::new();
    for f in files {
        let r = fs::File::open(f).with_context(|| format!("opening {}", f.display()))?;
        for p in read_probabilities(r).with_context(|| format!("reading {}", f.display()))? {
            match groups.iter_mut().find(|(s, _)| *s == p.source) {
                Some((_, v)) => v.push(p),
                None => groups.push((p.source, vec![p])),
            }
        }
    }
    let scored: std::collections::HashSet<&str> = groups
        .iter()
        .flat_map(|(_, v)| v.iter().map(|p| p.cycle_id.as_str()))
        .collect();
    let test_rows: Vec<&ManifestRow> = rows.iter().filter(|r| r.subset == Subset::Test).collect();
    let truth: Vec<(String, CycleLabel)> = test_rows
        .iter()
        .filter(|r| scored.contains(r.cycle_id.as_str()))
        .map(|r| (r.cycle_id.clone(), r.label))
        .collect();
    if truth.len() < test_rows.len() {
        println!("scoring {} of {} test cycles", truth.len(), test_rows.len());
    }
    let mut out = Vec::new();
    for (source, probs) in &groups {
        out.push(report_block(source_name(*source), probs, &truth)?);
    }
    if let Some(f) = fusion {
        let scheme: Fusion = f.into();
        let get = |src: Source| groups.iter().find(|(s, _)| *s == src).map(|(_, v)| v);
        let (Some(a), Some(b)) = (get(Source::Cdnn), get(Source::Mlp)) else {
            return Err(CliError::Usage(
                "--fusion needs both CDNN and MLP probabilities".into(),
            ));
        };
        let fused = fuse_all(a, b, scheme)?;
        out.push(report_block(
            &format!("fusion {}", scheme.name()),
            &fused,
            &truth,
        )?);
    }
    println!("{}", out.join("\n").trim_end());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use lungnet_core::dsp::GamPatch;

    fn lp(i: usize, label: CycleLabel) -> LabeledPatch {
        LabeledPatch {
            patch: GamPatch {
                values: vec![0.0],
                rows: 1,
                cols: 1,
                cycle_id: format!("c#{i}"),
                patch_index: 0,
            },
            label,
        }
    }

    #[test]
    fn stratified_limit_keeps_every_class() {
        use CycleLabel::*;
        let labels = [
            Normal, Normal, Normal, Normal, Crackle, Wheeze, Normal, Both, Crackle,
        ];
        let patches: Vec<_> = labels.iter().enumerate().map(|(i, &l)| lp(i, l)).collect();
        let kept = limit_stratified(patches, 4);
        let ids: Vec<&str> = kept.iter().map(|p| p.patch.cycle_id.as_str()).collect();
        assert_eq!(ids, ["c#0", "c#4", "c#5", "c#7"]);
    }

    #[test]
    fn stem_strips_cycle_index() {
        assert_eq!(
            stem_of("101_1b1_Al_sc_Meditron#12"),
            "101_1b1_Al_sc_Meditron"
        );
    }
}
