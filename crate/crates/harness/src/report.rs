//! CSV artifacts. Every file starts with one `#` line naming the schema
//! version, the artifact kind and the config hash; readers skip it as a
//! comment.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use symmrl_core::envs::Mode;
use symmrl_core::metrics::{aggregate_seeds, symmetry_index, EvalRecord};
use symmrl_core::ppo::{Algo, EpisodeTrace, IterationStats};
use symmrl_core::MetricError;

use crate::checkpoint::SCHEMA_VERSION;
use crate::error::{HarnessError, Result};

/// Identification line written at the top of every CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub kind: &'static str,
    pub algo: Algo,
    pub env: String,
    /// Absent for files that aggregate several seeds.
    pub seed: Option<u64>,
    pub config_hash: String,
}

impl Header {
    pub fn line(&self) -> String {
        let mut s = format!("# schema={SCHEMA_VERSION} kind={} algo={} env={}", self.kind, self.algo, self.env);
        if let Some(seed) = self.seed {
            let _ = write!(s, " seed={seed}");
        }
        let _ = write!(s, " config_hash={}", self.config_hash);
        s
    }
}

fn create(path: &Path, header: &Header) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", header.line()).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(out))
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::Malformed {
            path: path.to_path_buf(),
            what: "csv",
            message: format!("{other:?}"),
        },
    }
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| HarnessError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| HarnessError::io(path, e))
}

/// Shortest round-trip decimal; empty when not applicable.
fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// SI with the undefined case spelled out instead of a number.
fn si_field(si: &Option<std::result::Result<f64, MetricError>>) -> String {
    match si {
        Some(Ok(v)) => v.to_string(),
        Some(Err(MetricError::BothZero)) => "undefined".into(),
        Some(Err(_)) | None => String::new(),
    }
}

pub fn write_train_csv(path: &Path, header: &Header, rows: &[IterationStats]) -> Result<()> {
    let mut w = create(path, header)?;
    if rows.is_empty() {
        // serde writes the header together with the first record.
        w.write_record(TRAIN_COLUMNS).map_err(|e| csv_err(path, e))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

const TRAIN_COLUMNS: [&str; 10] = [
    "iteration",
    "env_steps",
    "return_mean",
    "return_std",
    "surrogate_loss",
    "value_loss",
    "entropy",
    "approx_kl",
    "policy_equiv_error",
    "value_inv_error",
];

/// Reads a training report back, returning its header line and rows.
pub fn read_train_csv(path: &Path) -> Result<(String, Vec<IterationStats>)> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let first = text.lines().next().unwrap_or_default();
    if !first.starts_with("# schema=") || !first.contains("kind=train") {
        return Err(HarnessError::Malformed {
            path: path.to_path_buf(),
            what: "training report",
            message: "missing `# schema=... kind=train` header".into(),
        });
    }
    if !first.starts_with(&format!("# schema={SCHEMA_VERSION} ")) {
        return Err(HarnessError::SchemaMismatch {
            path: path.to_path_buf(),
            reason: first.to_string(),
        });
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<IterationStats>, _>>()
        .map_err(|e| csv_err(path, e))?;
    Ok((first.to_string(), rows))
}

/// Which environment variant an evaluation ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Nominal,
    Ood,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Nominal => "nominal",
            Split::Ood => "ood",
        }
    }
}

/// Evaluation episodes of one checkpoint on one split, in evaluation order.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub split: Split,
    pub episodes: Vec<EvalRecord>,
}

impl EvalSet {
    /// `evaluate_paired` interleaves modes per episode index; recover it.
    pub fn from_traces(split: Split, traces: &[EpisodeTrace]) -> Self {
        Self {
            split,
            episodes: traces.iter().map(EpisodeTrace::to_record).collect(),
        }
    }

    fn episode_indices(&self) -> Vec<usize> {
        let mut right = 0;
        let mut left = 0;
        self.episodes
            .iter()
            .map(|r| {
                let c = if r.mode == Mode::Right { &mut right } else { &mut left };
                *c += 1;
                *c - 1
            })
            .collect()
    }
}

pub fn write_eval_csv(path: &Path, header: &Header, sets: &[EvalSet]) -> Result<()> {
    let mut w = create(path, header)?;
    w.write_record(["episode", "split", "mode", "success", "return", "tracking_error", "cot"])
        .map_err(|e| csv_err(path, e))?;
    for set in sets {
        for (i, r) in set.episode_indices().into_iter().zip(&set.episodes) {
            let cot = r.cost_of_transport().ok();
            let tracking = r.tracking_error.is_finite().then_some(r.tracking_error);
            w.write_record([
                i.to_string(),
                set.split.as_str().into(),
                r.mode.as_str().into(),
                u8::from(r.success).to_string(),
                r.episodic_return.to_string(),
                num(tracking),
                num(cot),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    finish(path, w)
}

pub fn write_trajectory_csv(path: &Path, header: &Header, trace: &EpisodeTrace) -> Result<()> {
    let mut w = create(path, header)?;
    let sd = trace.states.first().map_or(0, Vec::len);
    let ad = trace.actions.first().map_or(0, Vec::len);
    let mut cols = vec!["t".to_string()];
    cols.extend((0..sd).map(|i| format!("s{i}")));
    cols.extend((0..ad).map(|i| format!("a{i}")));
    cols.extend(["reward".to_string(), "done".to_string()]);
    w.write_record(&cols).map_err(|e| csv_err(path, e))?;
    for t in 0..trace.states.len() {
        let mut row = vec![t.to_string()];
        row.extend(trace.states[t].iter().map(f64::to_string));
        row.extend(trace.actions[t].iter().map(f64::to_string));
        row.push(trace.rewards[t].to_string());
        row.push(u8::from(trace.dones[t]).to_string());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Success rates and secondary metrics of one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSummary {
    pub sr_right: Option<f64>,
    pub sr_left: Option<f64>,
    pub mean_sr: f64,
    pub tracking: Option<f64>,
    pub cot: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl SplitSummary {
    pub fn of(set: &EvalSet) -> Result<Self> {
        let sr = |m: Mode| symmrl_core::metrics::success_rate(&set.episodes, Some(m)).ok();
        let mean_sr = symmrl_core::metrics::success_rate(&set.episodes, None)
            .map_err(|_| HarnessError::EmptyInput("evaluation produced no episodes".into()))?;
        Ok(Self {
            sr_right: sr(Mode::Right),
            sr_left: sr(Mode::Left),
            mean_sr,
            tracking: mean(set.episodes.iter().map(|r| r.tracking_error).filter(|v| v.is_finite())),
            cot: mean(set.episodes.iter().filter_map(|r| r.cost_of_transport().ok())),
        })
    }

    /// SI of the per-mode success rates; `None` when a mode was not run.
    pub fn si(&self) -> Option<std::result::Result<f64, MetricError>> {
        Some(symmetry_index(self.sr_right?, self.sr_left?))
    }
}

/// Mean, spread and best success rate over checkpoints (seeds), with SI
/// taken between the mean per-mode success rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub checkpoints: usize,
    pub mean_sr: f64,
    pub std_sr: f64,
    pub max_sr: f64,
    pub sr_right: Option<f64>,
    pub sr_left: Option<f64>,
    pub si: Option<std::result::Result<f64, MetricError>>,
    pub tracking: Option<f64>,
    pub cot: Option<f64>,
}

impl Aggregate {
    pub fn of(per_checkpoint: &[SplitSummary]) -> Result<Self> {
        let srs: Vec<f64> = per_checkpoint.iter().map(|s| s.mean_sr).collect();
        let agg = aggregate_seeds(&srs).map_err(|_| HarnessError::EmptyInput("no checkpoints evaluated".into()))?;
        let all = |f: fn(&SplitSummary) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = per_checkpoint.iter().map(f).collect();
            v.and_then(|v| mean(v.into_iter()))
        };
        let sr_right = all(|s| s.sr_right);
        let sr_left = all(|s| s.sr_left);
        let si = match (sr_right, sr_left) {
            (Some(r), Some(l)) => Some(symmetry_index(r, l)),
            _ => None,
        };
        Ok(Self {
            checkpoints: per_checkpoint.len(),
            mean_sr: agg.mean,
            std_sr: agg.std,
            max_sr: agg.max,
            sr_right,
            sr_left,
            si,
            tracking: mean(per_checkpoint.iter().filter_map(|s| s.tracking)),
            cot: mean(per_checkpoint.iter().filter_map(|s| s.cot)),
        })
    }

    fn fields(agg: Option<&Aggregate>) -> Vec<String> {
        match agg {
            None => vec![String::new(); 8],
            Some(a) => vec![
                a.mean_sr.to_string(),
                a.std_sr.to_string(),
                a.max_sr.to_string(),
                num(a.sr_right),
                num(a.sr_left),
                si_field(&a.si),
                num(a.tracking),
                num(a.cot),
            ],
        }
    }
}

/// Training outcome of one seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingOutcome {
    pub iterations: usize,
    pub env_steps: usize,
    /// Highest per-iteration mean training return.
    pub highest_return: Option<f64>,
    pub final_return: Option<f64>,
    /// Environment steps at the first iteration whose mean return reached the threshold.
    pub samples_to_threshold: Option<usize>,
}

impl TrainingOutcome {
    pub fn of(rows: &[IterationStats], threshold: Option<f64>) -> Self {
        let finite = || rows.iter().filter(|r| r.return_mean.is_finite());
        Self {
            iterations: rows.len(),
            env_steps: rows.last().map_or(0, |r| r.env_steps),
            highest_return: finite().map(|r| r.return_mean).reduce(f64::max),
            final_return: finite().next_back().map(|r| r.return_mean),
            samples_to_threshold: threshold.and_then(|t| finite().find(|r| r.return_mean >= t).map(|r| r.env_steps)),
        }
    }
}

/// One summary line: a seed, or all seeds/checkpoints together.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub label: String,
    pub episodes_per_mode: usize,
    pub nominal: Aggregate,
    pub ood: Option<Aggregate>,
    pub training: Option<TrainingOutcome>,
}

const SUMMARY_COLUMNS: [&str; 25] = [
    "label",
    "checkpoints",
    "episodes_per_mode",
    "mean_sr",
    "std_sr",
    "max_sr",
    "sr_right",
    "sr_left",
    "si",
    "tracking",
    "cot",
    "ood_mean_sr",
    "ood_std_sr",
    "ood_max_sr",
    "ood_sr_right",
    "ood_sr_left",
    "ood_si",
    "ood_tracking",
    "ood_cot",
    "iterations",
    "env_steps",
    "highest_return",
    "final_return",
    "samples_to_threshold",
    "threshold_reached",
];

pub fn write_summary_csv(path: &Path, header: &Header, rows: &[SummaryRow]) -> Result<()> {
    let mut w = create(path, header)?;
    w.write_record(SUMMARY_COLUMNS).map_err(|e| csv_err(path, e))?;
    for row in rows {
        let mut rec = vec![row.label.clone(), row.nominal.checkpoints.to_string(), row.episodes_per_mode.to_string()];
        rec.extend(Aggregate::fields(Some(&row.nominal)));
        rec.extend(Aggregate::fields(row.ood.as_ref()));
        match &row.training {
            Some(t) => rec.extend([
                t.iterations.to_string(),
                t.env_steps.to_string(),
                num(t.highest_return),
                num(t.final_return),
                t.samples_to_threshold.map(|s| s.to_string()).unwrap_or_default(),
                u8::from(t.samples_to_threshold.is_some()).to_string(),
            ]),
            None => rec.extend(vec![String::new(); 6]),
        }
        debug_assert_eq!(rec.len(), SUMMARY_COLUMNS.len());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> Header {
        Header {
            kind: "train",
            algo: Algo::PpoEqic,
            env: "toy_door".into(),
            seed: Some(3),
            config_hash: "00ff".into(),
        }
    }

    fn stats(i: usize, ret: f64) -> IterationStats {
        IterationStats {
            iteration: i,
            env_steps: 100 * i,
            return_mean: ret,
            return_std: 0.5,
            surrogate_loss: -0.1,
            value_loss: 0.2,
            entropy: 1.0,
            approx_kl: 1e-3,
            policy_equiv_error: 0.0,
            value_inv_error: 0.0,
        }
    }

    fn record(mode: Mode, success: bool) -> EvalRecord {
        EvalRecord {
            mode,
            success,
            episodic_return: 1.0,
            tracking_error: 0.5,
            energy: vec![],
        }
    }

    #[test]
    fn header_line_names_schema_kind_and_hash() {
        assert_eq!(header().line(), "# schema=1 kind=train algo=ppoeqic env=toy_door seed=3 config_hash=00ff");
    }

    #[test]
    fn train_report_round_trips_including_nan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let rows = vec![stats(1, f64::NAN), stats(2, -1.25), stats(3, 0.1)];
        write_train_csv(&path, &header(), &rows).unwrap();
        let (line, back) = read_train_csv(&path).unwrap();
        assert_eq!(line, header().line());
        assert!(back[0].return_mean.is_nan());
        assert_eq!(&back[1..], &rows[1..]);
    }

    #[test]
    fn empty_train_report_still_has_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        write_train_csv(&path, &header(), &[]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), TRAIN_COLUMNS.join(","));
        assert!(read_train_csv(&path).unwrap().1.is_empty());
    }

    #[test]
    fn training_outcome_finds_threshold_and_best() {
        let rows = [stats(1, f64::NAN), stats(2, -3.0), stats(3, -1.0), stats(4, -1.5)];
        let t = TrainingOutcome::of(&rows, Some(-2.0));
        assert_eq!(t.samples_to_threshold, Some(300));
        assert_eq!(t.highest_return, Some(-1.0));
        assert_eq!(t.final_return, Some(-1.5));
        assert_eq!(TrainingOutcome::of(&rows, Some(0.0)).samples_to_threshold, None);
    }

    #[test]
    fn both_modes_failing_gives_undefined_si() {
        let set = EvalSet {
            split: Split::Nominal,
            episodes: vec![record(Mode::Right, false), record(Mode::Left, false)],
        };
        let s = SplitSummary::of(&set).unwrap();
        assert_eq!(s.si(), Some(Err(MetricError::BothZero)));
        let agg = Aggregate::of(&[s]).unwrap();
        assert_eq!(si_field(&agg.si), "undefined");
    }

    #[test]
    fn aggregate_over_checkpoints() {
        let set = |r: bool, l: bool| EvalSet {
            split: Split::Nominal,
            episodes: vec![record(Mode::Right, r), record(Mode::Left, l)],
        };
        let a = SplitSummary::of(&set(true, false)).unwrap();
        let b = SplitSummary::of(&set(true, true)).unwrap();
        let agg = Aggregate::of(&[a, b]).unwrap();
        assert_eq!((agg.mean_sr, agg.std_sr, agg.max_sr), (0.75, 0.25, 1.0));
        assert_eq!((agg.sr_right, agg.sr_left), (Some(1.0), Some(0.5)));
        // 2·0.5/1.5·100
        assert!((agg.si.unwrap().unwrap() - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn eval_rows_number_episodes_per_mode() {
        let set = EvalSet {
            split: Split::Ood,
            episodes: vec![
                record(Mode::Right, true),
                record(Mode::Left, false),
                record(Mode::Right, false),
                record(Mode::Left, true),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        write_eval_csv(&path, &header(), &[set]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "episode,split,mode,success,return,tracking_error,cot");
        assert_eq!(lines[2], "0,ood,right,1,1,0.5,");
        assert_eq!(lines[5], "1,ood,left,1,1,0.5,");
    }
}
