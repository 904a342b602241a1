//! `eval`: paired-mode evaluation of one or more checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use symmrl_core::envs::{EnvSpec, Mode};
use symmrl_core::exec::Execution;
use symmrl_core::ppo::{evaluate_paired, EpisodeTrace, EvalModes, GaussianPolicy};

use crate::checkpoint::Checkpoint;
use crate::error::{HarnessError, Result};
use crate::report::{
    write_eval_csv, write_summary_csv, write_trajectory_csv, Aggregate, EvalSet, Header, Split, SplitSummary,
    SummaryRow,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Episodes per mode.
    pub episodes: usize,
    pub modes: EvalModes,
    pub ood: bool,
    pub deterministic: bool,
}

/// Evaluates `policy` on the nominal environment and, if requested, its
/// shifted variant. Both splits reuse the same episode streams.
pub fn evaluate_policy(
    policy: &GaussianPolicy,
    env: &EnvSpec,
    opts: &EvalOptions,
    root_seed: u64,
) -> Result<Vec<(Split, Vec<EpisodeTrace>)>> {
    let mut splits = vec![(Split::Nominal, env.clone())];
    if opts.ood {
        splits.push((Split::Ood, env.shifted()));
    }
    splits
        .into_iter()
        .map(|(split, spec)| {
            // Evaluation always covers the requested modes, whatever the training restriction was.
            let built = spec.build();
            let traces = evaluate_paired(
                policy,
                built.as_ref(),
                opts.episodes,
                opts.modes,
                root_seed,
                opts.deterministic,
                Execution::default(),
            )
            .map_err(|source| HarnessError::Training {
                context: format!("evaluating on {} ({})", spec.name(), split.as_str()),
                source,
            })?;
            Ok((split, traces))
        })
        .collect()
}

/// Per-split summaries of a single evaluation.
pub fn summarize(traces: &[(Split, Vec<EpisodeTrace>)]) -> Result<(Vec<EvalSet>, SplitSummary, Option<SplitSummary>)> {
    let sets: Vec<EvalSet> = traces.iter().map(|(s, t)| EvalSet::from_traces(*s, t)).collect();
    let mut nominal = None;
    let mut ood = None;
    for set in &sets {
        let s = SplitSummary::of(set)?;
        match set.split {
            Split::Nominal => nominal = Some(s),
            Split::Ood => ood = Some(s),
        }
    }
    let nominal = nominal.ok_or_else(|| HarnessError::EmptyInput("no nominal evaluation".into()))?;
    Ok((sets, nominal, ood))
}

/// Evaluation output of `cmd_eval`.
#[derive(Debug)]
pub struct EvalOutcome {
    /// One row per checkpoint, then `all` when more than one was given.
    pub rows: Vec<SummaryRow>,
    pub traces: Vec<Vec<(Split, Vec<EpisodeTrace>)>>,
}

fn label(ck: &Checkpoint, path: &Path, all: &[(PathBuf, Checkpoint)]) -> String {
    // Seeds identify checkpoints unless two share one.
    if all.iter().filter(|(_, c)| c.root_seed == ck.root_seed).count() == 1 {
        format!("seed_{}", ck.root_seed)
    } else {
        path.display().to_string()
    }
}

/// Evaluates every checkpoint with its own root seed. All checkpoints must
/// share algorithm and environment, since they are aggregated as seeds.
pub fn cmd_eval(ckpts: &[PathBuf], opts: &EvalOptions, out: Option<&Path>, trajectories: usize) -> Result<EvalOutcome> {
    if ckpts.is_empty() {
        return Err(HarnessError::config("ckpt", "at least one checkpoint is required"));
    }
    if opts.episodes == 0 {
        return Err(HarnessError::config("episodes", "must be at least 1"));
    }
    let loaded: Vec<(PathBuf, Checkpoint)> =
        ckpts.iter().map(|p| Checkpoint::load(p).map(|c| (p.clone(), c))).collect::<Result<_>>()?;
    let (_, first) = &loaded[0];
    for (p, c) in &loaded[1..] {
        if c.algo != first.algo || c.env != first.env {
            return Err(HarnessError::config(
                "ckpt",
                format!("{} is {}/{}, expected {}/{}", p.display(), c.env.name(), c.algo, first.env.name(), first.algo),
            ));
        }
    }

    let mut rows = Vec::new();
    let mut all_traces = Vec::new();
    let mut nominal = Vec::new();
    let mut shifted = Vec::new();
    for (path, ck) in &loaded {
        let env = ck.env.build();
        let agent = ck.restore(env.as_ref(), path)?;
        let traces = evaluate_policy(&agent.policy, &ck.env, opts, ck.root_seed)?;
        let (sets, nom, ood) = summarize(&traces)?;
        let label = label(ck, path, &loaded);
        if let Some(dir) = out {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
            let header = header(ck, "eval", Some(ck.root_seed), ck.config_hash.clone());
            write_eval_csv(&dir.join(format!("eval_{}.csv", file_label(&label))), &header, &sets)?;
            dump_trajectories(dir, &label, &header, &traces, trajectories)?;
        }
        rows.push(SummaryRow {
            label,
            episodes_per_mode: opts.episodes,
            nominal: Aggregate::of(std::slice::from_ref(&nom))?,
            ood: ood.as_ref().map(|o| Aggregate::of(std::slice::from_ref(o))).transpose()?,
            training: None,
        });
        nominal.push(nom);
        shifted.extend(ood);
        all_traces.push(traces);
    }
    if loaded.len() > 1 {
        rows.push(SummaryRow {
            label: "all".into(),
            episodes_per_mode: opts.episodes,
            nominal: Aggregate::of(&nominal)?,
            ood: (!shifted.is_empty()).then(|| Aggregate::of(&shifted)).transpose()?,
            training: None,
        });
    }
    if let Some(dir) = out {
        let hashes: Vec<&str> = loaded.iter().map(|(_, c)| c.config_hash.as_str()).collect();
        let seed = (loaded.len() == 1).then_some(first.root_seed);
        write_summary_csv(&dir.join("summary.csv"), &header(first, "eval_summary", seed, hashes.join("+")), &rows)?;
    }
    Ok(EvalOutcome { rows, traces: all_traces })
}

fn header(ck: &Checkpoint, kind: &'static str, seed: Option<u64>, config_hash: String) -> Header {
    Header {
        kind,
        algo: ck.algo,
        env: ck.env.name().into(),
        seed,
        config_hash,
    }
}

fn file_label(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

/// Writes the first `per_mode` episodes of each mode and split.
pub fn dump_trajectories(
    dir: &Path,
    label: &str,
    header: &Header,
    traces: &[(Split, Vec<EpisodeTrace>)],
    per_mode: usize,
) -> Result<()> {
    let header = Header {
        kind: "trajectory",
        ..header.clone()
    };
    for (split, eps) in traces {
        for mode in [Mode::Right, Mode::Left] {
            for (i, t) in eps.iter().filter(|t| t.mode == mode).take(per_mode).enumerate() {
                let name = format!("traj_{}_{}_{}_{i}.csv", file_label(label), split.as_str(), mode.as_str());
                write_trajectory_csv(&dir.join(name), &header, t)?;
            }
        }
    }
    Ok(())
}

/// Fixed-width text table of summary rows for the terminal.
pub fn format_rows(rows: &[SummaryRow]) -> String {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    let si = |a: &Aggregate| match &a.si {
        Some(Ok(v)) => format!("{v:.2}"),
        Some(Err(_)) => "undefined".into(),
        None => "-".into(),
    };
    let mut s = format!(
        "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>10} {:>9} {:>9}\n",
        "label", "mean_sr", "max_sr", "sr_R", "sr_L", "si", "tracking", "cot", "ood_sr"
    );
    for r in rows {
        let n = &r.nominal;
        s.push_str(&format!(
            "{:<16} {:>8.3} {:>8.3} {:>8} {:>8} {:>8} {:>10} {:>9} {:>9}\n",
            r.label,
            n.mean_sr,
            n.max_sr,
            f(n.sr_right),
            f(n.sr_left),
            si(n),
            f(n.tracking),
            f(n.cot),
            f(r.ood.as_ref().map(|o| o.mean_sr)),
        ));
    }
    s
}
