use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use g4d_core::propagate::{build_anchor_pair, match_anchors, propagate_with};
use g4d_core::refine::{refine, RefineConfig};
use g4d_core::render::render_color;
use g4d_core::scene::io::save_cloud;
use g4d_core::scene::EditSession;
use g4d_core::uot::SinkhornConfig;
use serde::{Deserialize, Serialize};

use crate::artifacts::{create_dir, frame_path, save_image, save_pair_maps, write_loss_csv, write_text};
use crate::report::{AnchorReport, MatchReport, PipelineReport, PropagationReport, RefineReport, StageTiming};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Anchors,
    Match,
    Propagate,
    Refine,
    Render,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Load => "load",
            Stage::Anchors => "anchors",
            Stage::Match => "match",
            Stage::Propagate => "propagate",
            Stage::Refine => "refine",
            Stage::Render => "render",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: g4d_core::Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> AtStage<T> for g4d_core::Result<T> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    /// Replaces the seed in the session document.
    pub seed: Option<u64>,
    pub stop_after: Stage,
    /// Also write per-pair uncertainty, mask, warp and flow images.
    pub emit_maps: bool,
}

impl RunOptions {
    pub fn new(config: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            out: out.into(),
            seed: None,
            stop_after: Stage::Render,
            emit_maps: false,
        }
    }
}

struct Timer {
    stage: Stage,
    start: Instant,
}

impl Timer {
    fn start(stage: Stage) -> Self {
        log::info!("[{stage}] starting");
        Self {
            stage,
            start: Instant::now(),
        }
    }

    fn stop(self, report: &mut PipelineReport) {
        report.timings.push(StageTiming {
            stage: self.stage,
            seconds: self.start.elapsed().as_secs_f64(),
        });
    }
}

fn finish(report: &PipelineReport, out: &Path) -> Result<(), StageError> {
    write_text(&out.join("report.json"), &report.to_json()).at(report.stopped_after)
}

/// Runs the stages up to `opts.stop_after`, writing artifacts under
/// `opts.out`, and returns the report (also written as `report.json`).
pub fn run_pipeline(opts: &RunOptions) -> Result<PipelineReport, StageError> {
    let out = opts.out.as_path();
    let timer = Timer::start(Stage::Load);
    let mut session = EditSession::load(&opts.config).at(Stage::Load)?;
    if let Some(seed) = opts.seed {
        session.config.seed = seed;
    }
    create_dir(out).at(Stage::Load)?;
    let config = session.config.clone();
    let mut report = PipelineReport {
        seed: config.seed,
        config: config.clone(),
        stopped_after: Stage::Load,
        n_frames: session.n_frames(),
        n_views: session.cameras.len(),
        anchors: None,
        matching: None,
        propagation: None,
        refinement: None,
        warnings: Vec::new(),
        timings: Vec::new(),
    };
    timer.stop(&mut report);
    if opts.stop_after == Stage::Load {
        finish(&report, out)?;
        return Ok(report);
    }

    let timer = Timer::start(Stage::Anchors);
    let anchors = build_anchor_pair(&session.source_cloud, &session.edited_cloud, &config).at(Stage::Anchors)?;
    anchors.src.save(&out.join("anchors_source.json")).at(Stage::Anchors)?;
    anchors.edit.save(&out.join("anchors_edited.json")).at(Stage::Anchors)?;
    report.anchors = Some(AnchorReport {
        n_source: anchors.src.len(),
        n_edit: anchors.edit.len(),
        n_lines: anchors.n_lines,
        d_mean_source: anchors.src.d_mean(),
        d_mean_edit: anchors.edit.d_mean(),
    });
    for (name, set, cloud) in [
        ("source", &anchors.src, &session.source_cloud),
        ("edited", &anchors.edit, &session.edited_cloud),
    ] {
        let groups = cloud.len().div_ceil(config.k);
        if set.len() * 20 < groups * 19 {
            report.warn(
                Stage::Anchors,
                format!("only {} of about {groups} {name} neighborhoods were anchored", set.len()),
            );
        }
    }
    report.stopped_after = Stage::Anchors;
    timer.stop(&mut report);
    if opts.stop_after == Stage::Anchors {
        finish(&report, out)?;
        return Ok(report);
    }

    let timer = Timer::start(Stage::Match);
    let matching = match_anchors(&anchors.src, &anchors.edit, &SinkhornConfig::from(&config)).at(Stage::Match)?;
    let corr_json = serde_json::to_string_pretty(&matching.corr).map_err(g4d_core::Error::from).at(Stage::Match)?;
    write_text(&out.join("correspondence.json"), &corr_json).at(Stage::Match)?;
    let plan = &matching.plan;
    report.matching = Some(MatchReport {
        iterations: plan.iterations,
        converged: plan.converged,
        marginal_err: plan.marginal_err,
        welsch_beta: matching.cost.beta,
    });
    if !plan.converged {
        report.warn(
            Stage::Match,
            format!(
                "Sinkhorn did not converge in {} iterations (last change {:e}); continuing with the last plan",
                plan.iterations, plan.marginal_err
            ),
        );
    }
    report.stopped_after = Stage::Match;
    timer.stop(&mut report);
    if opts.stop_after == Stage::Match {
        finish(&report, out)?;
        return Ok(report);
    }

    let timer = Timer::start(Stage::Propagate);
    let propagation = propagate_with(
        &session.source_cloud,
        &session.edited_cloud,
        &session.deformation,
        anchors,
        matching,
        config.ndd_k,
    )
    .at(Stage::Propagate)?;
    let prop_dir = out.join("propagated");
    create_dir(&prop_dir).at(Stage::Propagate)?;
    for (t, cloud) in (1..).zip(&propagation.frames) {
        save_cloud(&frame_path(&prop_dir, t), cloud).at(Stage::Propagate)?;
    }
    let fallbacks = propagation.influence.fallbacks().len();
    if fallbacks > 0 {
        report.warn(
            Stage::Propagate,
            format!("{fallbacks} edited Gaussians had negligible influence weights and follow their nearest source Gaussian"),
        );
    }
    report.propagation = Some(PropagationReport {
        weight_fallbacks: fallbacks,
        ndd: propagation.ndd.clone(),
    });
    report.stopped_after = Stage::Propagate;
    timer.stop(&mut report);
    if opts.stop_after == Stage::Propagate {
        finish(&report, out)?;
        return Ok(report);
    }

    let timer = Timer::start(Stage::Refine);
    let outcome = refine(&propagation.frames, &session.cameras, &RefineConfig::from(&config)).at(Stage::Refine)?;
    for notice in &outcome.notices {
        report.warn(Stage::Refine, notice.clone());
    }
    let refined_dir = out.join("refined");
    create_dir(&refined_dir).at(Stage::Refine)?;
    for (t, cloud) in (1..).zip(&outcome.frames) {
        save_cloud(&frame_path(&refined_dir, t), cloud).at(Stage::Refine)?;
    }
    write_loss_csv(&out.join("loss.csv"), &outcome.trace).at(Stage::Refine)?;
    if opts.emit_maps {
        let maps_dir = out.join("maps");
        create_dir(&maps_dir).at(Stage::Refine)?;
        for maps in &outcome.maps {
            save_pair_maps(&maps_dir, maps).at(Stage::Refine)?;
        }
    }
    let last = outcome.trace.last().map_or(0, |r| r.step);
    report.refinement = Some(RefineReport {
        pairs: outcome.maps.len(),
        masked_pixels: outcome.maps.iter().map(|m| m.mask.count()).sum(),
        steps: last,
        initial_l_fore: outcome.step_total(0, |r| r.l_fore),
        final_l_fore: outcome.step_total(last, |r| r.l_fore),
        initial_l_refine: outcome.step_total(0, |r| r.l_refine),
        final_l_refine: outcome.step_total(last, |r| r.l_refine),
    });
    report.stopped_after = Stage::Refine;
    timer.stop(&mut report);
    if opts.stop_after == Stage::Refine {
        finish(&report, out)?;
        return Ok(report);
    }

    let timer = Timer::start(Stage::Render);
    let render_dir = out.join("renders");
    create_dir(&render_dir).at(Stage::Render)?;
    for (t, cloud) in (1..).zip(&outcome.frames) {
        for (v, cam) in session.cameras.iter().enumerate() {
            let maps = render_color(cloud, cam);
            save_image(&render_dir, &format!("frame_{t:04}_view_{v:02}"), &maps.color).at(Stage::Render)?;
        }
    }
    report.stopped_after = Stage::Render;
    timer.stop(&mut report);
    finish(&report, out)?;
    Ok(report)
}
