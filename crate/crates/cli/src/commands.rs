
use g4d_core::math::Vec3;
use g4d_core::propagate::{build_anchor_pair, neighborhood_distance_deviation};
use g4d_core::render::render_color;
use g4d_core::scene::io::load_cloud;
use g4d_core::scene::{deform_source, EditSession, SessionFile};
use g4d_oracle::{make_occlusion_scene, RigidEdit, RigidScene};
use serde::Serialize;

use crate::args::{Cli, Command, GenArgs, MetricsArgs, RenderArgs, SceneKind, StageArgs};
use crate::artifacts::{create_dir, frame_path, save_image, write_text};
use crate::pipeline::{run_pipeline, RunOptions, Stage, StageError};
use crate::{EXIT_FAILURE, EXIT_NOT_CONVERGED};

fn stage_err(stage: Stage) -> impl Fn(g4d_core::Error) -> StageError {
    move |source| StageError { stage, source }
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Gen(a) => generate(&a).map(|_| 0),
        Command::Anchors(a) => staged(&a, Stage::Anchors),
        Command::Match(a) => staged(&a, Stage::Match),
        Command::Propagate(a) => staged(&a, Stage::Propagate),
        Command::Refine(a) => staged(&a, Stage::Refine),
        Command::Run(a) => staged(&a.stage, a.stop_after),
        Command::Render(a) => render(&a).map(|_| 0),
        Command::Metrics(a) => metrics(&a).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn staged(a: &StageArgs, stop_after: Stage) -> Result<i32, StageError> {
    let opts = RunOptions {
        config: a.config.clone(),
        out: a.out.clone(),
        seed: a.seed,
        stop_after,
        emit_maps: a.emit_maps,
    };
    let report = run_pipeline(&opts)?;
    Ok(if report.converged() { 0 } else { EXIT_NOT_CONVERGED })
}

fn generate(a: &GenArgs) -> Result<(), StageError> {
    let err = stage_err(Stage::Load);
    let mut scene = match a.scene {
        SceneKind::Occlusion => make_occlusion_scene(a.seed),
        kind => {
            let edit = match kind {
                SceneKind::RigidIdentity => RigidEdit::Identity,
                SceneKind::RigidClone => RigidEdit::RecolorAndClone,
                _ => RigidEdit::Recolor,
            };
            if a.n_gaussians == 0 || a.frames == 0 {
                return Err(err(g4d_core::Error::InvalidConfig("--n-gaussians and --frames must be positive".into())));
            }
            let axis = Vec3::new(a.axis[0], a.axis[1], a.axis[2]);
            if !(axis.norm() > 1e-12) {
                return Err(err(g4d_core::Error::InvalidConfig("--axis must be non-zero".into())));
            }
            RigidScene::new(a.n_gaussians, axis, a.omega, a.frames, a.seed).edit(edit).build()
        }
    };
    if let Some(n) = a.n_rays {
        scene.config.n_rays = n;
    }
    if let Some(n) = a.refine_iters {
        scene.config.refine_iters = n;
    }
    scene.config.validate().map_err(&err)?;
    let path = scene.write(&a.out).map_err(&err)?;
    println!("{}", path.display());
    Ok(())
}

fn render(a: &RenderArgs) -> Result<(), StageError> {
    let err = stage_err(Stage::Render);
    let session = SessionFile::read(&a.config).map_err(stage_err(Stage::Load))?;
    let cloud = load_cloud(&a.cloud).map_err(stage_err(Stage::Load))?;
    create_dir(&a.out).map_err(&err)?;
    for (v, cam) in session.cameras.iter().enumerate() {
        let maps = render_color(&cloud, cam);
        save_image(&a.out, &format!("view_{v:02}"), &maps.color).map_err(&err)?;
        save_image(&a.out, &format!("view_{v:02}_alpha"), &maps.alpha_acc).map_err(&err)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Metrics {
    /// NDD of the edited anchors per frame.
    ndd: Vec<f64>,
    /// Largest coordinate difference to the source motion applied
    /// directly to the edited cloud; only when both clouds are index-aligned.
    source_motion_deviation: Option<Vec<f64>>,
}

fn metrics(a: &MetricsArgs) -> Result<(), StageError> {
    let err = stage_err(Stage::Propagate);
    let mut session = EditSession::load(&a.config).map_err(stage_err(Stage::Load))?;
    if let Some(seed) = a.seed {
        session.config.seed = seed;
    }
    let frames = (1..=session.n_frames())
        .map(|t| load_cloud(&frame_path(&a.frames, t)))
        .collect::<g4d_core::Result<Vec<_>>>()
        .map_err(stage_err(Stage::Load))?;
    let anchors = build_anchor_pair(&session.source_cloud, &session.edited_cloud, &session.config)
        .map_err(stage_err(Stage::Anchors))?;
    let at1 = anchors.edit.positions_at(&frames[0].positions()).map_err(&err)?;
    let mut ndd = Vec::with_capacity(frames.len());
    for f in &frames {
        let at_t = anchors.edit.positions_at(&f.positions()).map_err(&err)?;
        ndd.push(neighborhood_distance_deviation(&at1, &at_t, session.config.ndd_k).map_err(&err)?);
    }
    let aligned = session.edited_cloud.len() == session.source_cloud.len();
    let source_motion_deviation = if aligned {
        let mut dev = Vec::with_capacity(frames.len());
        for (t, f) in (1..).zip(&frames) {
            let direct = deform_source(&session.edited_cloud, &session.deformation, t).map_err(&err)?;
            dev.push(
                f.iter()
                    .zip(&direct)
                    .map(|(a, b)| (a.mu() - b.mu()).amax())
                    .fold(0.0, f64::max),
            );
        }
        Some(dev)
    } else {
        None
    };
    let json = serde_json::to_string_pretty(&Metrics {
        ndd,
        source_motion_deviation,
    })
    .expect("metrics serialize");
    match &a.out {
        Some(path) => write_text(path, &json).map_err(&err),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

