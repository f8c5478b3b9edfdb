//! `simulate`: one grasp attempt per generated scene, adjudicated by the oracle.

use ogrg_core::data::Example;
use ogrg_core::eval::{grasp_episode, simulate as model_episodes};
use ogrg_geometry::{grasp_success_rate, GraspOutcome, GraspPose};
use ogrg_synth::{gen_sample, grasp_success_oracle, DatasetRecord, GenConfig, SceneSample};

use crate::error::{CliError, Result};
use crate::runs::LoadedRun;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Predictor {
    /// Grounding network, then the grasp network on its mask.
    Model,
    /// Grasp network on the ground-truth mask.
    GtMask,
    /// The first annotated grasp of the target.
    Oracle,
}

impl Predictor {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(Predictor::Model),
            "gt-mask" => Ok(Predictor::GtMask),
            "oracle" => Ok(Predictor::Oracle),
            _ => Err(CliError::usage(format!("unknown predictor {s:?}; use model, gt-mask or oracle"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Predictor::Model => "model",
            Predictor::GtMask => "gt-mask",
            Predictor::Oracle => "oracle",
        }
    }
}

pub struct SimReport {
    pub episodes: usize,
    /// Percent of attempts that lifted the target (and only it).
    pub success_rate: f64,
    /// Percent of attempts that lifted some object.
    pub any_rate: f64,
}

pub fn scenes(cfg: &GenConfig, n: u64) -> Result<Vec<SceneSample>> {
    (0..n)
        .map(|i| gen_sample(cfg, i).map_err(|e| CliError::data(format!("scene {i}: {e}"))))
        .collect()
}

fn oracle_outcome(s: &SceneSample) -> Result<GraspOutcome> {
    let g = s
        .grasps_native
        .first()
        .ok_or_else(|| CliError::data(format!("scene {} has no annotated grasp", s.id)))?;
    let pose = GraspPose {
        x: g.cx,
        y: g.cy,
        z: 0.0,
        theta: g.angle,
        l: g.width,
    };
    let o = grasp_success_oracle(&s.scene, s.target(), &pose);
    Ok(GraspOutcome {
        grasped_any: o.grasped_any,
        grasped_target: o.grasped_target,
    })
}

pub fn run(
    predictor: Predictor,
    grounding: Option<&LoadedRun>,
    mgn: Option<&LoadedRun>,
    scenes: &[SceneSample],
) -> Result<SimReport> {
    let missing = |what: &str| CliError::usage(format!("predictor {} needs {what}", predictor.name()));
    let outcomes: Vec<GraspOutcome> = match predictor {
        Predictor::Oracle => scenes.iter().map(oracle_outcome).collect::<Result<_>>()?,
        Predictor::GtMask => {
            let m = mgn.ok_or_else(|| missing("--mgn"))?.grasp()?;
            let vocab = ogrg_core::Vocab::synthetic();
            scenes
                .iter()
                .map(|s| {
                    // the grasp network never reads the expression
                    let e = Example::from_record(&DatasetRecord::from_sample(s), &vocab, 1)?;
                    Ok(grasp_episode(m, s, &e, &e.mask_f32())?.outcome)
                })
                .collect::<Result<_>>()?
        }
        Predictor::Model => {
            let g = grounding.ok_or_else(|| missing("--checkpoint"))?;
            let m = mgn.ok_or_else(|| missing("--mgn"))?.grasp()?;
            model_episodes(g.grounding()?, m, scenes, &g.vocab)?
                .into_iter()
                .map(|e| e.outcome)
                .collect()
        }
    };
    let any = outcomes.iter().filter(|o| o.grasped_any).count();
    Ok(SimReport {
        episodes: outcomes.len(),
        success_rate: grasp_success_rate(&outcomes)?,
        any_rate: 100.0 * any as f64 / outcomes.len() as f64,
    })
}
