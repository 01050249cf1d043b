use crate::error::{Error, Result};
use crate::geometry::{self, Centerline, NormalizedCenterline, TTA_ANGLES_DEG};

use super::arch::{ArchConfig, ModelParams};
use super::network::{to_input, Workspace};

/// Sub-models sharing one architecture, averaged in probability space over
/// members and test-time rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub arch: ArchConfig,
    pub members: Vec<ModelParams>,
    pub tta_angles_deg: Vec<f64>,
}

impl Ensemble {
    pub fn new(arch: ArchConfig, members: Vec<ModelParams>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Structural("ensemble needs at least one member".into()));
        }
        if let Some(m) = members.iter().find(|m| m.arch() != &arch) {
            return Err(Error::Structural(format!(
                "member architecture {:?} differs from {:?}",
                m.arch(),
                arch
            )));
        }
        Ok(Self {
            arch,
            members,
            tta_angles_deg: TTA_ANGLES_DEG.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Every (rotation, member) probability, rotation-major.
    pub fn member_outputs(&self, c: &NormalizedCenterline) -> Result<Vec<f64>> {
        let mut ws = Workspace::new(&self.arch);
        let mut out = Vec::with_capacity(self.tta_angles_deg.len() * self.members.len());
        for variant in geometry::tta_variants_with(c, &self.tta_angles_deg) {
            let input = to_input(&variant);
            for m in &self.members {
                out.push(ws.forward(m, &input)?);
            }
        }
        Ok(out)
    }

    pub fn predict_normalized(&self, c: &NormalizedCenterline) -> Result<f64> {
        let outputs = self.member_outputs(c)?;
        Ok(outputs.iter().sum::<f64>() / outputs.len() as f64)
    }

    pub fn predict(&self, c: &Centerline) -> Result<f64> {
        self.predict_normalized(&geometry::normalize(c)?)
    }
}
