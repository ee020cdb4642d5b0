//! Baseline and model-driven operating points as [`Transceiver`]s.

use std::ops::Range;
use std::sync::Arc;

use crate::baseline::{baseline_precoder, maprt_in_range, mle_decode, Constellation, DetectorOutput, SteeringGrid};
use crate::error::Result;
use crate::harness::eval::Transceiver;
use crate::mdlearn::{md_isac_precoder, MdReceiver, SoftmaxOptions, TrainableSteering};
use crate::nnlearn::{angle_forward, beamformer_forward, presence_logit, AeParams, Net};
use crate::scenario::{AngularSector, CommDraw, RadarDraw, C64};

#[derive(Debug, Clone)]
pub struct BaselineSystem {
    grid: Arc<SteeringGrid>,
    range: Range<usize>,
    refine: bool,
    v: Vec<C64>,
    constellation: Constellation,
}

impl BaselineSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Arc<SteeringGrid>,
        target: &AngularSector,
        comm: &AngularSector,
        rho: f64,
        phi: f64,
        e_tx: f64,
        m: usize,
        refine: bool,
    ) -> Result<Self> {
        let v = baseline_precoder(&grid, target, comm, rho, phi, e_tx)?;
        Ok(Self { range: grid.sector_range(target)?, grid, refine, v, constellation: Constellation::qam(m)? })
    }
}

impl Transceiver for BaselineSystem {
    fn precoder(&self) -> &[C64] {
        &self.v
    }

    fn symbol(&self, m: usize) -> C64 {
        self.constellation.points()[m]
    }

    fn sense(&self, draw: &RadarDraw) -> DetectorOutput {
        maprt_in_range(&draw.y_r, &self.grid, self.range.clone(), self.refine)
    }

    fn decode(&self, draw: &CommDraw) -> usize {
        mle_decode(draw.y_c, draw.kappa, &self.constellation)
    }
}

#[derive(Debug, Clone)]
pub struct MdSystem {
    receiver: MdReceiver,
    v: Vec<C64>,
    constellation: Constellation,
}

impl MdSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: &TrainableSteering,
        target: &AngularSector,
        comm: &AngularSector,
        omega_r: f64,
        phi: f64,
        e_tx: f64,
        m: usize,
        softmax: SoftmaxOptions,
    ) -> Result<Self> {
        Ok(Self {
            receiver: MdReceiver::new(a, target, softmax)?,
            v: md_isac_precoder(a, target, comm, omega_r, phi, e_tx)?,
            constellation: Constellation::qam(m)?,
        })
    }
}

impl Transceiver for MdSystem {
    fn precoder(&self) -> &[C64] {
        &self.v
    }

    fn symbol(&self, m: usize) -> C64 {
        self.constellation.points()[m]
    }

    fn sense(&self, draw: &RadarDraw) -> DetectorOutput {
        self.receiver.sense(&draw.y_r)
    }

    fn decode(&self, draw: &CommDraw) -> usize {
        mle_decode(draw.y_c, draw.kappa, &self.constellation)
    }
}

/// Autoencoder operating point. The detection statistic is the presence
/// logit: thresholding it is equivalent to thresholding the sigmoid output,
/// but it keeps resolution where the probability saturates at 1.
#[derive(Debug, Clone)]
pub struct NnSystem {
    params: AeParams,
    target: AngularSector,
    v: Vec<C64>,
    points: Vec<C64>,
}

impl NnSystem {
    pub fn new(params: AeParams, target: &AngularSector, comm: &AngularSector, e_tx: f64) -> Result<Self> {
        Ok(Self {
            v: beamformer_forward(&params, target, comm, e_tx)?,
            points: params.constellation(),
            target: *target,
            params,
        })
    }
}

impl Transceiver for NnSystem {
    fn precoder(&self) -> &[C64] {
        &self.v
    }

    fn symbol(&self, m: usize) -> C64 {
        self.points[m]
    }

    fn sense(&self, draw: &RadarDraw) -> DetectorOutput {
        DetectorOutput {
            statistic: presence_logit(&self.params, &draw.y_r, &self.target),
            theta_hat: angle_forward(&self.params, &draw.y_r, &self.target),
            index: 0,
        }
    }

    fn decode(&self, draw: &CommDraw) -> usize {
        let z = self.params.net(Net::Receiver).logits(&[draw.y_c.re, draw.y_c.im, draw.kappa.re, draw.kappa.im]);
        // first maximum wins, like the other decoders
        let mut best = 0;
        for (i, v) in z.iter().enumerate() {
            if *v > z[best] {
                best = i;
            }
        }
        best
    }
}
