//! Oracle policy that always shows a fixed creative. Used to calibrate the
//! regret pipeline: pointed at the environment's true best creative it must
//! accumulate exactly zero regret.

use rand::RngCore;

use crate::graph::Creative;

use super::Policy;

pub struct ClairvoyantPolicy {
    creative: Creative,
}

impl ClairvoyantPolicy {
    pub fn new(creative: Creative) -> Self {
        Self { creative }
    }
}

impl Policy for ClairvoyantPolicy {
    fn name(&self) -> &'static str {
        "clairvoyant"
    }

    fn select(&mut self, _rng: &mut dyn RngCore) -> Creative {
        self.creative.clone()
    }

    fn observe(&mut self, _creative: &Creative, _clicked: bool) {}

    fn reset(&mut self) {}
}
