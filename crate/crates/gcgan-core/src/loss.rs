//! Adversarial losses with probability clamping.
//!
//! The discriminator outputs are clamped to `[eps, 1-eps]` before any log,
//! which keeps both objectives finite for every parameter setting. The
//! discriminator's maximization objective is implemented as minimizing its
//! negation.

use crate::error::CoreError;
use crate::tape::{NodeId, Tape};

/// Saturating generator objective: `log(1 - clamp(D(G(Z))))`.
pub fn generator_loss(
    tape: &mut Tape,
    d_fake: NodeId,
    clamp_eps: f64,
) -> Result<NodeId, CoreError> {
    let c = tape.clamp(d_fake, clamp_eps, 1.0 - clamp_eps);
    let one_minus = tape.affine(c, -1.0, 1.0);
    tape.log(one_minus)
}

/// Non-saturating alternative: `-log(clamp(D(G(Z))))`.
pub fn generator_loss_nonsaturating(
    tape: &mut Tape,
    d_fake: NodeId,
    clamp_eps: f64,
) -> Result<NodeId, CoreError> {
    let c = tape.clamp(d_fake, clamp_eps, 1.0 - clamp_eps);
    let l = tape.log(c)?;
    Ok(tape.affine(l, -1.0, 0.0))
}

/// Discriminator objective as a minimization:
/// `-(log(clamp(D(x))) + log(1 - clamp(D(x_hat))))`.
pub fn discriminator_loss(
    tape: &mut Tape,
    d_real: NodeId,
    d_fake: NodeId,
    clamp_eps: f64,
) -> Result<NodeId, CoreError> {
    let cr = tape.clamp(d_real, clamp_eps, 1.0 - clamp_eps);
    let log_real = tape.log(cr)?;
    let cf = tape.clamp(d_fake, clamp_eps, 1.0 - clamp_eps);
    let one_minus = tape.affine(cf, -1.0, 1.0);
    let log_fake = tape.log(one_minus)?;
    let sum = tape.add(log_real, log_fake)?;
    Ok(tape.affine(sum, -1.0, 0.0))
}
