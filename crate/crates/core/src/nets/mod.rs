//! Network definitions: the encoder-decoder generator and its fusion modes,
//! the WGAN critic, the frozen feature network and the two-level
//! progressive composition.
//!
//! Parameters live in a [`ParamSet`] with dotted names. A forward pass looks
//! them up through a [`Bound`] view that maps each name to a graph variable,
//! so the same weights can be bound as trainable leaves in one graph and as
//! constants in another.

mod discriminator;
mod featurenet;
mod generator;
mod progressive;

use std::collections::HashMap;

use mcsr_autodiff::{Graph, ParamSet, Tensor, Var};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

pub use discriminator::{Discriminator, DISC_CHANNELS, DISC_HIDDEN};
pub use featurenet::{FeatureNet, FEATURE_CHANNELS, FEATURE_TAPS};
pub use generator::{FusionMode, GenInput, Generator, GeneratorArch, InputSource};
pub use progressive::Progressive;

/// Parameters of one network bound into a graph.
pub struct Bound<'g> {
    vars: HashMap<String, Var<'g>>,
    order: Vec<String>,
}

impl<'g> Bound<'g> {
    /// Binds every tensor as a trainable leaf.
    pub fn leaves(params: &ParamSet, graph: &'g Graph) -> Self {
        Self::from_vars(params, params.bind(graph))
    }

    /// Binds every tensor as a constant.
    pub fn frozen(params: &ParamSet, graph: &'g Graph) -> Self {
        Self::from_vars(params, params.bind_frozen(graph))
    }

    fn from_vars(params: &ParamSet, vars: Vec<Var<'g>>) -> Self {
        Self::from_named(params.names().iter().cloned().zip(vars))
    }

    /// View over variables created elsewhere.
    pub fn from_named(named: impl IntoIterator<Item = (String, Var<'g>)>) -> Self {
        let mut order = Vec::new();
        let mut vars = HashMap::new();
        for (n, v) in named {
            order.push(n.clone());
            vars.insert(n, v);
        }
        Bound { vars, order }
    }

    pub fn get(&self, name: &str) -> Result<Var<'g>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {name:?}")))
    }

    /// Variables in the order of the original parameter set.
    pub fn vars(&self) -> Vec<Var<'g>> {
        self.order.iter().map(|n| self.vars[n]).collect()
    }

    /// Adds another set's variables; names must not collide.
    pub fn extend(&mut self, other: Bound<'g>) -> Result<()> {
        for name in other.order {
            if self.vars.contains_key(&name) {
                return Err(Error::InvalidArgument(format!("parameter {name:?} bound twice")));
            }
            self.vars.insert(name.clone(), other.vars[&name]);
            self.order.push(name);
        }
        Ok(())
    }
}

/// He-normal tensor, `N(0, 2/fan_in)`, drawn from the stream
/// `init/<name>` so each parameter is independent of declaration order.
pub(crate) fn he_normal(seed: u64, name: &str, shape: &[usize], fan_in: usize) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut r = rng::stream(seed, &format!("init/{name}"), 0);
    Tensor::from_fn(shape.to_vec(), |_| normal.sample(&mut r))
}

/// Checks that `params` holds exactly the names and shapes of `expected`.
pub(crate) fn check_layout(what: &str, expected: &ParamSet, params: &ParamSet) -> Result<()> {
    for (name, t) in expected.iter() {
        match params.get(name) {
            None => return Err(Error::InvalidArgument(format!("{what}: missing parameter {name:?}"))),
            Some(p) if p.shape() != t.shape() => {
                return Err(Error::SizeMismatch(format!(
                    "{what}: parameter {name:?} has shape {:?}, expected {:?}",
                    p.shape(),
                    t.shape()
                )))
            }
            Some(_) => {}
        }
    }
    if params.len() != expected.len() {
        let extra: Vec<&String> = params.names().iter().filter(|n| expected.get(n).is_none()).collect();
        return Err(Error::InvalidArgument(format!(
            "{what}: unexpected parameters {extra:?}"
        )));
    }
    Ok(())
}

/// Channel count and side of a square `N×C×H×W` or `C×H×W` value.
pub(crate) fn channels_and_side(shape: &[usize]) -> Option<(usize, usize)> {
    match *shape {
        [_, c, h, w] | [c, h, w] if h == w => Some((c, h)),
        _ => None,
    }
}
