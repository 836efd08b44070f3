//! Session router: dispatches calls by environment name and owns the root
//! environment.

use std::collections::BTreeMap;

use gdt_core::{ActionCall, ActionKind, ActionRegistry, ActionResult, RegistryError};
use thiserror::Error;

use crate::handle::{EnvHandle, LocalEnv};
use crate::protocol::{EnvironmentSpec, TransportError};
use crate::root::{RootEnv, RootState, ROOT_ENV};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RouteError {
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RouterError {
    #[error("environment `{0}` is already attached")]
    DuplicateEnvironment(String),
    #[error("the name `root` is reserved")]
    ReservedName,
}

pub struct SessionRouter {
    root: LocalEnv<RootEnv>,
    envs: BTreeMap<String, Box<dyn EnvHandle>>,
}

impl Default for SessionRouter {
    fn default() -> Self {
        Self::new()
    }
}

impl SessionRouter {
    pub fn new() -> Self {
        SessionRouter {
            root: LocalEnv::new(RootEnv::default()).expect("root spec is valid"),
            envs: BTreeMap::new(),
        }
    }

    pub fn attach(&mut self, handle: Box<dyn EnvHandle>) -> Result<(), RouterError> {
        let name = handle.name().to_owned();
        if name == ROOT_ENV {
            return Err(RouterError::ReservedName);
        }
        if self.envs.contains_key(&name) {
            return Err(RouterError::DuplicateEnvironment(name));
        }
        self.envs.insert(name, handle);
        Ok(())
    }

    pub fn with(mut self, handle: impl EnvHandle + 'static) -> Result<Self, RouterError> {
        self.attach(Box::new(handle))?;
        Ok(self)
    }

    /// Environment names, root last.
    pub fn env_names(&self) -> Vec<&str> {
        self.envs.keys().map(String::as_str).chain([ROOT_ENV]).collect()
    }

    pub fn has_env(&self, name: &str) -> bool {
        name == ROOT_ENV || self.envs.contains_key(name)
    }

    pub fn handle(&self, name: &str) -> Option<&dyn EnvHandle> {
        if name == ROOT_ENV {
            Some(&self.root)
        } else {
            self.envs.get(name).map(|b| b.as_ref())
        }
    }

    /// Specs of every environment, root last.
    pub fn specs(&self) -> Vec<&EnvironmentSpec> {
        self.env_names()
            .into_iter()
            .filter_map(|n| self.handle(n).map(|h| h.spec()))
            .collect()
    }

    /// Every action of every attached environment.
    pub fn registry(&self) -> ActionRegistry {
        ActionRegistry::from_schemas(self.specs().into_iter().flat_map(|s| s.actions.iter().cloned()))
            .expect("environment names are unique")
    }

    /// Actions an agent may call: regular actions only. Observation actions
    /// are run by the harness, evaluators by the graph evaluator.
    pub fn agent_registry(&self) -> Result<ActionRegistry, RegistryError> {
        ActionRegistry::from_schemas(
            self.specs()
                .into_iter()
                .flat_map(|s| s.actions.iter())
                .filter(|a| a.kind == ActionKind::Regular)
                .cloned(),
        )
    }

    pub fn route(&self, call: &ActionCall) -> Result<ActionResult, RouteError> {
        let handle = self
            .handle(&call.env_name)
            .ok_or_else(|| RouteError::UnknownEnvironment(call.env_name.clone()))?;
        Ok(handle.execute(call)?)
    }

    pub fn root_state(&self) -> RootState {
        self.root.with_env(|r| r.state.clone())
    }

    /// Resets every environment and clears the root state. Stops at the
    /// first failure, which names the environment.
    pub fn reset_all(&self) -> Result<(), TransportError> {
        for handle in self.envs.values() {
            handle.reset()?;
        }
        self.root.reset()
    }
}
