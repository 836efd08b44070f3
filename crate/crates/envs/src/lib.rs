//! Environment side of the benchmark: the worker wire protocol, in-process
//! and remote environment handles, the session router with the root
//! environment, and deterministic desktop and phone mocks.

pub mod conformance;
pub mod data;
pub mod desktop;
pub mod echo;
pub mod fixture;
pub mod handle;
pub mod host;
pub mod phone;
pub mod protocol;
pub mod root;
pub mod router;
pub mod server;

pub use desktop::MockDesktop;
pub use echo::EchoEnv;
pub use fixture::Fixture;
pub use handle::{EnvHandle, LocalEnv, RemoteEnv};
pub use host::{EnvHost, Environment, HandlerError};
pub use phone::MockPhone;
pub use protocol::{ConnectError, EnvironmentSpec, ServeError, TransportError, WireOp};
pub use root::{RootState, ROOT_ENV};
pub use router::{RouteError, SessionRouter};
pub use server::{serve, Worker};
