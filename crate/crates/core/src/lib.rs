pub mod bernstein;
pub mod config;
pub mod demand;
pub mod export;
pub mod feasible;
pub mod oracle;
pub mod poa;
pub mod prices;
pub mod solvers;
pub mod verify;
