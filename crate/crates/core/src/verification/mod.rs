//! Executable checks: manufactured-solution convergence studies and seeded
//! certification campaigns for the pointwise stress inequalities.

pub mod campaign;
pub mod jacobian;
pub mod mms;

pub use campaign::{inequality_campaign, CampaignReport, Check, CheckSummary};
pub use jacobian::{jacobian_check, JacobianReport};
pub use mms::{convergence_study, manufacture, ConvergenceRow, ConvergenceTable, ManufacturedCase, StreamFunction};
