//! Vector fields with exact symbolic coefficients, Lie brackets, finite lists
//! and sampled control checks.

pub mod control;
pub mod expr;
pub mod field;
pub mod list;
pub mod parser;

pub use expr::{Coef, Expr, Var};
pub use field::{DegreedField, FieldConfig, VField};
pub use list::{closure_report, constant_combination, generate_list, proportional, GeneratedList};
pub use control::{check_control, check_control_surface, check_d, lists_equivalent, ControlCertificate, ControlStatus, SamplingPlan};
pub use parser::parse_expr;
