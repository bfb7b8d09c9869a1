//! Learned hint-set recommendation: rank the candidate plans a query gets
//! under different planner knob settings and pick the best one.

pub mod datastore;
pub mod eval;
pub mod gateway;
pub mod hint_catalog;
pub mod ltr;
pub mod plan_ir;
pub mod scorer;
pub mod synthetic;
pub mod tensor;
pub mod trainer;
