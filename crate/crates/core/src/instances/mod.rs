//! The shipped language instances: call-by-value lambda calculus with
//! shift/reset, and a call-by-name PCF.

mod machine;

pub use machine::{
    machine_step, machine_weak_labels, oracle_compare, oracle_compare_in, random_programs, Machine, MachineError,
    MachineOutcome, OracleReport, Run, RunEnd, WeakLabels,
};

use crate::sig::Signature;
use crate::syntax::parse_signature;

pub const SHIFT_RESET_SIG: &str = include_str!("../../sigs/shiftreset.sig");
pub const PCF_SIG: &str = include_str!("../../sigs/pcf.sig");

pub fn shift_reset() -> Signature {
    parse_signature(SHIFT_RESET_SIG).expect("shipped shiftreset.sig parses")
}

pub fn pcf() -> Signature {
    parse_signature(PCF_SIG).expect("shipped pcf.sig parses")
}
