#![allow(dead_code)]

pub mod gradcheck;
pub mod gradsuite;
pub mod invariants;
pub mod selection;
pub mod toy;
