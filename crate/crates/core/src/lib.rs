pub mod circuit;
pub mod cli;
pub mod derand;
pub mod gfield;
pub mod netsim;
pub mod protocol;
pub mod rmldc;
