pub mod model;
pub mod lp;
pub mod parser;
pub mod binarize;
pub mod alm;
pub mod verify;
pub mod derive;
