pub mod linalg;
pub mod sdp;
pub mod superop;
pub mod groupsrep;
pub mod fourier;
pub mod rbsim;
pub mod decaylab;
pub mod polefind;
pub mod fit;
pub mod filterrb;
pub mod gaugelab;
