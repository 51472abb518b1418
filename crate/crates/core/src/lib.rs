pub mod bcc;
pub mod bits;
pub mod error;
pub mod gf;
pub mod bic;
pub mod protocols;
pub mod sim;
