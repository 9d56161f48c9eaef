pub mod oracle;
pub mod report;
pub mod resolvent;
pub mod simulate;
