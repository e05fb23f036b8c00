pub mod contact_plan;
pub mod forwarding;
pub mod oracle;
pub mod routing;
pub mod sim;
