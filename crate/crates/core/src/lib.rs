pub mod bench;
pub mod codec;
pub mod exec;
pub mod generate;
pub mod interchange;
pub mod queries;
pub mod query;
pub mod schema;
pub mod storage;
pub mod transform;
